//! Checkpoint directories built byte by byte, the way an external exporter
//! would write them, then read back through the library.

use std::fs;
use std::path::Path;

use valbench::store::{checkpoint_dir, load_checkpoint, scan_benchmark, write_checkpoint, StoreError};

fn le_f32(values: &[f32]) -> Vec<u8> {
    values.iter().flat_map(|v| v.to_le_bytes()).collect()
}

fn le_u32(values: &[u32]) -> Vec<u8> {
    values.iter().flat_map(|v| v.to_le_bytes()).collect()
}

struct Arrays {
    features: Vec<f32>,
    logits: Vec<f32>,
    labels: Option<Vec<u32>>,
}

fn write_by_hand(dir: &Path, run: u32, idx: u32, n: usize, dim: usize, classes: usize, splits: &[(&str, Arrays)]) {
    fs::create_dir_all(dir).unwrap();
    let shape = format!(r#"{{"n": {n}, "feature_dim": {dim}}}"#);
    let manifest = format!(
        r#"{{"task_id": "office31_amazon_dslr", "algorithm": "DANN", "run_id": {run}, "checkpoint_index": {idx},
            "num_classes": {classes}, "source_train": {shape}, "source_val": {shape}, "target": {shape}}}"#
    );
    fs::write(dir.join("manifest.json"), manifest).unwrap();
    for (split, arrays) in splits {
        fs::write(dir.join(format!("{split}.features.f32")), le_f32(&arrays.features)).unwrap();
        fs::write(dir.join(format!("{split}.logits.f32")), le_f32(&arrays.logits)).unwrap();
        if let Some(labels) = &arrays.labels {
            fs::write(dir.join(format!("{split}.labels.u32")), le_u32(labels)).unwrap();
        }
    }
}

fn awkward_floats() -> Vec<f32> {
    vec![0.1, -0.0, f32::MIN_POSITIVE, 1.0e-42, 3.4e38, -7.25]
}

fn fixture(dir: &Path) {
    fixture_at(dir, 4, 17);
}

fn fixture_at(dir: &Path, run: u32, idx: u32) {
    let splits = [
        (
            "source_train",
            Arrays {
                features: awkward_floats(),
                logits: vec![1.0, -1.0, 0.5, 0.25, -2.0, 2.0],
                labels: Some(vec![0, 1, 1]),
            },
        ),
        (
            "source_val",
            Arrays {
                features: vec![1.5, 2.5, 3.5, 4.5, 5.5, 6.5],
                logits: vec![0.0, 1.0, 1.0, 0.0, 0.3, 0.7],
                labels: Some(vec![1, 0, 1]),
            },
        ),
        (
            "target",
            Arrays {
                features: vec![9.0, 8.0, 7.0, 6.0, 5.0, 4.0],
                logits: vec![2.0, 1.0, 0.0, 3.0, 1.0, 1.5],
                labels: None,
            },
        ),
    ];
    write_by_hand(dir, run, idx, 3, 2, 2, &splits);
}

#[test]
fn hand_written_directory_loads_bit_exactly() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("ckpt");
    fixture(&dir);
    assert_eq!(fs::metadata(dir.join("source_train.features.f32")).unwrap().len(), 24);

    let rec = load_checkpoint(&dir).unwrap();
    assert_eq!(rec.task_id, "office31_amazon_dslr");
    assert_eq!(rec.algorithm, "DANN");
    assert_eq!((rec.run_id, rec.checkpoint_index, rec.num_classes), (4, 17, 2));
    assert_eq!((rec.source_train.features.rows(), rec.source_train.features.cols()), (3, 2));
    let bits = |v: &[f32]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(rec.source_train.features.data()), bits(&awkward_floats()));
    assert_eq!(rec.source_train.features.get(2, 1), -7.25);
    assert_eq!(rec.source_val.labels.as_deref(), Some(&[1, 0, 1][..]));
    assert!(rec.target.labels.is_none());
}

#[test]
fn library_writer_produces_the_same_bytes() {
    let tmp = tempfile::tempdir().unwrap();
    let by_hand = tmp.path().join("a");
    fixture(&by_hand);
    let rec = load_checkpoint(&by_hand).unwrap();
    let rewritten = tmp.path().join("b");
    write_checkpoint(&rec, &rewritten).unwrap();
    for split in ["source_train", "source_val", "target"] {
        for file in ["features.f32", "logits.f32", "labels.u32"] {
            let name = format!("{split}.{file}");
            assert_eq!(fs::read(by_hand.join(&name)).ok(), fs::read(rewritten.join(&name)).ok(), "{name}");
        }
    }
    assert_eq!(load_checkpoint(&rewritten).unwrap(), rec);
}

#[test]
fn truncated_array_is_a_shape_error() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("ckpt");
    fixture(&dir);
    fs::write(dir.join("target.logits.f32"), le_f32(&[1.0, 2.0, 3.0, 4.0])).unwrap();
    assert!(matches!(load_checkpoint(&dir), Err(StoreError::ShapeMismatch { .. })));
}

#[test]
fn nan_and_bad_label_are_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("ckpt");
    fixture(&dir);
    fs::write(dir.join("source_val.labels.u32"), le_u32(&[0, 2, 1])).unwrap();
    assert!(matches!(load_checkpoint(&dir), Err(StoreError::LabelOutOfRange { label: 2, .. })));
    fs::write(dir.join("source_val.labels.u32"), le_u32(&[0, 1, 1])).unwrap();
    fs::write(dir.join("target.features.f32"), le_f32(&[0.0, f32::NAN, 0.0, 0.0, 0.0, 0.0])).unwrap();
    assert!(matches!(load_checkpoint(&dir), Err(StoreError::NonFinite { .. })));
}

#[test]
fn tree_layout_is_scanned_in_order() {
    let tmp = tempfile::tempdir().unwrap();
    for run in [1, 0] {
        for idx in [2, 0, 1] {
            fixture_at(&checkpoint_dir(tmp.path(), "office31_amazon_dslr", run, idx), run, idx);
        }
    }
    let path = checkpoint_dir(tmp.path(), "office31_amazon_dslr", 0, 2);
    assert!(path.ends_with("office31_amazon_dslr/run_0/ckpt_2"));
    let index = scan_benchmark(tmp.path()).unwrap();
    assert_eq!(index.num_checkpoints(), 6);
    let paths = index.checkpoint_paths();
    assert!(paths[0].ends_with("run_0/ckpt_0") && paths[5].ends_with("run_1/ckpt_2"));
}

#[test]
fn manifest_must_agree_with_its_directory() {
    let tmp = tempfile::tempdir().unwrap();
    fixture_at(&checkpoint_dir(tmp.path(), "office31_amazon_dslr", 0, 0), 0, 3);
    assert!(matches!(scan_benchmark(tmp.path()), Err(StoreError::Manifest { .. })));
}
