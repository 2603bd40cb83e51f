mod common;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use valbench::clustering::silhouette_score;
use valbench::kernels::Matrix;
use valbench::store::{ArrayF32, CheckpointRecord, SplitData};
use valbench::synth::{SynthBenchmark, SynthConfig};
use valbench::validators::{all_variants, score_all, RecordView, ScoringConfig, ValidatorVariant};

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    Distribution::<f64>::sample(&StandardNormal, rng)
}

/// `per_class` points around each of `classes` far-apart centres in 2-D,
/// with labels.
fn blobs(rng: &mut ChaCha8Rng, classes: usize, per_class: usize, spread: f64) -> (Vec<Vec<f32>>, Vec<u32>) {
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for c in 0..classes {
        let angle = c as f64 * std::f64::consts::TAU / classes as f64;
        for _ in 0..per_class {
            rows.push(vec![
                (10.0 * angle.cos() + spread * normal(rng)) as f32,
                (10.0 * angle.sin() + spread * normal(rng)) as f32,
            ]);
            labels.push(c as u32);
        }
    }
    (rows, labels)
}

fn one_hot_logits(pred: &[u32], classes: usize) -> ArrayF32 {
    let rows: Vec<Vec<f32>> = pred
        .iter()
        .map(|&p| (0..classes).map(|c| if c == p as usize { 5.0 } else { 0.0 }).collect())
        .collect();
    ArrayF32::from_rows(&rows)
}

fn split(features: &[Vec<f32>], pred: &[u32], labels: &[u32], classes: usize) -> SplitData {
    SplitData {
        features: ArrayF32::from_rows(features),
        logits: one_hot_logits(pred, classes),
        labels: Some(labels.to_vec()),
    }
}

/// A record whose every split is the same blob sample with the given
/// predictions.
fn blob_record(features: &[Vec<f32>], labels: &[u32], pred: &[u32], classes: usize) -> CheckpointRecord {
    let s = split(features, pred, labels, classes);
    CheckpointRecord {
        task_id: "toy_a_b".into(),
        algorithm: "none".into(),
        run_id: 0,
        checkpoint_index: 0,
        num_classes: classes,
        source_train: s.clone(),
        source_val: s.clone(),
        target: s,
    }
}

fn score(record: &CheckpointRecord, name: &str, seed: u64) -> f64 {
    let v = ValidatorVariant::from_name(name).unwrap();
    RecordView::new(record, ScoringConfig::with_seed(seed)).score(&v).unwrap().raw
}

#[test]
fn class_ami_on_aligned_single_and_shuffled_predictions() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (x, y) = blobs(&mut rng, 4, 50, 0.5);
    let aligned = blob_record(&x, &y, &y, 4);
    for name in ["ClassAMI|Target|features", "ClassAMI|Source+Target|features"] {
        let ami = score(&aligned, name, 0);
        assert!(ami > 0.99, "{name}: {ami}");
    }
    let single = blob_record(&x, &y, &vec![2; y.len()], 4);
    assert!(score(&single, "ClassAMI|Target|features", 0) <= 1e-9);

    let mut total = 0.0;
    for seed in 0..20 {
        let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
        let (x, y) = blobs(&mut rng, 4, 500, 0.5);
        let mut shuffled = y.clone();
        for i in (1..shuffled.len()).rev() {
            shuffled.swap(i, rng.random_range(0..=i));
        }
        total += score(&blob_record(&x, &y, &shuffled, 4), "ClassAMI|Target|features", seed);
    }
    assert!((total / 20.0).abs() < 0.05, "{}", total / 20.0);
}

#[test]
fn class_ss_separates_tight_clusters_from_one_blob() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (x, y) = blobs(&mut rng, 2, 60, 0.05);
    let tight = blob_record(&x, &y, &y, 2);
    assert!(score(&tight, "ClassSS|Target|features", 0) > 0.9);

    let mut total = 0.0;
    for seed in 0..10 {
        let mut rng = ChaCha8Rng::seed_from_u64(200 + seed);
        let rows: Vec<Vec<f32>> = (0..200)
            .map(|_| (0..16).map(|_| normal(&mut rng) as f32).collect())
            .collect();
        let labels = vec![0u32; 200];
        let rec = blob_record(&rows, &labels, &labels, 2);
        total += score(&rec, "ClassSS|Target|features", seed);
    }
    assert!(total / 10.0 < 0.2, "{}", total / 10.0);
}

#[test]
fn silhouette_matches_the_double_loop() {
    let six = [[0.0, 0.0], [0.0, 1.0], [1.0, 0.0], [5.0, 5.0], [5.0, 6.0], [9.0, 0.0]];
    let labels = [0, 0, 0, 1, 1, 2];
    let got = silhouette_score(&Matrix::from_rows(&six), &labels).unwrap();
    let rows: Vec<Vec<f64>> = six.iter().map(|r| r.to_vec()).collect();
    assert!((got - common::silhouette_oracle(&rows, &labels)).abs() < 1e-12);

    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..30 {
        let n = rng.random_range(3..40);
        let k = rng.random_range(2..5);
        let rows: Vec<Vec<f64>> = (0..n).map(|_| (0..3).map(|_| rng.random::<f64>()).collect()).collect();
        let mut labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..k)).collect();
        labels[0] = 0;
        labels[1] = 1;
        let got = silhouette_score(&Matrix::from_rows(&rows), &labels).unwrap();
        assert!((got - common::silhouette_oracle(&rows, &labels)).abs() < 1e-12);
    }
}

#[test]
fn near_perfect_checkpoint_scores_well() {
    let bench = SynthBenchmark::new(SynthConfig {
        num_tasks: 1,
        runs_per_task: 1,
        ..SynthConfig::default()
    })
    .unwrap();
    let rec = bench.record_at_quality(0, 0, 0, 1.0);
    assert!(score(&rec, "Accuracy|SourceVal", 0) > 0.95);
    assert!(score(&rec, "Entropy|Target", 0) < 0.1);
}

#[test]
fn scoring_is_deterministic_and_failures_stay_local() {
    let bench = SynthBenchmark::new(SynthConfig {
        num_tasks: 1,
        runs_per_task: 1,
        samples_per_split: 40,
        ..SynthConfig::default()
    })
    .unwrap();
    let rec = bench.record(0, 0, 5);
    let a = score_all(&rec, &all_variants(), ScoringConfig::with_seed(4));
    let b = score_all(&rec, &all_variants(), ScoringConfig::with_seed(4));
    assert_eq!(a, b);
    assert!(a.iter().all(|s| s.result.is_ok()));

    let mut tiny = rec.clone();
    tiny.target = SplitData {
        features: ArrayF32::from_rows(&[rec.target.features.row(0)]),
        logits: ArrayF32::from_rows(&[rec.target.logits.row(0)]),
        labels: rec.target.labels.as_ref().map(|l| vec![l[0]]),
    };
    for entry in score_all(&tiny, &all_variants(), ScoringConfig::with_seed(4)) {
        let name = entry.variant.name();
        if name.starts_with("SND|") {
            assert!(entry.result.is_err(), "{name}");
        } else if name.starts_with("Accuracy|") || name.starts_with("Entropy|") {
            assert!(entry.result.is_ok(), "{name}: {:?}", entry.result);
        }
    }
}
