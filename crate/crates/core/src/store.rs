//! On-disk and in-memory model of checkpoints, runs, and benchmark trees.
//!
//! A checkpoint is a directory holding `manifest.json` plus headerless,
//! row-major, little-endian arrays:
//!
//! ```text
//! <root>/<task_id>/run_<run_id>/ckpt_<index>/
//!     manifest.json
//!     source_train.features.f32  source_train.logits.f32  source_train.labels.u32
//!     source_val.features.f32    source_val.logits.f32    source_val.labels.u32
//!     target.features.f32        target.logits.f32        [target.labels.u32]
//! ```

use std::fmt;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("missing file {0}")]
    MissingFile(PathBuf),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("malformed manifest {path}: {message}")]
    Manifest { path: PathBuf, message: String },
    #[error("shape mismatch in {path}: expected {expected} values, found {found} bytes")]
    ShapeMismatch {
        path: PathBuf,
        expected: usize,
        found: u64,
    },
    #[error("array length {len} does not match {rows}x{cols}")]
    BadLength { rows: usize, cols: usize, len: usize },
    #[error("non-finite value in {split}.{array} at row {row}, col {col}")]
    NonFinite {
        split: Split,
        array: &'static str,
        row: usize,
        col: usize,
    },
    #[error("label {label} at row {row} of {split} is out of range for {num_classes} classes")]
    LabelOutOfRange {
        split: Split,
        row: usize,
        label: u32,
        num_classes: usize,
    },
    #[error("invalid record: {0}")]
    Invalid(String),
    #[error("benchmark root {0} contains no checkpoints")]
    EmptyTree(PathBuf),
    #[error("duplicate checkpoint (task {task_id}, run {run_id}, index {checkpoint_index})")]
    Duplicate {
        task_id: String,
        run_id: u32,
        checkpoint_index: u32,
    },
}

pub type Result<T, E = StoreError> = std::result::Result<T, E>;

/// Dense row-major `f32` matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct ArrayF32 {
    rows: usize,
    cols: usize,
    data: Vec<f32>,
}

impl ArrayF32 {
    pub fn new(rows: usize, cols: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(StoreError::BadLength {
                rows,
                cols,
                len: data.len(),
            });
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    /// Builds an array from equal-length rows. Panics on ragged input.
    pub fn from_rows<R: AsRef<[f32]>>(rows: &[R]) -> Self {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            assert_eq!(r.as_ref().len(), cols, "ragged rows");
            data.extend_from_slice(r.as_ref());
        }
        Self {
            rows: rows.len(),
            cols,
            data,
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f32] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[f32]> + '_ {
        // chunks_exact(0) panics, so zero-width arrays yield empty rows.
        (0..self.rows).map(move |i| &self.data[i * self.cols..(i + 1) * self.cols])
    }

    pub fn get(&self, row: usize, col: usize) -> f32 {
        self.data[row * self.cols + col]
    }

    /// Stacks `self` on top of `other`. Column counts must match.
    pub fn vstack(&self, other: &ArrayF32) -> Result<ArrayF32> {
        if self.cols != other.cols {
            return Err(StoreError::Invalid(format!(
                "cannot stack {} columns on {} columns",
                other.cols, self.cols
            )));
        }
        let mut data = Vec::with_capacity(self.data.len() + other.data.len());
        data.extend_from_slice(&self.data);
        data.extend_from_slice(&other.data);
        Ok(ArrayF32 {
            rows: self.rows + other.rows,
            cols: self.cols,
            data,
        })
    }

    /// First non-finite entry as `(row, col)`.
    pub fn first_non_finite(&self) -> Option<(usize, usize)> {
        self.data
            .iter()
            .position(|v| !v.is_finite())
            .map(|p| (p / self.cols.max(1), p % self.cols.max(1)))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    SourceTrain,
    SourceVal,
    Target,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::SourceTrain, Split::SourceVal, Split::Target];

    pub fn file_stem(self) -> &'static str {
        match self {
            Split::SourceTrain => "source_train",
            Split::SourceVal => "source_val",
            Split::Target => "target",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.file_stem())
    }
}

/// Features, logits and (optionally) labels for one data split.
#[derive(Clone, Debug, PartialEq)]
pub struct SplitData {
    pub features: ArrayF32,
    pub logits: ArrayF32,
    pub labels: Option<Vec<u32>>,
}

impl SplitData {
    pub fn len(&self) -> usize {
        self.features.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CheckpointRecord {
    pub task_id: String,
    pub algorithm: String,
    pub run_id: u32,
    pub checkpoint_index: u32,
    pub num_classes: usize,
    pub source_train: SplitData,
    pub source_val: SplitData,
    pub target: SplitData,
}

impl CheckpointRecord {
    pub fn split(&self, split: Split) -> &SplitData {
        match split {
            Split::SourceTrain => &self.source_train,
            Split::SourceVal => &self.source_val,
            Split::Target => &self.target,
        }
    }

    pub fn split_mut(&mut self, split: Split) -> &mut SplitData {
        match split {
            Split::SourceTrain => &mut self.source_train,
            Split::SourceVal => &mut self.source_val,
            Split::Target => &mut self.target,
        }
    }

    pub fn key(&self) -> CheckpointKey {
        CheckpointKey {
            task_id: self.task_id.clone(),
            algorithm: self.algorithm.clone(),
            run_id: self.run_id,
            checkpoint_index: self.checkpoint_index,
        }
    }
}

/// Identifies one checkpoint inside a benchmark.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CheckpointKey {
    pub task_id: String,
    pub algorithm: String,
    pub run_id: u32,
    pub checkpoint_index: u32,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitShape {
    pub n: usize,
    pub feature_dim: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub task_id: String,
    pub algorithm: String,
    pub run_id: u32,
    pub checkpoint_index: u32,
    pub num_classes: usize,
    pub source_train: SplitShape,
    pub source_val: SplitShape,
    pub target: SplitShape,
}

impl Manifest {
    fn shape(&self, split: Split) -> SplitShape {
        match split {
            Split::SourceTrain => self.source_train,
            Split::SourceVal => self.source_val,
            Split::Target => self.target,
        }
    }

    pub fn read(dir: &Path) -> Result<Manifest> {
        let path = dir.join(MANIFEST_FILE);
        let bytes = read_file(&path)?;
        serde_json::from_slice(&bytes).map_err(|e| StoreError::Manifest {
            path,
            message: e.to_string(),
        })
    }
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| {
        if e.kind() == io::ErrorKind::NotFound {
            StoreError::MissingFile(path.to_path_buf())
        } else {
            StoreError::Io {
                path: path.to_path_buf(),
                source: e,
            }
        }
    })
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> StoreError + '_ {
    move |source| StoreError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn array_path(dir: &Path, split: Split, array: &str) -> PathBuf {
    let ext = if array == "labels" { "u32" } else { "f32" };
    dir.join(format!("{}.{array}.{ext}", split.file_stem()))
}

fn check_len(path: &Path, bytes_len: usize, values: usize) -> Result<()> {
    if bytes_len != values * 4 {
        return Err(StoreError::ShapeMismatch {
            path: path.to_path_buf(),
            expected: values,
            found: bytes_len as u64,
        });
    }
    Ok(())
}

fn read_f32_array(dir: &Path, split: Split, array: &'static str, rows: usize, cols: usize) -> Result<ArrayF32> {
    let path = array_path(dir, split, array);
    let bytes = read_file(&path)?;
    check_len(&path, bytes.len(), rows * cols)?;
    let data: Vec<f32> = bytes
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
        .collect();
    let arr = ArrayF32::new(rows, cols, data)?;
    if let Some((row, col)) = arr.first_non_finite() {
        return Err(StoreError::NonFinite {
            split,
            array,
            row,
            col,
        });
    }
    Ok(arr)
}

fn read_labels(dir: &Path, split: Split, rows: usize, num_classes: usize) -> Result<Option<Vec<u32>>> {
    let path = array_path(dir, split, "labels");
    if !path.exists() {
        return Ok(None);
    }
    let bytes = read_file(&path)?;
    check_len(&path, bytes.len(), rows)?;
    let labels: Vec<u32> = bytes
        .chunks_exact(4)
        .map(|b| u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
        .collect();
    if let Some(row) = labels.iter().position(|&l| l as usize >= num_classes) {
        return Err(StoreError::LabelOutOfRange {
            split,
            row,
            label: labels[row],
            num_classes,
        });
    }
    Ok(Some(labels))
}

/// Loads and validates one checkpoint directory.
pub fn load_checkpoint(dir: impl AsRef<Path>) -> Result<CheckpointRecord> {
    let dir = dir.as_ref();
    let manifest = Manifest::read(dir)?;
    let c = manifest.num_classes;
    let load_split = |split: Split| -> Result<SplitData> {
        let shape = manifest.shape(split);
        let features = read_f32_array(dir, split, "features", shape.n, shape.feature_dim)?;
        let logits = read_f32_array(dir, split, "logits", shape.n, c)?;
        let labels = read_labels(dir, split, shape.n, c)?;
        if labels.is_none() && split != Split::Target {
            return Err(StoreError::MissingFile(array_path(dir, split, "labels")));
        }
        Ok(SplitData {
            features,
            logits,
            labels,
        })
    };
    let record = CheckpointRecord {
        task_id: manifest.task_id.clone(),
        algorithm: manifest.algorithm.clone(),
        run_id: manifest.run_id,
        checkpoint_index: manifest.checkpoint_index,
        num_classes: c,
        source_train: load_split(Split::SourceTrain)?,
        source_val: load_split(Split::SourceVal)?,
        target: load_split(Split::Target)?,
    };
    let diagnostics = validate_record(&record);
    if !diagnostics.is_empty() {
        return Err(StoreError::Invalid(diagnostics.to_string()));
    }
    Ok(record)
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(io_err(path))
}

fn f32_bytes(values: &[f32]) -> Vec<u8> {
    values.iter().flat_map(|v| v.to_le_bytes()).collect()
}

/// Writes `record` to `dir` in the checkpoint directory format.
pub fn write_checkpoint(record: &CheckpointRecord, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    let report = validate_record(record);
    if !report.is_empty() {
        return Err(StoreError::Invalid(report.to_string()));
    }
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let shape = |s: &SplitData| SplitShape {
        n: s.len(),
        feature_dim: s.features.cols(),
    };
    let manifest = Manifest {
        task_id: record.task_id.clone(),
        algorithm: record.algorithm.clone(),
        run_id: record.run_id,
        checkpoint_index: record.checkpoint_index,
        num_classes: record.num_classes,
        source_train: shape(&record.source_train),
        source_val: shape(&record.source_val),
        target: shape(&record.target),
    };
    let json = serde_json::to_vec_pretty(&manifest).expect("manifest serializes");
    write_bytes(&dir.join(MANIFEST_FILE), &json)?;
    for split in Split::ALL {
        let data = record.split(split);
        write_bytes(&array_path(dir, split, "features"), &f32_bytes(data.features.data()))?;
        write_bytes(&array_path(dir, split, "logits"), &f32_bytes(data.logits.data()))?;
        let labels_path = array_path(dir, split, "labels");
        match &data.labels {
            Some(labels) => {
                let bytes: Vec<u8> = labels.iter().flat_map(|l| l.to_le_bytes()).collect();
                write_bytes(&labels_path, &bytes)?;
            }
            None if labels_path.exists() => {
                fs::remove_file(&labels_path).map_err(io_err(&labels_path))?;
            }
            None => {}
        }
    }
    Ok(())
}

/// Relative directory of a checkpoint inside a benchmark root.
pub fn checkpoint_dir(root: &Path, task_id: &str, run_id: u32, checkpoint_index: u32) -> PathBuf {
    root.join(task_id)
        .join(format!("run_{run_id}"))
        .join(format!("ckpt_{checkpoint_index}"))
}

/// One problem found by [`validate_record`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Diagnostic {
    pub split: Option<Split>,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.split {
            Some(s) => write!(f, "{s}: {}", self.message),
            None => f.write_str(&self.message),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct DiagnosticsReport {
    pub diagnostics: Vec<Diagnostic>,
}

impl DiagnosticsReport {
    pub fn is_empty(&self) -> bool {
        self.diagnostics.is_empty()
    }

    pub fn len(&self) -> usize {
        self.diagnostics.len()
    }

    fn push(&mut self, split: Option<Split>, message: String) {
        self.diagnostics.push(Diagnostic { split, message });
    }
}

impl fmt::Display for DiagnosticsReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, d) in self.diagnostics.iter().enumerate() {
            if i > 0 {
                f.write_str("; ")?;
            }
            write!(f, "{d}")?;
        }
        Ok(())
    }
}

/// Lists every invariant the record violates. An empty report means valid.
pub fn validate_record(record: &CheckpointRecord) -> DiagnosticsReport {
    let mut report = DiagnosticsReport::default();
    let c = record.num_classes;
    if c == 0 {
        report.push(None, "num_classes must be at least 1".into());
    }
    for split in Split::ALL {
        let data = record.split(split);
        let n = data.features.rows();
        if data.logits.rows() != n {
            report.push(
                Some(split),
                format!("features have {n} rows but logits have {}", data.logits.rows()),
            );
        }
        if data.logits.cols() != c {
            report.push(
                Some(split),
                format!("logits have {} columns, expected {c}", data.logits.cols()),
            );
        }
        for (name, arr) in [("features", &data.features), ("logits", &data.logits)] {
            if let Some((row, col)) = arr.first_non_finite() {
                report.push(
                    Some(split),
                    format!("non-finite {name} value at row {row}, col {col}"),
                );
            }
        }
        match &data.labels {
            Some(labels) => {
                if labels.len() != n {
                    report.push(
                        Some(split),
                        format!("{} labels for {n} rows", labels.len()),
                    );
                }
                for (row, &label) in labels.iter().enumerate() {
                    if label as usize >= c {
                        report.push(
                            Some(split),
                            format!("label {label} at row {row} out of range for {c} classes"),
                        );
                    }
                }
            }
            None if split != Split::Target => {
                report.push(Some(split), "source split is missing labels".into());
            }
            None => {}
        }
    }
    report
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RunIndex {
    pub run_id: u32,
    pub algorithm: String,
    /// Checkpoint directories ordered by checkpoint index.
    pub checkpoints: Vec<(u32, PathBuf)>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TaskIndex {
    pub task_id: String,
    pub runs: Vec<RunIndex>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BenchmarkIndex {
    pub root: PathBuf,
    pub tasks: Vec<TaskIndex>,
}

impl BenchmarkIndex {
    pub fn num_checkpoints(&self) -> usize {
        self.tasks
            .iter()
            .flat_map(|t| &t.runs)
            .map(|r| r.checkpoints.len())
            .sum()
    }

    /// All checkpoint directories in index order.
    pub fn checkpoint_paths(&self) -> Vec<PathBuf> {
        self.tasks
            .iter()
            .flat_map(|t| &t.runs)
            .flat_map(|r| r.checkpoints.iter().map(|(_, p)| p.clone()))
            .collect()
    }
}

fn sorted_subdirs(dir: &Path) -> Result<Vec<(String, PathBuf)>> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).map_err(io_err(dir))? {
        let entry = entry.map_err(io_err(dir))?;
        let path = entry.path();
        if path.is_dir() {
            out.push((entry.file_name().to_string_lossy().into_owned(), path));
        }
    }
    out.sort();
    Ok(out)
}

fn parse_prefixed(name: &str, prefix: &str) -> Option<u32> {
    name.strip_prefix(prefix)?.parse().ok()
}

fn check_array_file(path: &Path, values: usize) -> Result<()> {
    let meta = fs::metadata(path).map_err(|e| {
        if e.kind() == io::ErrorKind::NotFound {
            StoreError::MissingFile(path.to_path_buf())
        } else {
            StoreError::Io {
                path: path.to_path_buf(),
                source: e,
            }
        }
    })?;
    if meta.len() != values as u64 * 4 {
        return Err(StoreError::ShapeMismatch {
            path: path.to_path_buf(),
            expected: values,
            found: meta.len(),
        });
    }
    Ok(())
}

/// Checks manifest and array file sizes without reading array contents.
fn check_checkpoint_files(dir: &Path, manifest: &Manifest) -> Result<()> {
    for split in Split::ALL {
        let shape = manifest.shape(split);
        check_array_file(&array_path(dir, split, "features"), shape.n * shape.feature_dim)?;
        check_array_file(&array_path(dir, split, "logits"), shape.n * manifest.num_classes)?;
        let labels = array_path(dir, split, "labels");
        if split != Split::Target || labels.exists() {
            check_array_file(&labels, shape.n)?;
        }
    }
    Ok(())
}

/// Enumerates a benchmark tree ordered by (task_id, run_id, checkpoint_index).
///
/// Directories that do not follow the `run_<id>` / `ckpt_<index>` naming are
/// ignored. Each manifest is read and every array file's size is checked
/// against it.
pub fn scan_benchmark(root: impl AsRef<Path>) -> Result<BenchmarkIndex> {
    let root = root.as_ref();
    let mut tasks = Vec::new();
    for (task_id, task_dir) in sorted_subdirs(root)? {
        let mut runs = Vec::new();
        for (run_name, run_dir) in sorted_subdirs(&task_dir)? {
            let Some(run_id) = parse_prefixed(&run_name, "run_") else {
                continue;
            };
            let mut checkpoints = Vec::new();
            let mut algorithm = None;
            for (ckpt_name, ckpt_dir) in sorted_subdirs(&run_dir)? {
                let Some(index) = parse_prefixed(&ckpt_name, "ckpt_") else {
                    continue;
                };
                let manifest = Manifest::read(&ckpt_dir)?;
                if manifest.task_id != task_id
                    || manifest.run_id != run_id
                    || manifest.checkpoint_index != index
                {
                    return Err(StoreError::Manifest {
                        path: ckpt_dir.join(MANIFEST_FILE),
                        message: format!(
                            "manifest says task {} run {} index {} but directory is {task_id}/run_{run_id}/ckpt_{index}",
                            manifest.task_id, manifest.run_id, manifest.checkpoint_index
                        ),
                    });
                }
                check_checkpoint_files(&ckpt_dir, &manifest)?;
                algorithm.get_or_insert(manifest.algorithm);
                checkpoints.push((index, ckpt_dir));
            }
            checkpoints.sort_by_key(|(i, _)| *i);
            if let Some(w) = checkpoints.windows(2).find(|w| w[0].0 == w[1].0) {
                return Err(StoreError::Duplicate {
                    task_id,
                    run_id,
                    checkpoint_index: w[0].0,
                });
            }
            if let Some(algorithm) = algorithm {
                runs.push(RunIndex {
                    run_id,
                    algorithm,
                    checkpoints,
                });
            }
        }
        runs.sort_by_key(|r| r.run_id);
        if let Some(w) = runs.windows(2).find(|w| w[0].run_id == w[1].run_id) {
            return Err(StoreError::Duplicate {
                task_id,
                run_id: w[0].run_id,
                checkpoint_index: w[0].checkpoints[0].0,
            });
        }
        if !runs.is_empty() {
            tasks.push(TaskIndex { task_id, runs });
        }
    }
    if tasks.is_empty() {
        return Err(StoreError::EmptyTree(root.to_path_buf()));
    }
    Ok(BenchmarkIndex {
        root: root.to_path_buf(),
        tasks,
    })
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    pub(crate) fn tiny_record() -> CheckpointRecord {
        let split = |labels: Option<Vec<u32>>| SplitData {
            features: ArrayF32::from_rows(&[[0.5f32, -1.0], [2.0, 0.25], [1.5, 3.0]]),
            logits: ArrayF32::from_rows(&[[1.0f32, 0.0], [0.0, 1.0], [0.3, 0.2]]),
            labels,
        };
        CheckpointRecord {
            task_id: "demo".into(),
            algorithm: "DANN".into(),
            run_id: 0,
            checkpoint_index: 0,
            num_classes: 2,
            source_train: split(Some(vec![0, 1, 0])),
            source_val: split(Some(vec![0, 1, 1])),
            target: split(None),
        }
    }

    #[test]
    fn round_trip_shape() {
        let dir = tempfile::tempdir().unwrap();
        let rec = tiny_record();
        write_checkpoint(&rec, dir.path()).unwrap();
        let loaded = load_checkpoint(dir.path()).unwrap();
        assert_eq!(loaded.source_train.features.rows(), 3);
        assert_eq!(loaded.source_train.features.cols(), 2);
        assert_eq!(loaded, rec);
    }

    #[test]
    fn short_file_is_shape_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        let rec = tiny_record();
        write_checkpoint(&rec, dir.path()).unwrap();
        let mut manifest = Manifest::read(dir.path()).unwrap();
        manifest.source_train.n = 4;
        fs::write(
            dir.path().join(MANIFEST_FILE),
            serde_json::to_vec(&manifest).unwrap(),
        )
        .unwrap();
        let err = load_checkpoint(dir.path()).unwrap_err();
        assert!(matches!(err, StoreError::ShapeMismatch { .. }), "{err}");
    }

    #[test]
    fn missing_file_and_bad_values() {
        let dir = tempfile::tempdir().unwrap();
        write_checkpoint(&tiny_record(), dir.path()).unwrap();
        fs::remove_file(dir.path().join("source_val.logits.f32")).unwrap();
        assert!(matches!(
            load_checkpoint(dir.path()).unwrap_err(),
            StoreError::MissingFile(_)
        ));

        let dir = tempfile::tempdir().unwrap();
        write_checkpoint(&tiny_record(), dir.path()).unwrap();
        let mut bytes = fs::read(dir.path().join("target.features.f32")).unwrap();
        bytes[4..8].copy_from_slice(&f32::NAN.to_le_bytes());
        fs::write(dir.path().join("target.features.f32"), bytes).unwrap();
        assert!(matches!(
            load_checkpoint(dir.path()).unwrap_err(),
            StoreError::NonFinite { split: Split::Target, row: 0, col: 1, .. }
        ));

        let dir = tempfile::tempdir().unwrap();
        write_checkpoint(&tiny_record(), dir.path()).unwrap();
        let labels: Vec<u8> = [0u32, 2, 1].iter().flat_map(|l| l.to_le_bytes()).collect();
        fs::write(dir.path().join("source_train.labels.u32"), labels).unwrap();
        assert!(matches!(
            load_checkpoint(dir.path()).unwrap_err(),
            StoreError::LabelOutOfRange { label: 2, row: 1, .. }
        ));
    }

    #[test]
    fn validate_reports_each_problem() {
        assert!(validate_record(&tiny_record()).is_empty());

        let mut rec = tiny_record();
        rec.source_val.features.data_mut()[3] = f32::NAN;
        let report = validate_record(&rec);
        assert_eq!(report.len(), 1);
        assert_eq!(report.diagnostics[0].split, Some(Split::SourceVal));
        assert!(report.diagnostics[0].message.contains("row 1, col 1"));

        let mut rec = tiny_record();
        rec.target.labels = Some(vec![0, 2, 1]);
        let report = validate_record(&rec);
        assert_eq!(report.len(), 1);
        assert_eq!(report.diagnostics[0].split, Some(Split::Target));
    }

    #[test]
    fn scan_counts_and_orders() {
        let root = tempfile::tempdir().unwrap();
        let mut rec = tiny_record();
        for run in [10u32, 2] {
            for idx in [0u32, 10, 2] {
                rec.run_id = run;
                rec.checkpoint_index = idx;
                write_checkpoint(&rec, checkpoint_dir(root.path(), "demo", run, idx)).unwrap();
            }
        }
        let index = scan_benchmark(root.path()).unwrap();
        assert_eq!(index.num_checkpoints(), 6);
        let runs: Vec<u32> = index.tasks[0].runs.iter().map(|r| r.run_id).collect();
        assert_eq!(runs, vec![2, 10]);
        let idx: Vec<u32> = index.tasks[0].runs[0].checkpoints.iter().map(|c| c.0).collect();
        assert_eq!(idx, vec![0, 2, 10]);
    }

    #[test]
    fn scan_rejects_empty_and_duplicates() {
        let root = tempfile::tempdir().unwrap();
        assert!(matches!(
            scan_benchmark(root.path()).unwrap_err(),
            StoreError::EmptyTree(_)
        ));

        let mut rec = tiny_record();
        rec.checkpoint_index = 1;
        write_checkpoint(&rec, checkpoint_dir(root.path(), "demo", 0, 1)).unwrap();
        write_checkpoint(&rec, root.path().join("demo/run_0/ckpt_01")).unwrap();
        assert!(matches!(
            scan_benchmark(root.path()).unwrap_err(),
            StoreError::Duplicate { checkpoint_index: 1, .. }
        ));
    }
}
