//! Synthetic checkpoint benchmark with known target accuracy.
//!
//! Each task fixes an orthonormal class basis `u_1..u_C` (plus one extra
//! direction for domain shift), labels, and per-sample feature noise `ε`.
//! A checkpoint of quality `q` has features `x = S·q·u_y + ε` and logits
//! `κ·(⟨x, u_c⟩ + η_c)` with `η ~ N(0, (1−q)²)`. Quality follows a bump over
//! the checkpoints of a run.
//!
//! Two per-run nuisance factors leave accuracy untouched: the confidence
//! `κ = c·(1 + 2q)·(1 + g·t)` grows with training progress `t`, and feature
//! directions outside the class subspace are scaled by a random factor.

use std::path::{Path, PathBuf};

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::seed::rng_for;
use crate::store::{checkpoint_dir, write_checkpoint, ArrayF32, CheckpointRecord, Split, SplitData, StoreError};
use crate::validators::{accuracy_score, ValidatorError};

const SPLITS: [Split; 3] = [Split::SourceTrain, Split::SourceVal, Split::Target];
const CONFIDENT_MARGIN: f32 = 1000.0;
const COLLAPSE_FACTOR: f32 = 1e-4;

#[derive(Debug, thiserror::Error)]
pub enum SynthError {
    #[error("invalid synth config: {0}")]
    Config(String),
    #[error(transparent)]
    Store(#[from] StoreError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Pathology {
    /// Target logits become one-hot with a huge margin on a wrong class.
    ConfidentWrong,
    /// Target features shrink toward a single point.
    CollapseClusters,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SynthConfig {
    pub num_tasks: usize,
    pub runs_per_task: usize,
    pub checkpoints_per_run: usize,
    pub num_classes: usize,
    pub feature_dim: usize,
    pub samples_per_split: usize,
    /// Assigned to runs round-robin.
    pub algorithms: Vec<String>,
    /// Class-mean distance `S` at quality 1.
    pub separation: f64,
    /// Range of the per-run peak quality `q*`.
    pub peak_quality: (f64, f64),
    /// Range of the peak position as a fraction of the run.
    pub peak_position: (f64, f64),
    /// Range of the bump width as a fraction of the run.
    pub curve_width: (f64, f64),
    /// Target feature offset along a direction orthogonal to every class.
    pub domain_shift: f64,
    /// Range of the per-run logit confidence factor `c` (log-uniform).
    pub confidence: (f64, f64),
    /// Range of the per-run confidence growth `g` over a run.
    pub confidence_growth: (f64, f64),
    /// Range of the per-run scale of feature noise outside the class subspace.
    pub nuisance_scale: (f64, f64),
    pub confident_wrong_fraction: f64,
    pub collapse_fraction: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            num_tasks: 3,
            runs_per_task: 10,
            checkpoints_per_run: 20,
            num_classes: 5,
            feature_dim: 16,
            samples_per_split: 500,
            algorithms: vec!["algo_a".into(), "algo_b".into()],
            separation: 6.0,
            peak_quality: (0.1, 1.0),
            peak_position: (0.3, 0.8),
            curve_width: (0.15, 0.4),
            domain_shift: 0.0,
            confidence: (0.5, 2.0),
            confidence_growth: (0.0, 3.0),
            nuisance_scale: (0.25, 3.0),
            confident_wrong_fraction: 0.0,
            collapse_fraction: 0.0,
            seed: 7,
        }
    }
}

fn check_range(name: &str, (lo, hi): (f64, f64), min: f64, max: f64) -> Result<(), SynthError> {
    if !(lo.is_finite() && hi.is_finite() && min <= lo && lo <= hi && hi <= max) {
        return Err(SynthError::Config(format!("{name} range ({lo}, {hi}) must lie in [{min}, {max}]")));
    }
    Ok(())
}

impl SynthConfig {
    pub fn validate(&self) -> Result<(), SynthError> {
        for (name, v) in [
            ("num_tasks", self.num_tasks),
            ("runs_per_task", self.runs_per_task),
            ("checkpoints_per_run", self.checkpoints_per_run),
            ("samples_per_split", self.samples_per_split),
        ] {
            if v == 0 {
                return Err(SynthError::Config(format!("{name} must be at least 1")));
            }
        }
        if self.num_classes < 2 {
            return Err(SynthError::Config("num_classes must be at least 2".into()));
        }
        if self.feature_dim < self.num_classes + usize::from(self.domain_shift != 0.0) {
            return Err(SynthError::Config(format!(
                "feature_dim {} too small for {} classes{}",
                self.feature_dim,
                self.num_classes,
                if self.domain_shift != 0.0 { " plus a shift direction" } else { "" }
            )));
        }
        if self.algorithms.is_empty() {
            return Err(SynthError::Config("need at least one algorithm name".into()));
        }
        if !(self.separation.is_finite() && self.separation >= 0.0) {
            return Err(SynthError::Config("separation must be finite and non-negative".into()));
        }
        if !self.domain_shift.is_finite() {
            return Err(SynthError::Config("domain_shift must be finite".into()));
        }
        check_range("peak_quality", self.peak_quality, 0.0, 1.0)?;
        check_range("peak_position", self.peak_position, 0.0, 1.0)?;
        check_range("curve_width", self.curve_width, 1e-3, f64::MAX)?;
        check_range("confidence", self.confidence, 1e-3, f64::MAX)?;
        check_range("confidence_growth", self.confidence_growth, 0.0, f64::MAX)?;
        check_range("nuisance_scale", self.nuisance_scale, 0.0, f64::MAX)?;
        let (cw, co) = (self.confident_wrong_fraction, self.collapse_fraction);
        if !(0.0..=1.0).contains(&cw) || !(0.0..=1.0).contains(&co) || cw + co > 1.0 {
            return Err(SynthError::Config("pathology fractions must be in [0, 1] and sum to at most 1".into()));
        }
        Ok(())
    }

    pub fn num_checkpoints(&self) -> usize {
        self.num_tasks * self.runs_per_task * self.checkpoints_per_run
    }
}

pub fn task_id(task: usize) -> String {
    format!("synth_t{task}")
}

struct SplitBase {
    labels: Vec<u32>,
    noise: Vec<f64>,
}

struct TaskData {
    /// `C` class directions followed by the shift direction when `D > C`.
    basis: Vec<Vec<f64>>,
    splits: [SplitBase; 3],
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunPlan {
    pub algorithm: String,
    pub peak_quality: f64,
    pub peak_position: f64,
    pub width: f64,
    pub confidence: f64,
    pub confidence_growth: f64,
    pub nuisance_scale: f64,
}

fn uniform(rng: &mut impl Rng, (lo, hi): (f64, f64)) -> f64 {
    lo + (hi - lo) * rng.random::<f64>()
}

fn gram_schmidt(rng: &mut impl Rng, count: usize, dim: usize) -> Vec<Vec<f64>> {
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(count);
    while basis.len() < count {
        let mut v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(rng)).collect();
        for b in &basis {
            let d: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
            v.iter_mut().zip(b).for_each(|(x, y)| *x -= d * y);
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-6 {
            basis.push(v.into_iter().map(|x| x / norm).collect());
        }
    }
    basis
}

/// Deterministic generator; all randomness derives from the config seed and
/// the (task, run, checkpoint) coordinates.
pub struct SynthBenchmark {
    config: SynthConfig,
    tasks: Vec<TaskData>,
    runs: Vec<Vec<RunPlan>>,
}

impl SynthBenchmark {
    pub fn new(config: SynthConfig) -> Result<Self, SynthError> {
        config.validate()?;
        let (c, d, n) = (config.num_classes, config.feature_dim, config.samples_per_split);
        let basis_count = if d > c { c + 1 } else { c };
        let tasks = (0..config.num_tasks)
            .map(|t| {
                let mut rng = rng_for(config.seed, &[0x7461, t as u64]);
                let basis = gram_schmidt(&mut rng, basis_count, d);
                let splits = SPLITS.map(|_| SplitBase {
                    labels: (0..n).map(|_| rng.random_range(0..c as u32)).collect(),
                    noise: (0..n * d).map(|_| StandardNormal.sample(&mut rng)).collect(),
                });
                TaskData { basis, splits }
            })
            .collect();
        let runs = (0..config.num_tasks)
            .map(|t| {
                (0..config.runs_per_task)
                    .map(|r| {
                        let mut rng = rng_for(config.seed, &[0x7275, t as u64, r as u64]);
                        RunPlan {
                            algorithm: config.algorithms[r % config.algorithms.len()].clone(),
                            peak_quality: uniform(&mut rng, config.peak_quality),
                            peak_position: uniform(&mut rng, config.peak_position),
                            width: uniform(&mut rng, config.curve_width),
                            confidence: {
                                let (lo, hi) = config.confidence;
                                uniform(&mut rng, (lo.ln(), hi.ln())).exp()
                            },
                            confidence_growth: uniform(&mut rng, config.confidence_growth),
                            nuisance_scale: uniform(&mut rng, config.nuisance_scale),
                        }
                    })
                    .collect()
            })
            .collect();
        Ok(Self { config, tasks, runs })
    }

    pub fn config(&self) -> &SynthConfig {
        &self.config
    }

    pub fn run_plan(&self, task: usize, run: usize) -> &RunPlan {
        &self.runs[task][run]
    }

    /// Training progress of a checkpoint in [0, 1].
    fn progress(&self, task: usize, run: usize, index: usize) -> f64 {
        match self.config.checkpoints_per_run {
            1 => self.runs[task][run].peak_position,
            n => index as f64 / (n - 1) as f64,
        }
    }

    /// Instantaneous quality of a checkpoint, in [0, q*].
    pub fn quality(&self, task: usize, run: usize, index: usize) -> f64 {
        let plan = &self.runs[task][run];
        let z = (self.progress(task, run, index) - plan.peak_position) / plan.width;
        plan.peak_quality * (-0.5 * z * z).exp()
    }

    pub fn pathology(&self, task: usize, run: usize, index: usize) -> Option<Pathology> {
        let cfg = &self.config;
        if cfg.confident_wrong_fraction == 0.0 && cfg.collapse_fraction == 0.0 {
            return None;
        }
        let mut rng = rng_for(cfg.seed, &[0x7061, task as u64, run as u64, index as u64]);
        let u: f64 = rng.random();
        if u < cfg.confident_wrong_fraction {
            Some(Pathology::ConfidentWrong)
        } else if u < cfg.confident_wrong_fraction + cfg.collapse_fraction {
            Some(Pathology::CollapseClusters)
        } else {
            None
        }
    }

    /// Expected target accuracy of a clean checkpoint.
    pub fn expected_accuracy(&self, task: usize, run: usize, index: usize) -> f64 {
        analytic_accuracy(self.quality(task, run, index), self.config.separation, self.config.num_classes)
    }

    /// Clean checkpoint at an explicit quality.
    pub fn record_at_quality(&self, task: usize, run: usize, index: usize, q: f64) -> CheckpointRecord {
        let cfg = &self.config;
        let data = &self.tasks[task];
        let (c, d, n) = (cfg.num_classes, cfg.feature_dim, cfg.samples_per_split);
        let plan = &self.runs[task][run];
        let mean_scale = cfg.separation * q;
        let kappa = plan.confidence * (1.0 + 2.0 * q) * (1.0 + plan.confidence_growth * self.progress(task, run, index));
        let logit_sd = 1.0 - q;
        // Projection onto the complement of the class subspace, scaled.
        let class_basis = &data.basis[..c];
        let nuisance = plan.nuisance_scale;
        let mut splits = SPLITS.iter().enumerate().map(|(s, &split)| {
            let base = &data.splits[s];
            let mut rng = rng_for(cfg.seed, &[0x636b, task as u64, run as u64, index as u64, s as u64]);
            let shift = if split == Split::Target { cfg.domain_shift } else { 0.0 };
            let mut features = Vec::with_capacity(n * d);
            let mut logits = Vec::with_capacity(n * c);
            let mut x = vec![0.0; d];
            for i in 0..n {
                let y = base.labels[i] as usize;
                let eps = &base.noise[i * d..(i + 1) * d];
                let coords: Vec<f64> = class_basis.iter().map(|u| u.iter().zip(eps).map(|(a, b)| a * b).sum()).collect();
                for (j, xj) in x.iter_mut().enumerate() {
                    let inside: f64 = class_basis.iter().zip(&coords).map(|(u, k)| k * u[j]).sum();
                    *xj = mean_scale * data.basis[y][j] + inside + nuisance * (eps[j] - inside);
                    if shift != 0.0 {
                        *xj += shift * data.basis[c][j];
                    }
                }
                features.extend(x.iter().map(|&v| v as f32));
                for u in &data.basis[..c] {
                    let proj: f64 = x.iter().zip(u).map(|(a, b)| a * b).sum();
                    let eta: f64 = StandardNormal.sample(&mut rng);
                    logits.push((kappa * (proj + logit_sd * eta)) as f32);
                }
            }
            SplitData {
                features: ArrayF32::new(n, d, features).expect("sized by construction"),
                logits: ArrayF32::new(n, c, logits).expect("sized by construction"),
                labels: Some(base.labels.clone()),
            }
        });
        CheckpointRecord {
            task_id: task_id(task),
            algorithm: plan.algorithm.clone(),
            run_id: run as u32,
            checkpoint_index: index as u32,
            num_classes: c,
            source_train: splits.next().expect("three splits"),
            source_val: splits.next().expect("three splits"),
            target: splits.next().expect("three splits"),
        }
    }

    /// Checkpoint as written to disk, pathology included.
    pub fn record(&self, task: usize, run: usize, index: usize) -> CheckpointRecord {
        let record = self.record_at_quality(task, run, index, self.quality(task, run, index));
        inject_pathology(&record, self.pathology(task, run, index))
    }

    pub fn coordinates(&self) -> Vec<(usize, usize, usize)> {
        let cfg = &self.config;
        let mut out = Vec::with_capacity(cfg.num_checkpoints());
        for t in 0..cfg.num_tasks {
            for r in 0..cfg.runs_per_task {
                for i in 0..cfg.checkpoints_per_run {
                    out.push((t, r, i));
                }
            }
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SynthSummary {
    pub root: PathBuf,
    pub tasks: Vec<String>,
    pub checkpoints: usize,
}

/// Writes the whole benchmark tree under `root`.
pub fn generate_benchmark(config: &SynthConfig, root: &Path) -> Result<SynthSummary, SynthError> {
    let bench = SynthBenchmark::new(config.clone())?;
    bench.coordinates().par_iter().try_for_each(|&(t, r, i)| {
        let record = bench.record(t, r, i);
        write_checkpoint(&record, checkpoint_dir(root, &record.task_id, record.run_id, record.checkpoint_index))
    })?;
    Ok(SynthSummary {
        root: root.to_path_buf(),
        tasks: (0..config.num_tasks).map(task_id).collect(),
        checkpoints: config.num_checkpoints(),
    })
}

/// Target-domain accuracy from the stored target labels.
pub fn oracle_accuracy(record: &CheckpointRecord) -> Result<f64, ValidatorError> {
    accuracy_score(&record.target).map_err(|e| match e {
        ValidatorError::NoLabels => ValidatorError::MissingLabels(Split::Target),
        other => other,
    })
}

/// Returns a modified copy; `None` returns an identical copy.
pub fn inject_pathology(record: &CheckpointRecord, pathology: Option<Pathology>) -> CheckpointRecord {
    let mut out = record.clone();
    let c = record.num_classes;
    match pathology {
        None => {}
        Some(Pathology::ConfidentWrong) => {
            let target = &mut out.target;
            for i in 0..target.logits.rows() {
                let anchor = match &target.labels {
                    Some(labels) => labels[i] as usize,
                    None => {
                        let row: Vec<f64> = target.logits.row(i).iter().map(|&v| f64::from(v)).collect();
                        crate::kernels::argmax(&row)
                    }
                };
                let row = target.logits.row_mut(i);
                row.fill(0.0);
                row[(anchor + 1) % c] = CONFIDENT_MARGIN;
            }
        }
        Some(Pathology::CollapseClusters) => {
            let features = &mut out.target.features;
            if features.rows() > 0 {
                let center = features.row(0).to_vec();
                for i in 0..features.rows() {
                    for (v, &m) in features.row_mut(i).iter_mut().zip(&center) {
                        *v = m + COLLAPSE_FACTOR * (*v - m);
                    }
                }
            }
        }
    }
    out
}

fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

/// Probability that the true class has the largest logit at quality `q`:
/// `∫ φ(z) Φ(z + S·q/σ)^(C−1) dz` with `σ² = 1 + (1−q)²`.
pub fn analytic_accuracy(q: f64, separation: f64, num_classes: usize) -> f64 {
    let sigma = (1.0 + (1.0 - q).powi(2)).sqrt();
    let shift = separation * q / sigma;
    let (lo, hi, steps) = (-12.0, 12.0 + shift.max(0.0), 6000usize);
    let h = (hi - lo) / steps as f64;
    let f = |z: f64| {
        let phi = (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt();
        phi * normal_cdf(z + shift).powi(num_classes as i32 - 1)
    };
    let mut sum = f(lo) + f(hi);
    for i in 1..steps {
        sum += f(lo + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    sum * h / 3.0
}
