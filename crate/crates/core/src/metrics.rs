//! Rank statistics for judging validators against target accuracy:
//! quadratic emphasis weights, weighted ranks, weighted Spearman
//! correlation (WSC), plain Spearman, cross-task averaging, average accuracy
//! of the top N training runs (AATN), and the noise-resilience experiment.
//!
//! Correlations are returned on the ×100 scale.

use rand_distr::{Distribution, StandardNormal};

use crate::kernels::{dense_rank, KernelError};
use crate::seed::rng_for;

#[derive(Clone, Debug, thiserror::Error, PartialEq)]
pub enum MetricsError {
    #[error("series lengths differ ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("need at least {needed} samples, have {have}")]
    TooShort { needed: usize, have: usize },
    #[error("degenerate input: {0}")]
    DegenerateInput(&'static str),
    #[error("non-finite value at position {0}")]
    NonFinite(usize),
    #[error("asked for top {n} of {runs} runs")]
    TooManyRuns { n: usize, runs: usize },
    #[error("run {0} has no checkpoints")]
    EmptyRun(usize),
    #[error("no tasks")]
    NoTasks,
    #[error("every task was degenerate")]
    AllTasksDegenerate,
    #[error("sigma must be finite and non-negative, got {0}")]
    BadSigma(f64),
    #[error("noise experiment needs at least two usable validators, have {0}")]
    TooFewValidators(usize),
}

impl From<KernelError> for MetricsError {
    fn from(e: KernelError) -> Self {
        match e {
            KernelError::NaN(i) => MetricsError::NonFinite(i),
            _ => MetricsError::DegenerateInput("kernel error"),
        }
    }
}

/// Oriented validator scores paired with target accuracies, one entry per
/// checkpoint.
#[derive(Clone, Debug, PartialEq)]
pub struct PairedSeries {
    pub scores: Vec<f64>,
    pub accuracies: Vec<f64>,
}

impl PairedSeries {
    pub fn new(scores: Vec<f64>, accuracies: Vec<f64>) -> Result<Self, MetricsError> {
        if scores.len() != accuracies.len() {
            return Err(MetricsError::LengthMismatch(scores.len(), accuracies.len()));
        }
        let n = scores.len();
        if let Some(i) = scores.iter().chain(&accuracies).position(|v| !v.is_finite()) {
            return Err(MetricsError::NonFinite(i % n.max(1)));
        }
        Ok(Self { scores, accuracies })
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }
}

/// `w_i = max(r_v(i) / max r_v, r_a(i) / max r_a)²` with dense ranks.
pub fn quadratic_weights(series: &PairedSeries) -> Result<Vec<f64>, MetricsError> {
    if series.len() < 2 {
        return Err(MetricsError::TooShort {
            needed: 2,
            have: series.len(),
        });
    }
    let rv = dense_rank(&series.scores)?;
    let ra = dense_rank(&series.accuracies)?;
    let max_v = *rv.iter().max().expect("non-empty") as f64;
    let max_a = *ra.iter().max().expect("non-empty") as f64;
    Ok(rv
        .iter()
        .zip(&ra)
        .map(|(&v, &a)| {
            let w = (v as f64 / max_v).max(a as f64 / max_a);
            w * w
        })
        .collect())
}

/// Weighted rank of each value: total weight of strictly smaller values plus
/// `(t + 1) / 2` times the mean weight of its tie group of size `t`.
pub fn weighted_ranks(values: &[f64], weights: &[f64]) -> Result<Vec<f64>, MetricsError> {
    if values.len() != weights.len() {
        return Err(MetricsError::LengthMismatch(values.len(), weights.len()));
    }
    let ranks = dense_rank(values)?;
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by_key(|&i| ranks[i]);
    let mut out = vec![0.0; values.len()];
    let mut below = 0.0;
    let mut start = 0;
    while start < order.len() {
        let rank = ranks[order[start]];
        let end = start + order[start..].iter().take_while(|&&i| ranks[i] == rank).count();
        let group = &order[start..end];
        let t = group.len() as f64;
        let group_weight: f64 = group.iter().map(|&i| weights[i]).sum();
        let b = (t + 1.0) / 2.0 * (group_weight / t);
        for &i in group {
            out[i] = below + b;
        }
        below += group_weight;
        start = end;
    }
    Ok(out)
}

/// Weighted Pearson correlation in [-1, 1].
pub fn weighted_pearson(x: &[f64], y: &[f64], w: &[f64]) -> Result<f64, MetricsError> {
    let sw: f64 = w.iter().sum();
    let mx = x.iter().zip(w).map(|(x, w)| w * x).sum::<f64>() / sw;
    let my = y.iter().zip(w).map(|(y, w)| w * y).sum::<f64>() / sw;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for i in 0..x.len() {
        let dx = x[i] - mx;
        let dy = y[i] - my;
        sxy += w[i] * dx * dy;
        sxx += w[i] * dx * dx;
        syy += w[i] * dy * dy;
    }
    if sxx <= 0.0 || syy <= 0.0 {
        return Err(MetricsError::DegenerateInput("zero weighted variance"));
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

fn check_rank_inputs(series: &PairedSeries) -> Result<(), MetricsError> {
    if series.len() < 3 {
        return Err(MetricsError::TooShort {
            needed: 3,
            have: series.len(),
        });
    }
    let distinct = |v: &[f64]| v.iter().any(|x| *x != v[0]);
    if !distinct(&series.scores) {
        return Err(MetricsError::DegenerateInput("validator scores are constant"));
    }
    if !distinct(&series.accuracies) {
        return Err(MetricsError::DegenerateInput("accuracies are constant"));
    }
    Ok(())
}

/// WSC with caller-supplied weights (×100).
pub fn weighted_spearman_with_weights(series: &PairedSeries, weights: &[f64]) -> Result<f64, MetricsError> {
    check_rank_inputs(series)?;
    let x = weighted_ranks(&series.scores, weights)?;
    let y = weighted_ranks(&series.accuracies, weights)?;
    Ok(100.0 * weighted_pearson(&x, &y, weights)?)
}

/// Weighted Spearman correlation (×100) emphasizing pairs with a high score
/// or a high accuracy.
pub fn weighted_spearman(series: &PairedSeries) -> Result<f64, MetricsError> {
    check_rank_inputs(series)?;
    let w = quadratic_weights(series)?;
    weighted_spearman_with_weights(series, &w)
}

/// Classic average ranks (1-based, ties share the mean position).
pub fn average_ranks(values: &[f64]) -> Result<Vec<f64>, MetricsError> {
    weighted_ranks(values, &vec![1.0; values.len()])
}

/// Spearman correlation (×100): Pearson of average ranks.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64, MetricsError> {
    let series = PairedSeries::new(x.to_vec(), y.to_vec())?;
    check_rank_inputs(&series)?;
    let rx = average_ranks(x)?;
    let ry = average_ranks(y)?;
    Ok(100.0 * weighted_pearson(&rx, &ry, &vec![1.0; x.len()])?)
}

#[derive(Clone, Debug, PartialEq)]
pub struct AvgWsc {
    pub mean: f64,
    /// Sample standard deviation across usable tasks; 0 with one task.
    pub std: f64,
    pub per_task: Vec<Result<f64, MetricsError>>,
    /// Only one task contributed, so `std` is a convention rather than data.
    pub single_task: bool,
}

impl AvgWsc {
    pub fn excluded(&self) -> usize {
        self.per_task.iter().filter(|r| r.is_err()).count()
    }
}

pub fn mean_and_sample_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Unweighted mean of per-task WSC. Degenerate tasks are excluded and
/// reported in `per_task`.
pub fn avg_wsc_across_tasks(per_task: &[PairedSeries]) -> Result<AvgWsc, MetricsError> {
    if per_task.is_empty() {
        return Err(MetricsError::NoTasks);
    }
    let results: Vec<Result<f64, MetricsError>> = per_task.iter().map(weighted_spearman).collect();
    let ok: Vec<f64> = results.iter().filter_map(|r| r.as_ref().ok().copied()).collect();
    if ok.is_empty() {
        return Err(MetricsError::AllTasksDegenerate);
    }
    let (mean, std) = mean_and_sample_std(&ok);
    Ok(AvgWsc {
        mean,
        std,
        single_task: ok.len() == 1,
        per_task: results,
    })
}

/// One training run: oriented scores and accuracies per checkpoint, in
/// checkpoint order.
#[derive(Clone, Debug, PartialEq)]
pub struct RunSeries {
    pub scores: Vec<f64>,
    pub accuracies: Vec<f64>,
}

/// Average accuracy of the checkpoints a validator picks from its top `n`
/// runs. Within a run the first maximal score wins; runs are ordered by their
/// best score, descending, keeping input order on ties.
pub fn aatn(runs: &[RunSeries], n: usize) -> Result<f64, MetricsError> {
    if n == 0 || n > runs.len() {
        return Err(MetricsError::TooManyRuns { n, runs: runs.len() });
    }
    let mut best = Vec::with_capacity(runs.len());
    for (i, run) in runs.iter().enumerate() {
        if run.scores.is_empty() {
            return Err(MetricsError::EmptyRun(i));
        }
        if run.scores.len() != run.accuracies.len() {
            return Err(MetricsError::LengthMismatch(run.scores.len(), run.accuracies.len()));
        }
        if let Some(p) = run.scores.iter().position(|v| v.is_nan()) {
            return Err(MetricsError::NonFinite(p));
        }
        let mut s = 0;
        for (j, &v) in run.scores.iter().enumerate() {
            if v > run.scores[s] {
                s = j;
            }
        }
        best.push((run.scores[s], run.accuracies[s]));
    }
    let mut order: Vec<usize> = (0..runs.len()).collect();
    order.sort_by(|&a, &b| best[b].0.total_cmp(&best[a].0));
    Ok(order[..n].iter().map(|&i| best[i].1).sum::<f64>() / n as f64)
}

/// Validator scores for a whole benchmark, grouped task → run → checkpoint.
#[derive(Clone, Debug, PartialEq)]
pub struct ScoreTable {
    pub variants: Vec<String>,
    pub tasks: Vec<TaskTable>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TaskTable {
    pub task_id: String,
    pub runs: Vec<RunTable>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunTable {
    pub algorithm: String,
    pub run_id: u32,
    /// Target accuracy per checkpoint.
    pub accuracies: Vec<f64>,
    /// `scores[v][c]`: oriented score of variant `v` on checkpoint `c`;
    /// NaN where scoring failed.
    pub scores: Vec<Vec<f64>>,
}

impl TaskTable {
    /// Concatenated (scores, accuracies) of variant `v` over all runs.
    pub fn series(&self, v: usize, accuracies: Option<&[Vec<f64>]>) -> (Vec<f64>, Vec<f64>) {
        let mut s = Vec::new();
        let mut a = Vec::new();
        for (r, run) in self.runs.iter().enumerate() {
            s.extend_from_slice(&run.scores[v]);
            a.extend_from_slice(accuracies.map_or(&run.accuracies, |acc| &acc[r]));
        }
        (s, a)
    }

    /// Algorithms in first-appearance order.
    pub fn algorithms(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for r in &self.runs {
            if !out.contains(&r.algorithm) {
                out.push(r.algorithm.clone());
            }
        }
        out
    }

    pub fn run_series(&self, v: usize, algorithm: &str, accuracies: Option<&[Vec<f64>]>) -> Vec<RunSeries> {
        self.runs
            .iter()
            .enumerate()
            .filter(|(_, r)| r.algorithm == algorithm)
            .map(|(i, r)| RunSeries {
                scores: r.scores[v].clone(),
                accuracies: accuracies.map_or_else(|| r.accuracies.clone(), |acc| acc[i].clone()),
            })
            .collect()
    }
}

impl ScoreTable {
    pub fn variant_index(&self, name: &str) -> Option<usize> {
        self.variants.iter().position(|v| v == name)
    }

    /// Variants with a finite score on every checkpoint.
    pub fn complete_variants(&self) -> Vec<usize> {
        (0..self.variants.len())
            .filter(|&v| {
                self.tasks
                    .iter()
                    .flat_map(|t| &t.runs)
                    .all(|r| r.scores[v].iter().all(|s| s.is_finite()))
            })
            .collect()
    }

    /// Average WSC across tasks for variant `v`, optionally with replacement
    /// accuracies (`acc[task][run][checkpoint]`).
    pub fn avg_wsc(&self, v: usize, acc: Option<&[Vec<Vec<f64>>]>) -> Result<AvgWsc, MetricsError> {
        let series: Vec<PairedSeries> = self
            .tasks
            .iter()
            .enumerate()
            .map(|(t, task)| {
                let (s, a) = task.series(v, acc.map(|a| a[t].as_slice()));
                PairedSeries::new(s, a)
            })
            .collect::<Result<_, _>>()?;
        avg_wsc_across_tasks(&series)
    }

    /// AATN for variant `v` averaged over every (task, algorithm) group.
    pub fn mean_aatn(&self, v: usize, n: usize, acc: Option<&[Vec<Vec<f64>>]>) -> Result<f64, MetricsError> {
        let mut values = Vec::new();
        for (t, task) in self.tasks.iter().enumerate() {
            for alg in task.algorithms() {
                let runs = task.run_series(v, &alg, acc.map(|a| a[t].as_slice()));
                values.push(aatn(&runs, n)?);
            }
        }
        if values.is_empty() {
            return Err(MetricsError::NoTasks);
        }
        Ok(values.iter().sum::<f64>() / values.len() as f64)
    }

    fn accuracies(&self) -> Vec<Vec<Vec<f64>>> {
        self.tasks
            .iter()
            .map(|t| t.runs.iter().map(|r| r.accuracies.clone()).collect())
            .collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RankingMetric {
    Wsc,
    Aatn(usize),
}

impl std::fmt::Display for RankingMetric {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            RankingMetric::Wsc => f.write_str("WSC"),
            RankingMetric::Aatn(n) => write!(f, "AATN-{n}"),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct NoisePoint {
    pub sigma: f64,
    pub metric: RankingMetric,
    /// Mean over seeds of the rank correlation in [-1, 1].
    pub mean: f64,
    pub std: f64,
    /// Seeds that produced a usable ranking.
    pub seeds_used: usize,
    pub error: Option<MetricsError>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct NoiseCurve {
    /// Variants that took part in the ranking.
    pub variants: Vec<String>,
    /// Variants dropped because of failed scores or a degenerate baseline.
    pub excluded: Vec<String>,
    pub points: Vec<NoisePoint>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct NoiseConfig {
    /// Noise standard deviations in accuracy percentage points.
    pub sigmas: Vec<f64>,
    pub seeds: usize,
    pub master_seed: u64,
    pub aatn_n: usize,
}

fn aggregate(table: &ScoreTable, v: usize, metric: RankingMetric, acc: &[Vec<Vec<f64>>]) -> Result<f64, MetricsError> {
    match metric {
        RankingMetric::Wsc => table.avg_wsc(v, Some(acc)).map(|a| a.mean),
        RankingMetric::Aatn(n) => table.mean_aatn(v, n, Some(acc)),
    }
}

/// Rank correlation between the validator ranking with noiseless accuracies
/// and the ranking after adding Gaussian noise (in percentage points) to
/// every accuracy, for each sigma and both ranking metrics.
///
/// Accuracies in `table` are fractions; they are converted to percent before
/// noise is added. Each seed draws one standard-normal vector that is scaled
/// by every sigma.
pub fn noise_resilience(table: &ScoreTable, config: &NoiseConfig) -> Result<NoiseCurve, MetricsError> {
    if let Some(&s) = config.sigmas.iter().find(|s| !(s.is_finite() && **s >= 0.0)) {
        return Err(MetricsError::BadSigma(s));
    }
    let metrics = [RankingMetric::Wsc, RankingMetric::Aatn(config.aatn_n)];
    let percent: Vec<Vec<Vec<f64>>> = table
        .accuracies()
        .into_iter()
        .map(|t| t.into_iter().map(|r| r.into_iter().map(|a| a * 100.0).collect()).collect())
        .collect();

    let mut usable = Vec::new();
    let mut excluded = Vec::new();
    let mut baselines = vec![Vec::new(); metrics.len()];
    let complete = table.complete_variants();
    for v in 0..table.variants.len() {
        let base: Result<Vec<f64>, MetricsError> = if complete.contains(&v) {
            metrics.iter().map(|&m| aggregate(table, v, m, &percent)).collect()
        } else {
            Err(MetricsError::NonFinite(0))
        };
        match base {
            Ok(values) => {
                usable.push(v);
                for (b, x) in baselines.iter_mut().zip(values) {
                    b.push(x);
                }
            }
            Err(_) => excluded.push(table.variants[v].clone()),
        }
    }
    if usable.len() < 2 {
        return Err(MetricsError::TooFewValidators(usable.len()));
    }

    let noise: Vec<Vec<Vec<Vec<f64>>>> = (0..config.seeds)
        .map(|s| {
            let mut rng = rng_for(config.master_seed, &[0x6e6f, s as u64]);
            percent
                .iter()
                .map(|t| {
                    t.iter()
                        .map(|r| r.iter().map(|_| StandardNormal.sample(&mut rng)).collect())
                        .collect()
                })
                .collect()
        })
        .collect();

    let mut points = Vec::new();
    for &sigma in &config.sigmas {
        for (m, &metric) in metrics.iter().enumerate() {
            let mut correlations = Vec::new();
            let mut last_error = None;
            for z in &noise {
                let noisy: Vec<Vec<Vec<f64>>> = percent
                    .iter()
                    .zip(z)
                    .map(|(t, zt)| {
                        t.iter()
                            .zip(zt)
                            .map(|(r, zr)| r.iter().zip(zr).map(|(a, e)| a + sigma * e).collect())
                            .collect()
                    })
                    .collect();
                let values: Result<Vec<f64>, MetricsError> =
                    usable.iter().map(|&v| aggregate(table, v, metric, &noisy)).collect();
                match values.and_then(|vals| spearman(&baselines[m], &vals)) {
                    Ok(c) => correlations.push(c / 100.0),
                    Err(e) => last_error = Some(e),
                }
            }
            let (mean, std) = if correlations.is_empty() {
                (f64::NAN, f64::NAN)
            } else {
                mean_and_sample_std(&correlations)
            };
            points.push(NoisePoint {
                sigma,
                metric,
                mean,
                std,
                seeds_used: correlations.len(),
                error: if correlations.is_empty() { last_error } else { None },
            });
        }
    }
    Ok(NoiseCurve {
        variants: usable.iter().map(|&v| table.variants[v].clone()).collect(),
        excluded,
        points,
    })
}
