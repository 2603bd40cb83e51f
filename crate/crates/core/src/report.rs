//! Command back ends: scoring a benchmark tree, building score tables, the
//! WSC / AATN / noise tables, CSV I/O, and the markdown summary.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::metrics::{
    aatn, avg_wsc_across_tasks, mean_and_sample_std, noise_resilience, AvgWsc, MetricsError, NoiseConfig, NoiseCurve,
    PairedSeries, RunSeries, RunTable, ScoreTable, TaskTable,
};
use crate::seed::{derive_seed, hash_str};
use crate::store::{load_checkpoint, scan_benchmark, CheckpointRecord, StoreError};
use crate::synth::{oracle_accuracy, SynthError};
use crate::validators::{score_all, ScoringConfig, ValidatorError, ValidatorVariant};

pub const ORACLE: &str = "Oracle";
pub const SCORES_CSV: &str = "scores.csv";
pub const WSC_PER_TASK_CSV: &str = "wsc_per_task.csv";
pub const WSC_SUMMARY_CSV: &str = "wsc_summary.csv";
pub const WSC_BEST_CSV: &str = "wsc_best_per_algorithm.csv";
pub const AATN_CSV: &str = "aatn.csv";
pub const NOISE_CSV: &str = "noise.csv";
pub const REPORT_MD: &str = "report.md";
pub const RUN_MANIFEST: &str = "run_manifest.json";

#[derive(Debug, thiserror::Error)]
pub enum ReportError {
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error(transparent)]
    Validator(#[from] ValidatorError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("csv error in {path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
    #[error("required input {0} not found")]
    MissingInput(PathBuf),
    #[error("no accuracy for task {task_id}, run {run_id}, checkpoint {checkpoint_index}")]
    MissingAccuracy {
        task_id: String,
        run_id: u32,
        checkpoint_index: u32,
    },
    #[error("malformed value {value:?} in column {column} of {path}")]
    Parse {
        path: PathBuf,
        column: &'static str,
        value: String,
    },
    #[error("{0}")]
    Usage(String),
}

pub type Result<T, E = ReportError> = std::result::Result<T, E>;

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> ReportError + '_ {
    move |source| ReportError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn csv_err(path: &Path) -> impl FnOnce(csv::Error) -> ReportError + '_ {
    move |source| ReportError::Csv {
        path: path.to_path_buf(),
        source,
    }
}

/// Fixed six decimals; negative zero prints as zero.
pub fn fmt6(v: f64) -> String {
    if v == 0.0 {
        "0.000000".into()
    } else {
        format!("{v:.6}")
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt6).unwrap_or_default()
}

/// One line of `scores.csv`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoreRow {
    pub task_id: String,
    pub algorithm: String,
    pub run_id: u32,
    pub checkpoint_index: u32,
    pub variant: String,
    pub raw: Option<f64>,
    pub oriented: Option<f64>,
    pub error: String,
}

/// Parses a comma-separated variant filter; empty means all 35.
pub fn parse_variants(names: &[String]) -> Result<Vec<ValidatorVariant>> {
    if names.is_empty() {
        return Ok(crate::validators::all_variants());
    }
    names
        .iter()
        .map(|n| ValidatorVariant::from_name(n.trim()).map_err(ReportError::from))
        .collect()
}

/// Rows for one checkpoint: every requested variant in order, then the
/// oracle row when target labels exist.
pub fn score_record(record: &CheckpointRecord, variants: &[ValidatorVariant], seed: u64) -> Vec<ScoreRow> {
    let ckpt_seed = derive_seed(
        seed,
        &[hash_str(&record.task_id), u64::from(record.run_id), u64::from(record.checkpoint_index)],
    );
    let row = |variant: String, raw: Option<f64>, oriented: Option<f64>, error: String| ScoreRow {
        task_id: record.task_id.clone(),
        algorithm: record.algorithm.clone(),
        run_id: record.run_id,
        checkpoint_index: record.checkpoint_index,
        variant,
        raw,
        oriented,
        error,
    };
    let mut rows: Vec<ScoreRow> = score_all(record, variants, ScoringConfig::with_seed(ckpt_seed))
        .into_iter()
        .map(|entry| match entry.result {
            Ok(s) => row(entry.variant.name(), Some(s.raw), Some(s.oriented), String::new()),
            Err(e) => row(entry.variant.name(), None, None, e.to_string()),
        })
        .collect();
    if let Ok(acc) = oracle_accuracy(record) {
        rows.push(row(ORACLE.into(), Some(acc), Some(acc), String::new()));
    }
    rows
}

/// Scores every checkpoint under `root` in parallel; rows come back in
/// index order.
pub fn score_benchmark(root: &Path, variants: &[ValidatorVariant], seed: u64) -> Result<Vec<ScoreRow>> {
    let index = scan_benchmark(root)?;
    let per_ckpt: Vec<Vec<ScoreRow>> = index
        .checkpoint_paths()
        .par_iter()
        .map(|path| load_checkpoint(path).map(|rec| score_record(&rec, variants, seed)))
        .collect::<std::result::Result<_, _>>()?;
    Ok(per_ckpt.into_iter().flatten().collect())
}

fn writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    let file = fs::File::create(path).map_err(io_err(path))?;
    Ok(csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(file))
}

fn write_table(path: &Path, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(header).map_err(csv_err(path))?;
    for r in rows {
        w.write_record(&r).map_err(csv_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

fn read_rows<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    if !path.exists() {
        return Err(ReportError::MissingInput(path.to_path_buf()));
    }
    let mut r = csv::Reader::from_path(path).map_err(csv_err(path))?;
    r.deserialize().collect::<std::result::Result<Vec<T>, _>>().map_err(csv_err(path))
}

pub fn write_scores_csv(path: &Path, rows: &[ScoreRow]) -> Result<()> {
    write_table(
        path,
        &["task_id", "algorithm", "run_id", "checkpoint_index", "variant", "raw", "oriented", "error"],
        rows.iter().map(|r| {
            vec![
                r.task_id.clone(),
                r.algorithm.clone(),
                r.run_id.to_string(),
                r.checkpoint_index.to_string(),
                r.variant.clone(),
                fmt_opt(r.raw),
                fmt_opt(r.oriented),
                r.error.clone(),
            ]
        }),
    )
}

pub fn read_scores_csv(path: &Path) -> Result<Vec<ScoreRow>> {
    read_rows(path)
}

type CkptKey = (String, u32, u32);

#[derive(Debug, Deserialize)]
struct AccuracyRow {
    task_id: String,
    run_id: u32,
    checkpoint_index: u32,
    accuracy: f64,
}

/// Reads `task_id,run_id,checkpoint_index,accuracy`.
pub fn read_accuracy_csv(path: &Path) -> Result<HashMap<CkptKey, f64>> {
    let rows: Vec<AccuracyRow> = read_rows(path)?;
    Ok(rows
        .into_iter()
        .map(|r| ((r.task_id, r.run_id, r.checkpoint_index), r.accuracy))
        .collect())
}

/// Algorithm plus checkpoint index → per-variant oriented scores.
type GroupedRun = (String, BTreeMap<u32, Vec<f64>>);

/// Groups score rows into a task → run → checkpoint table. Accuracies come
/// from `accuracies` when given, otherwise from the oracle rows. A variant
/// missing on some checkpoint gets NaN there.
pub fn build_score_table(rows: &[ScoreRow], accuracies: Option<&HashMap<CkptKey, f64>>) -> Result<ScoreTable> {
    let mut variants: Vec<String> = Vec::new();
    let mut variant_pos: HashMap<&str, usize> = HashMap::new();
    for r in rows {
        if !variant_pos.contains_key(r.variant.as_str()) {
            variant_pos.insert(&r.variant, variants.len());
            variants.push(r.variant.clone());
        }
    }
    let mut task_order: Vec<&str> = Vec::new();
    let mut grouped: HashMap<&str, BTreeMap<u32, GroupedRun>> = HashMap::new();
    for r in rows {
        let runs = grouped.entry(&r.task_id).or_insert_with(|| {
            task_order.push(&r.task_id);
            BTreeMap::new()
        });
        let (_, ckpts) = runs
            .entry(r.run_id)
            .or_insert_with(|| (r.algorithm.clone(), BTreeMap::new()));
        let slot = ckpts
            .entry(r.checkpoint_index)
            .or_insert_with(|| vec![f64::NAN; variants.len()]);
        slot[variant_pos[r.variant.as_str()]] = r.oriented.unwrap_or(f64::NAN);
    }
    let oracle = variant_pos.get(ORACLE).copied();
    let mut tasks = Vec::with_capacity(task_order.len());
    for task_id in task_order {
        let mut runs = Vec::new();
        for (&run_id, (algorithm, ckpts)) in &grouped[task_id] {
            let mut accs = Vec::with_capacity(ckpts.len());
            let mut scores = vec![Vec::with_capacity(ckpts.len()); variants.len()];
            for (&idx, per_variant) in ckpts {
                let key = (task_id.to_string(), run_id, idx);
                let acc = match accuracies {
                    Some(map) => map.get(&key).copied(),
                    None => oracle.map(|o| per_variant[o]).filter(|a| a.is_finite()),
                };
                accs.push(acc.ok_or_else(|| ReportError::MissingAccuracy {
                    task_id: key.0.clone(),
                    run_id,
                    checkpoint_index: idx,
                })?);
                for (v, s) in per_variant.iter().enumerate() {
                    scores[v].push(*s);
                }
            }
            runs.push(RunTable {
                algorithm: algorithm.clone(),
                run_id,
                accuracies: accs,
                scores,
            });
        }
        tasks.push(TaskTable {
            task_id: task_id.to_string(),
            runs,
        });
    }
    Ok(ScoreTable { variants, tasks })
}

/// Copy of `table` without the named variant.
pub fn without_variant(table: &ScoreTable, name: &str) -> ScoreTable {
    let Some(skip) = table.variant_index(name) else {
        return table.clone();
    };
    let mut out = table.clone();
    out.variants.remove(skip);
    for run in out.tasks.iter_mut().flat_map(|t| t.runs.iter_mut()) {
        run.scores.remove(skip);
    }
    out
}

#[derive(Clone, Debug, PartialEq)]
pub struct TaskWsc {
    pub task_id: String,
    pub variant: String,
    pub wsc: Result<f64, MetricsError>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct WscSummary {
    pub variant: String,
    pub result: Result<AvgWsc, MetricsError>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BestPerAlgorithm {
    pub algorithm: String,
    pub variant: String,
    pub mean_wsc: f64,
    pub std_wsc: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Ranking {
    pub per_task: Vec<TaskWsc>,
    pub summary: Vec<WscSummary>,
    pub best: Vec<BestPerAlgorithm>,
}

fn task_series(task: &TaskTable, v: usize, algorithm: Option<&str>) -> Result<PairedSeries, MetricsError> {
    let mut s = Vec::new();
    let mut a = Vec::new();
    for run in task.runs.iter().filter(|r| algorithm.is_none_or(|alg| r.algorithm == alg)) {
        s.extend_from_slice(&run.scores[v]);
        a.extend_from_slice(&run.accuracies);
    }
    PairedSeries::new(s, a)
}

fn avg_over_tasks(table: &ScoreTable, v: usize, algorithm: Option<&str>) -> (Vec<Result<f64, MetricsError>>, Result<AvgWsc, MetricsError>) {
    let mut per_task = Vec::new();
    let mut usable = Vec::new();
    for task in &table.tasks {
        if algorithm.is_some_and(|alg| !task.runs.iter().any(|r| r.algorithm == alg)) {
            continue;
        }
        match task_series(task, v, algorithm) {
            Ok(series) => {
                per_task.push(crate::metrics::weighted_spearman(&series));
                usable.push(series);
            }
            Err(e) => per_task.push(Err(e)),
        }
    }
    let summary = if usable.is_empty() {
        Err(per_task.iter().find_map(|r| r.clone().err()).unwrap_or(MetricsError::NoTasks))
    } else {
        avg_wsc_across_tasks(&usable).map(|mut avg| {
            avg.per_task = per_task.clone();
            avg
        })
    };
    (per_task, summary)
}

/// Per-task WSC, cross-task summary, and the best variant per algorithm.
pub fn rank(table: &ScoreTable) -> Ranking {
    let mut per_task = Vec::new();
    let mut summary = Vec::new();
    for (v, name) in table.variants.iter().enumerate() {
        let (tasks, avg) = avg_over_tasks(table, v, None);
        for (task, wsc) in table.tasks.iter().zip(tasks) {
            per_task.push(TaskWsc {
                task_id: task.task_id.clone(),
                variant: name.clone(),
                wsc,
            });
        }
        summary.push(WscSummary {
            variant: name.clone(),
            result: avg,
        });
    }
    let mut algorithms: Vec<String> = Vec::new();
    for task in &table.tasks {
        for alg in task.algorithms() {
            if !algorithms.contains(&alg) {
                algorithms.push(alg);
            }
        }
    }
    let best = algorithms
        .into_iter()
        .filter_map(|alg| {
            table
                .variants
                .iter()
                .enumerate()
                .filter(|(_, name)| name.as_str() != ORACLE)
                .filter_map(|(v, name)| {
                    avg_over_tasks(table, v, Some(&alg))
                        .1
                        .ok()
                        .map(|avg| (name.clone(), avg.mean, avg.std))
                })
                .fold(None, |best: Option<(String, f64, f64)>, cand| match best {
                    Some(b) if b.1 >= cand.1 => Some(b),
                    _ => Some(cand),
                })
                .map(|(variant, mean_wsc, std_wsc)| BestPerAlgorithm {
                    algorithm: alg,
                    variant,
                    mean_wsc,
                    std_wsc,
                })
        })
        .collect();
    Ranking {
        per_task,
        summary,
        best,
    }
}

pub fn write_ranking(out: &Path, ranking: &Ranking) -> Result<()> {
    write_table(
        &out.join(WSC_PER_TASK_CSV),
        &["task_id", "variant", "wsc", "error"],
        ranking.per_task.iter().map(|r| {
            vec![
                r.task_id.clone(),
                r.variant.clone(),
                fmt_opt(r.wsc.as_ref().ok().copied()),
                r.wsc.as_ref().err().map(ToString::to_string).unwrap_or_default(),
            ]
        }),
    )?;
    write_table(
        &out.join(WSC_SUMMARY_CSV),
        &["variant", "mean", "std", "n_tasks", "excluded", "single_task", "error"],
        ranking.summary.iter().map(|s| match &s.result {
            Ok(avg) => vec![
                s.variant.clone(),
                fmt6(avg.mean),
                fmt6(avg.std),
                (avg.per_task.len() - avg.excluded()).to_string(),
                avg.excluded().to_string(),
                avg.single_task.to_string(),
                String::new(),
            ],
            Err(e) => vec![
                s.variant.clone(),
                String::new(),
                String::new(),
                "0".into(),
                String::new(),
                "false".into(),
                e.to_string(),
            ],
        }),
    )?;
    write_table(
        &out.join(WSC_BEST_CSV),
        &["algorithm", "variant", "mean_wsc", "std_wsc"],
        ranking
            .best
            .iter()
            .map(|b| vec![b.algorithm.clone(), b.variant.clone(), fmt6(b.mean_wsc), fmt6(b.std_wsc)]),
    )
}

#[derive(Clone, Debug, PartialEq)]
pub struct AatnRow {
    pub algorithm: String,
    pub variant: String,
    pub aatn: f64,
    pub oracle_aatn: f64,
    /// `aatn − oracle_aatn`.
    pub delta: f64,
}

/// AATN per (algorithm, variant), averaged over the tasks that ran the
/// algorithm. Variants with failed scores on any checkpoint of the
/// algorithm are skipped.
pub fn aatn_table(table: &ScoreTable, n: usize) -> Result<Vec<AatnRow>> {
    let mut algorithms: Vec<String> = Vec::new();
    for task in &table.tasks {
        for alg in task.algorithms() {
            if !algorithms.contains(&alg) {
                algorithms.push(alg);
            }
        }
    }
    let mut rows = Vec::new();
    for alg in &algorithms {
        let groups: Vec<&TaskTable> = table
            .tasks
            .iter()
            .filter(|t| t.runs.iter().any(|r| &r.algorithm == alg))
            .collect();
        let mut oracle_values = Vec::new();
        for task in &groups {
            let runs: Vec<RunSeries> = task
                .runs
                .iter()
                .filter(|r| &r.algorithm == alg)
                .map(|r| RunSeries {
                    scores: r.accuracies.clone(),
                    accuracies: r.accuracies.clone(),
                })
                .collect();
            oracle_values.push(aatn(&runs, n)?);
        }
        let oracle_aatn = oracle_values.iter().sum::<f64>() / oracle_values.len() as f64;
        for (v, name) in table.variants.iter().enumerate() {
            let values: std::result::Result<Vec<f64>, MetricsError> = groups
                .iter()
                .map(|task| {
                    let runs = task.run_series(v, alg, None);
                    if runs.iter().any(|r| r.scores.iter().any(|s| !s.is_finite())) {
                        return Err(MetricsError::NonFinite(0));
                    }
                    aatn(&runs, n)
                })
                .collect();
            match values {
                Ok(values) => {
                    let value = values.iter().sum::<f64>() / values.len() as f64;
                    rows.push(AatnRow {
                        algorithm: alg.clone(),
                        variant: name.clone(),
                        aatn: value,
                        oracle_aatn,
                        delta: value - oracle_aatn,
                    });
                }
                Err(e @ MetricsError::TooManyRuns { .. }) => return Err(e.into()),
                Err(_) => {}
            }
        }
    }
    Ok(rows)
}

pub fn write_aatn(out: &Path, rows: &[AatnRow]) -> Result<()> {
    write_table(
        &out.join(AATN_CSV),
        &["algorithm", "variant", "aatn", "oracle_aatn", "delta"],
        rows.iter().map(|r| {
            vec![
                r.algorithm.clone(),
                r.variant.clone(),
                fmt6(r.aatn),
                fmt6(r.oracle_aatn),
                fmt6(r.delta),
            ]
        }),
    )
}

/// Noise experiment over every non-oracle variant.
pub fn noise_table(table: &ScoreTable, config: &NoiseConfig) -> Result<NoiseCurve> {
    Ok(noise_resilience(&without_variant(table, ORACLE), config)?)
}

pub fn write_noise(out: &Path, curve: &NoiseCurve) -> Result<()> {
    write_table(
        &out.join(NOISE_CSV),
        &["sigma", "metric", "mean", "std", "seeds_used", "error"],
        curve.points.iter().map(|p| {
            let finite = |v: f64| if v.is_finite() { fmt6(v) } else { String::new() };
            vec![
                fmt6(p.sigma),
                p.metric.to_string(),
                finite(p.mean),
                finite(p.std),
                p.seeds_used.to_string(),
                p.error.as_ref().map(ToString::to_string).unwrap_or_default(),
            ]
        }),
    )
}

/// Records what produced the files in `out`, one entry per command.
pub fn update_run_manifest(out: &Path, command: &str, details: serde_json::Value) -> Result<()> {
    let path = out.join(RUN_MANIFEST);
    let mut manifest: serde_json::Map<String, serde_json::Value> = match fs::read_to_string(&path) {
        Ok(text) => serde_json::from_str(&text).unwrap_or_default(),
        Err(_) => serde_json::Map::new(),
    };
    manifest.insert(
        command.to_string(),
        serde_json::json!({ "version": env!("CARGO_PKG_VERSION"), "args": details }),
    );
    fs::create_dir_all(out).map_err(io_err(out))?;
    let text = serde_json::to_string_pretty(&manifest).expect("json map serializes");
    fs::write(&path, text + "\n").map_err(io_err(&path))
}

/// Dataset name of a task: everything before the first `_`.
pub fn dataset_of(task_id: &str) -> &str {
    task_id.split('_').next().unwrap_or(task_id)
}

#[derive(Debug, Deserialize)]
struct PerTaskIn {
    task_id: String,
    variant: String,
    wsc: Option<f64>,
}

#[derive(Debug, Deserialize)]
struct SummaryIn {
    variant: String,
    mean: Option<f64>,
    std: Option<f64>,
    n_tasks: usize,
}

#[derive(Debug, Deserialize)]
struct BestIn {
    algorithm: String,
    variant: String,
    mean_wsc: f64,
    std_wsc: f64,
}

#[derive(Debug, Deserialize)]
struct AatnIn {
    algorithm: String,
    variant: String,
    aatn: f64,
    delta: f64,
}

#[derive(Debug, Deserialize)]
struct NoiseIn {
    sigma: f64,
    metric: String,
    mean: Option<f64>,
    std: Option<f64>,
}

/// Escapes `|` so variant names stay inside one table cell.
fn cell(text: &str) -> String {
    text.replace('|', "\\|")
}

fn pm(mean: f64, std: f64) -> String {
    format!("{mean:.2} ± {std:.2}")
}

/// Variant, (mean, std) when any task scored, and the number of tasks.
type VariantStats = (String, Option<(f64, f64)>, usize);

/// Builds `report.md` from the CSVs in `dir`. The noise section is included
/// when `noise.csv` exists.
pub fn render_report(dir: &Path) -> Result<String> {
    let per_task: Vec<PerTaskIn> = read_rows(&dir.join(WSC_PER_TASK_CSV))?;
    let summary: Vec<SummaryIn> = read_rows(&dir.join(WSC_SUMMARY_CSV))?;
    let best: Vec<BestIn> = read_rows(&dir.join(WSC_BEST_CSV))?;
    let aatn_rows: Vec<AatnIn> = read_rows(&dir.join(AATN_CSV))?;
    let noise_path = dir.join(NOISE_CSV);
    let noise: Option<Vec<NoiseIn>> = if noise_path.exists() { Some(read_rows(&noise_path)?) } else { None };

    let mut md = String::from("# Validator benchmark report\n\n");

    md.push_str("## Average WSC across all tasks\n\n| Validator | WSC (mean ± std) | Tasks |\n|---|---|---|\n");
    let mut ordered: Vec<&SummaryIn> = summary.iter().collect();
    ordered.sort_by(|a, b| b.mean.unwrap_or(f64::NEG_INFINITY).total_cmp(&a.mean.unwrap_or(f64::NEG_INFINITY)));
    for s in ordered {
        let value = match (s.mean, s.std) {
            (Some(m), Some(sd)) => pm(m, sd),
            _ => "n/a".into(),
        };
        md.push_str(&format!("| {} | {} | {} |\n", cell(&s.variant), value, s.n_tasks));
    }

    let mut datasets: Vec<&str> = Vec::new();
    for r in &per_task {
        let d = dataset_of(&r.task_id);
        if !datasets.contains(&d) {
            datasets.push(d);
        }
    }
    for dataset in datasets {
        md.push_str(&format!(
            "\n## Dataset `{dataset}`\n\n| Validator | WSC (mean ± std) | Tasks |\n|---|---|---|\n"
        ));
        let mut by_variant: Vec<(String, Vec<f64>)> = Vec::new();
        for r in per_task.iter().filter(|r| dataset_of(&r.task_id) == dataset) {
            let pos = match by_variant.iter().position(|(v, _)| v == &r.variant) {
                Some(p) => p,
                None => {
                    by_variant.push((r.variant.clone(), Vec::new()));
                    by_variant.len() - 1
                }
            };
            if let Some(w) = r.wsc {
                by_variant[pos].1.push(w);
            }
        }
        let mut stats: Vec<VariantStats> = by_variant
            .into_iter()
            .map(|(v, vals)| {
                let s = (!vals.is_empty()).then(|| mean_and_sample_std(&vals));
                (v, s, vals.len())
            })
            .collect();
        stats.sort_by(|a, b| {
            let key = |s: &Option<(f64, f64)>| s.map_or(f64::NEG_INFINITY, |x| x.0);
            key(&b.1).total_cmp(&key(&a.1))
        });
        for (v, s, n) in stats {
            let value = s.map_or_else(|| "n/a".into(), |(m, sd)| pm(m, sd));
            md.push_str(&format!("| {} | {value} | {n} |\n", cell(&v)));
        }
    }

    md.push_str("\n## Best validator per algorithm\n\n| Algorithm | Validator | WSC (mean ± std) | AATN | Val − Oracle |\n|---|---|---|---|---|\n");
    for b in &best {
        let a = aatn_rows.iter().find(|a| a.algorithm == b.algorithm && a.variant == b.variant);
        let (aatn_cell, delta_cell) = a.map_or(("n/a".into(), "n/a".into()), |a| {
            (format!("{:.2}", 100.0 * a.aatn), format!("{:.2}", 100.0 * a.delta))
        });
        md.push_str(&format!(
            "| {} | {} | {} | {} | {} |\n",
            cell(&b.algorithm),
            cell(&b.variant),
            pm(b.mean_wsc, b.std_wsc),
            aatn_cell,
            delta_cell
        ));
    }

    if let Some(noise) = noise {
        md.push_str("\n## Ranking stability under accuracy noise\n\n| σ (points) | Metric | Correlation (mean ± std) |\n|---|---|---|\n");
        for r in &noise {
            let value = match (r.mean, r.std) {
                (Some(m), Some(sd)) => format!("{m:.3} ± {sd:.3}"),
                _ => "n/a".into(),
            };
            md.push_str(&format!("| {:.2} | {} | {} |\n", r.sigma, r.metric, value));
        }
    }
    Ok(md)
}

pub fn write_report(dir: &Path) -> Result<PathBuf> {
    let md = render_report(dir)?;
    let path = dir.join(REPORT_MD);
    fs::write(&path, md).map_err(io_err(&path))?;
    Ok(path)
}

/// Loads `scores.csv` (or `scores`) plus the optional accuracy override.
pub fn load_table(scores: &Path, accuracy_csv: Option<&Path>) -> Result<ScoreTable> {
    let rows = read_scores_csv(scores)?;
    let acc = accuracy_csv.map(read_accuracy_csv).transpose()?;
    build_score_table(&rows, acc.as_ref())
}
