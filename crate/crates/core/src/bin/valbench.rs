use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use valbench::metrics::NoiseConfig;
use valbench::report::{self, ReportError};
use valbench::synth::{generate_benchmark, SynthConfig};

#[derive(Parser)]
#[command(name = "valbench", version, about = "Score UDA checkpoints with label-free validators and rank the validators")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// Master seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Worker threads (0 = all cores).
    #[arg(long, env = "VALBENCH_JOBS", default_value_t = 0)]
    jobs: usize,
}

#[derive(Args)]
struct TableInput {
    /// Scores file; defaults to `<out>/scores.csv`.
    #[arg(long)]
    scores: Option<PathBuf>,
    /// `task_id,run_id,checkpoint_index,accuracy` file replacing the oracle rows.
    #[arg(long)]
    accuracy_csv: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic benchmark tree.
    Synth {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 3, value_parser = clap::value_parser!(u64).range(1..))]
        tasks: u64,
        #[arg(long, default_value_t = 10, value_parser = clap::value_parser!(u64).range(1..))]
        runs: u64,
        #[arg(long, default_value_t = 20, value_parser = clap::value_parser!(u64).range(1..))]
        checkpoints: u64,
        #[arg(long, default_value_t = 5)]
        classes: usize,
        #[arg(long, default_value_t = 16)]
        dim: usize,
        #[arg(long, default_value_t = 500, value_parser = clap::value_parser!(u64).range(1..))]
        samples: u64,
        /// Comma-separated algorithm names assigned to runs round-robin.
        #[arg(long, value_delimiter = ',', default_value = "algo_a,algo_b")]
        algorithms: Vec<String>,
        #[arg(long, default_value_t = 0.0)]
        domain_shift: f64,
        #[arg(long, default_value_t = 0.0)]
        confident_wrong: f64,
        #[arg(long, default_value_t = 0.0)]
        collapse: f64,
    },
    /// Score every checkpoint with the selected validators.
    Score {
        #[command(flatten)]
        common: Common,
        /// Benchmark root.
        #[arg(long)]
        root: PathBuf,
        /// Comma-separated canonical variant names; all 35 when omitted.
        #[arg(long, value_delimiter = ',')]
        variants: Vec<String>,
    },
    /// Weighted Spearman tables.
    Rank {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        input: TableInput,
    },
    /// Average accuracy of the top-N training runs.
    Aatn {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        input: TableInput,
        #[arg(long, default_value_t = 5)]
        n: usize,
    },
    /// Ranking stability under Gaussian accuracy noise.
    Noise {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        input: TableInput,
        /// Noise standard deviations in accuracy percentage points.
        #[arg(long, value_delimiter = ',', default_value = "0,1,2,5,10")]
        sigmas: Vec<f64>,
        #[arg(long, default_value_t = 20)]
        seeds: usize,
        #[arg(long, default_value_t = 5)]
        n: usize,
    },
    /// Markdown summary of the rank, AATN and noise outputs.
    Report {
        #[command(flatten)]
        common: Common,
    },
}

fn setup_pool(jobs: usize) {
    // A second initialization only fails if a pool already exists.
    let _ = rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global();
}

fn scores_path(common: &Common, input: &TableInput) -> PathBuf {
    input.scores.clone().unwrap_or_else(|| common.out.join(report::SCORES_CSV))
}

fn load(common: &Common, input: &TableInput) -> Result<valbench::metrics::ScoreTable, ReportError> {
    report::load_table(&scores_path(common, input), input.accuracy_csv.as_deref())
}

fn path_str(p: &Path) -> String {
    p.display().to_string()
}

fn run(cli: Cli) -> Result<(), ReportError> {
    match cli.command {
        Command::Synth {
            common,
            tasks,
            runs,
            checkpoints,
            classes,
            dim,
            samples,
            algorithms,
            domain_shift,
            confident_wrong,
            collapse,
        } => {
            setup_pool(common.jobs);
            let config = SynthConfig {
                num_tasks: tasks as usize,
                runs_per_task: runs as usize,
                checkpoints_per_run: checkpoints as usize,
                num_classes: classes,
                feature_dim: dim,
                samples_per_split: samples as usize,
                algorithms,
                domain_shift,
                confident_wrong_fraction: confident_wrong,
                collapse_fraction: collapse,
                seed: common.seed,
                ..SynthConfig::default()
            };
            let summary = generate_benchmark(&config, &common.out)?;
            report::update_run_manifest(
                &common.out,
                "synth",
                json!({"seed": common.seed, "config": format!("{config:?}")}),
            )?;
            println!(
                "wrote {} checkpoints across {} tasks to {}",
                summary.checkpoints,
                summary.tasks.len(),
                summary.root.display()
            );
        }
        Command::Score { common, root, variants } => {
            setup_pool(common.jobs);
            let variants = report::parse_variants(&variants)?;
            let rows = report::score_benchmark(&root, &variants, common.seed)?;
            let path = common.out.join(report::SCORES_CSV);
            report::write_scores_csv(&path, &rows)?;
            let failed = rows.iter().filter(|r| !r.error.is_empty()).count();
            report::update_run_manifest(
                &common.out,
                "score",
                json!({"seed": common.seed, "root": path_str(&root),
                       "variants": variants.iter().map(|v| v.name()).collect::<Vec<_>>()}),
            )?;
            println!("wrote {} rows ({failed} failed scores) to {}", rows.len(), path.display());
        }
        Command::Rank { common, input } => {
            let table = load(&common, &input)?;
            let ranking = report::rank(&table);
            report::write_ranking(&common.out, &ranking)?;
            report::update_run_manifest(
                &common.out,
                "rank",
                json!({"scores": path_str(&scores_path(&common, &input)),
                       "accuracy_csv": input.accuracy_csv.as_deref().map(path_str)}),
            )?;
            println!("ranked {} variants over {} tasks", table.variants.len(), table.tasks.len());
        }
        Command::Aatn { common, input, n } => {
            let table = load(&common, &input)?;
            let rows = report::aatn_table(&table, n)?;
            report::write_aatn(&common.out, &rows)?;
            report::update_run_manifest(
                &common.out,
                "aatn",
                json!({"n": n, "scores": path_str(&scores_path(&common, &input))}),
            )?;
            println!("wrote {} AATN rows", rows.len());
        }
        Command::Noise {
            common,
            input,
            sigmas,
            seeds,
            n,
        } => {
            setup_pool(common.jobs);
            let table = load(&common, &input)?;
            let config = NoiseConfig {
                sigmas: sigmas.clone(),
                seeds,
                master_seed: common.seed,
                aatn_n: n,
            };
            let curve = report::noise_table(&table, &config)?;
            report::write_noise(&common.out, &curve)?;
            report::update_run_manifest(
                &common.out,
                "noise",
                json!({"seed": common.seed, "sigmas": sigmas, "seeds": seeds, "n": n,
                       "excluded": curve.excluded}),
            )?;
            println!(
                "noise curve over {} variants ({} excluded)",
                curve.variants.len(),
                curve.excluded.len()
            );
        }
        Command::Report { common } => {
            let path = report::write_report(&common.out)?;
            println!("wrote {}", path.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
