use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use mcad::experiment::runner::round_sig;
use mcad::experiment::{
    cmd_evaluate, cmd_fit, ingest, plan, run_experiment, write_tradeoff_csv, DatasetKind,
    EvalCell, ExperimentConfig, SolveKey, StrategyKind, TradeoffOptions,
};
use mcad::{Error, Result};

#[derive(Parser)]
#[command(
    name = "mcad",
    version,
    about = "Matrix completion with an accuracy-diversity balance: solvers, ranking strategies, and the evaluation pipeline for MovieLens experiments"
)]
struct Cli {
    /// Experiment config file (key = value lines); defaults apply when omitted
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Override a config key, e.g. --set lambda_n_grid=5,10 (repeatable)
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,

    /// Worker pool size for sweep cells (overrides the jobs key)
    #[arg(long, global = true)]
    jobs: Option<usize>,

    /// Permit the slow 1M-dataset sweep
    #[arg(long, global = true)]
    large: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse the raw dataset and cache the fold splits
    Ingest,
    /// Print a documented config template with every key at its default
    PrintConfig,
    /// Run one solve and print its objective trace
    Fit {
        #[arg(long)]
        fold: usize,
        #[arg(long)]
        lambda_n: f64,
        /// lambda_d / lambda_n; 0 runs the plain MC solve
        #[arg(long, default_value_t = 0.0)]
        ratio: f64,
        /// Replication index (varies the bias SGD seed)
        #[arg(long, default_value_t = 0)]
        rep: usize,
    },
    /// Rank and score one cell from its saved matrix
    Evaluate {
        #[arg(long)]
        fold: usize,
        #[arg(long)]
        strategy: String,
        #[arg(long)]
        lambda_n: f64,
        #[arg(long, default_value_t = 0.0)]
        ratio: f64,
        /// Re-ranking threshold (MC-IA / MC-RPRV only)
        #[arg(long)]
        t_r: Option<f64>,
        #[arg(long, default_value_t = 0)]
        rep: usize,
        /// Also export the per-user ranked lists as CSV
        #[arg(long)]
        lists: bool,
    },
    /// Run the full fold x strategy x grid sweep
    Sweep {
        /// Print the resolved grid and write nothing
        #[arg(long)]
        dry_run: bool,
    },
    /// Build the matched-loss tradeoff table from a reports CSV
    Report {
        /// Target precision-loss percentages
        #[arg(long, value_delimiter = ',', num_args = 1..)]
        targets: Option<Vec<f64>>,
        /// Acceptable distance from a target in percentage points
        #[arg(long, default_value_t = 1.0)]
        tolerance: f64,
        /// List length to report on
        #[arg(long, default_value_t = 5)]
        n: usize,
        /// Baseline strategy
        #[arg(long, default_value = "MC")]
        baseline: String,
        /// Reports CSV (defaults to <output_dir>/reports.csv)
        #[arg(long)]
        reports: Option<PathBuf>,
        /// Output CSV (defaults to <output_dir>/tradeoff.csv)
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig> {
    let mut config = match &cli.config {
        Some(path) => ExperimentConfig::from_file(path)?,
        None => ExperimentConfig::default(),
    };
    for assignment in &cli.set {
        let (key, value) = assignment.split_once('=').ok_or_else(|| {
            Error::Config(format!("--set expects KEY=VALUE, got {assignment:?}"))
        })?;
        config.set(key, value)?;
    }
    if let Some(jobs) = cli.jobs {
        config.jobs = jobs;
    }
    config.validate()?;
    Ok(config)
}

fn run(cli: Cli) -> Result<()> {
    match &cli.command {
        Command::PrintConfig => {
            print!("{}", ExperimentConfig::template());
            Ok(())
        }
        Command::Ingest => {
            let config = load_config(&cli)?;
            let ctx = ingest(&config)?;
            let total: usize = ctx.folds[0].train.len() + ctx.folds[0].test.len();
            println!(
                "dataset {}: {} ratings, {} users, {} items, {} genres, {} folds cached under {}",
                config.dataset.label(),
                total,
                ctx.folds[0].train.num_users,
                ctx.folds[0].train.num_items,
                ctx.genres.num_genres(),
                ctx.folds.len(),
                config.output_dir.join("folds").display()
            );
            Ok(())
        }
        Command::Fit {
            fold,
            lambda_n,
            ratio,
            rep,
        } => {
            let config = load_config(&cli)?;
            let ctx = ingest(&config)?;
            let key = SolveKey {
                fold: *fold,
                rep: *rep,
                lambda_n: *lambda_n,
                lambda_d: round_sig(ratio * lambda_n),
            };
            if key.fold >= ctx.folds.len() {
                return Err(Error::Config(format!("fold {} out of range", key.fold)));
            }
            let path = cmd_fit(&ctx, &key)?;
            eprintln!("completed matrix written to {}", path.display());
            Ok(())
        }
        Command::Evaluate {
            fold,
            strategy,
            lambda_n,
            ratio,
            t_r,
            rep,
            lists,
        } => {
            let config = load_config(&cli)?;
            let ctx = ingest(&config)?;
            let strategy: StrategyKind = strategy.parse()?;
            match strategy {
                StrategyKind::McIa | StrategyKind::McRprv if t_r.is_none() => {
                    return Err(Error::Config(format!(
                        "strategy {strategy} requires --t-r"
                    )));
                }
                _ => {}
            }
            let cell = EvalCell {
                fold: *fold,
                rep: *rep,
                strategy,
                lambda_n: *lambda_n,
                lambda_d: match strategy {
                    StrategyKind::Mcad => round_sig(ratio * lambda_n),
                    _ => 0.0,
                },
                t_r: match strategy {
                    StrategyKind::McIa | StrategyKind::McRprv => *t_r,
                    _ => None,
                },
            };
            cmd_evaluate(&ctx, &cell, *lists)?;
            Ok(())
        }
        Command::Sweep { dry_run } => {
            let config = load_config(&cli)?;
            if config.dataset == DatasetKind::Ml1m && !cli.large {
                return Err(Error::Config(
                    "the 1M sweep is slow; pass --large to confirm".into(),
                ));
            }
            if *dry_run {
                let plan = plan(&config);
                let rows =
                    plan.evals.len() * config.n_values.len() * config.candidate_policies.len();
                println!(
                    "dry run: {} solve cells, {} evaluation cells, {} report rows",
                    plan.solves.len(),
                    plan.evals.len(),
                    rows
                );
                for strategy in &config.strategies {
                    let count = plan.evals.iter().filter(|c| c.strategy == *strategy).count();
                    println!("  {strategy}: {count} cells");
                }
                return Ok(());
            }
            let ctx = ingest(&config)?;
            let summary = run_experiment(&ctx)?;
            println!(
                "{} / {} cells completed, {} report rows -> {}",
                summary.cells_total - summary.cells_failed,
                summary.cells_total,
                summary.rows_written,
                summary.reports_path.display()
            );
            Ok(())
        }
        Command::Report {
            targets,
            tolerance,
            n,
            baseline,
            reports,
            out,
        } => {
            let config = load_config(&cli)?;
            let mut options = TradeoffOptions {
                baseline_strategy: baseline.clone(),
                tolerance_pct: *tolerance,
                n: *n,
                ..Default::default()
            };
            if let Some(targets) = targets {
                options.targets = targets.clone();
            }
            let reports_path = reports
                .clone()
                .unwrap_or_else(|| config.output_dir.join("reports.csv"));
            let out_path = out
                .clone()
                .unwrap_or_else(|| config.output_dir.join("tradeoff.csv"));
            let rows = write_tradeoff_csv(&reports_path, &out_path, &options)?;
            let matched = rows.iter().filter(|r| r.point.is_some()).count();
            println!(
                "{} tradeoff rows ({} matched) -> {}",
                rows.len(),
                matched,
                out_path.display()
            );
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e @ Error::Config(_)) | Err(e @ Error::Parse { .. }) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
