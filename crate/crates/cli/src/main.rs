use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use slimnas_cli::commands::{parse_archs, report_trends_cmd, retrain_cmd, search_cmd, train_supernet_cmd};
use slimnas_cli::{CliError, RunConfig};

#[derive(Parser)]
#[command(name = "slimnas", version, about = "Width search over a weight-sharing supernet")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train the shared-weight supernet with the sandwich rule.
    TrainSupernet {
        #[arg(long)]
        config: PathBuf,
        /// Output directory (overrides `output_dir` in the config).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the constrained evolutionary search.
    Search {
        #[arg(long)]
        config: PathBuf,
        /// Supernet weights; not needed with the surrogate evaluator.
        #[arg(long)]
        weights: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train architectures from scratch as standalone networks and rank them.
    Retrain {
        #[arg(long)]
        config: PathBuf,
        /// Comma-separated architecture strings.
        #[arg(long)]
        archs: String,
        /// Supernet weights, to report inherited accuracy alongside.
        #[arg(long)]
        weights: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Per-layer width statistics of a run's top-n architectures.
    ReportTrends {
        /// Run log written by `search`.
        log: PathBuf,
        /// Also write trends.txt and trends.json here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn out_dir(cfg: &RunConfig, out: Option<PathBuf>) -> Result<PathBuf, CliError> {
    out.or_else(|| cfg.output_dir.clone())
        .ok_or_else(|| CliError::Usage("no output directory: pass --out or set output_dir in the config".into()))
}

fn load(path: &Path) -> Result<RunConfig, CliError> {
    RunConfig::load(path)
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::TrainSupernet { config, out } => {
            let cfg = load(&config)?;
            let report = train_supernet_cmd(&cfg, &out_dir(&cfg, out)?)?;
            print!("{}", report.to_text());
        }
        Command::Search { config, weights, out } => {
            let cfg = load(&config)?;
            let report = search_cmd(&cfg, weights.as_deref(), &out_dir(&cfg, out)?)?;
            print!("{}", report.summary.to_text());
            println!("run log: {}", report.log_path.display());
        }
        Command::Retrain {
            config,
            archs,
            weights,
            out,
        } => {
            let cfg = load(&config)?;
            let report = retrain_cmd(&cfg, &parse_archs(&archs), weights.as_deref(), &out_dir(&cfg, out)?)?;
            for w in &report.warnings {
                eprintln!("warning: {w}");
            }
            print!("{}", report.to_text());
        }
        Command::ReportTrends { log, out } => {
            print!("{}", report_trends_cmd(&log, out.as_deref())?.to_text());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
