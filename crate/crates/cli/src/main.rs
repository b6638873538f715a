//! `lpc`: runs experiments described by TOML config files.

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use log::info;
use lpc_core::experiments::{emit_report, run, theory_report, ExperimentConfig, ExperimentKind};
use lpc_core::Error;

#[derive(Parser)]
#[command(name = "lpc", version, about = "Label-noise-aware ridge classification experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Class-conditional histograms of the decision function against theory.
    Histogram(Args),
    /// Accuracy and risk over an eps_plus, rho_plus or gamma grid.
    Sweep(Args),
    /// Flip-rate estimation from leave-one-out moments.
    EstimateNoise(Args),
    /// (alpha, beta) search and interpolation path for k classes.
    Multiclass(Args),
    /// Variant comparison on a CSV dataset or a Gaussian stand-in.
    RealData(Args),
    /// Print the limiting statistics of each configured variant.
    Theory(Args),
}

#[derive(clap::Args)]
struct Args {
    /// Experiment config file (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; defaults to `out` from the config, then `out/<experiment>`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Comma-separated seeds overriding the config.
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    /// Worker threads.
    #[arg(long)]
    threads: Option<usize>,
}

/// Failures split by exit code: 1 for configuration, 2 for the run itself.
enum Failure {
    Config(String),
    Runtime(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Runtime(e)
    }
}

fn load(args: &Args) -> Result<ExperimentConfig, Failure> {
    let mut cfg = ExperimentConfig::load(&args.config).map_err(|e| Failure::Config(e.to_string()))?;
    if let Some(seeds) = &args.seeds {
        cfg.seeds = seeds.clone();
    }
    if args.out.is_some() {
        cfg.out = args.out.clone();
    }
    if args.threads.is_some() {
        cfg.threads = args.threads;
    }
    cfg.validate().map_err(|e| Failure::Config(e.to_string()))?;
    Ok(cfg)
}

fn check_kind(cfg: &ExperimentConfig, allowed: &[ExperimentKind], command: &str) -> Result<(), Failure> {
    if allowed.contains(&cfg.experiment) {
        Ok(())
    } else {
        Err(Failure::Config(format!(
            "config describes a '{}' experiment, which `lpc {command}` does not run",
            cfg.experiment.as_str()
        )))
    }
}

fn execute(cli: Cli) -> Result<(), Failure> {
    let (args, allowed, name): (&Args, &[ExperimentKind], &str) = match &cli.command {
        Command::Histogram(a) => (a, &[ExperimentKind::Histogram], "histogram"),
        Command::Sweep(a) => (
            a,
            &[
                ExperimentKind::SweepEps,
                ExperimentKind::SweepRho,
                ExperimentKind::SweepGamma,
            ],
            "sweep",
        ),
        Command::EstimateNoise(a) => (a, &[ExperimentKind::EstimateNoise], "estimate-noise"),
        Command::Multiclass(a) => (a, &[ExperimentKind::Multiclass], "multiclass"),
        Command::RealData(a) => (a, &[ExperimentKind::RealData], "real-data"),
        Command::Theory(a) => (a, &[], "theory"),
    };
    let cfg = load(args)?;
    if let Some(threads) = cfg.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| Failure::Config(format!("cannot start {threads} threads: {e}")))?;
    }
    // a closed stdout (e.g. piped into `head`) is not an error
    let mut stdout = std::io::stdout().lock();
    if matches!(cli.command, Command::Theory(_)) {
        let _ = write!(stdout, "{}", theory_report(&cfg)?);
        return Ok(());
    }
    check_kind(&cfg, allowed, name)?;

    info!("running {} with seeds {:?}", cfg.experiment.as_str(), cfg.seeds);
    let report = run(&cfg)?;
    let dir = cfg
        .out
        .clone()
        .unwrap_or_else(|| PathBuf::from("out").join(cfg.experiment.as_str()));
    emit_report(&report, &cfg, &dir)?;
    for line in &report.summary {
        let _ = writeln!(stdout, "{line}");
    }
    for note in &report.notes {
        let _ = writeln!(stdout, "note: {note}");
    }
    let _ = writeln!(stdout, "config hash {}", report.provenance.config_hash);
    let _ = writeln!(
        stdout,
        "wrote {} rows to {}",
        report.rows.len(),
        dir.join("report.csv").display()
    );
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(msg)) => {
            eprintln!("config error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
