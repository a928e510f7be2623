use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use trapwalk_core::error::Error;
use trapwalk_core::harness::{run_experiment_with_workers, ExperimentConfig, ExperimentKind};

const EXIT_CONFIG: u8 = 2;
const EXIT_NUMERICAL: u8 = 3;

/// Random walk among mobile traps: experiment driver.
///
/// Potential tables are cached under $TRAPWALK_CACHE_DIR when it is set.
#[derive(Parser)]
#[command(name = "trapwalk", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Annealed survival -log Z_t on a time grid.
    Survival(RunArgs),
    /// Metropolis samples of the conditioned path measure.
    Gibbs(RunArgs),
    /// Leading eigentriple of the finite-memory transfer operator.
    Rpf(RunArgs),
    /// Diffusion coefficient against gamma.
    SigmaCurve(RunArgs),
    /// Decay of the potential's variation with the memory length.
    VarScan(RunArgs),
    /// Operator and Monte Carlo decay rates side by side.
    LyapunovCompare(RunArgs),
    /// Quick internal consistency checks.
    Selftest(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    /// TOML config; the built-in small instance when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    workers: Option<usize>,
    /// Output directory (default: out/<command>).
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            let config = e.downcast_ref::<Error>().is_some_and(Error::is_config);
            ExitCode::from(if config { EXIT_CONFIG } else { EXIT_NUMERICAL })
        }
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let (kind, args) = match cli.command {
        Command::Survival(a) => (ExperimentKind::Survival, a),
        Command::Gibbs(a) => (ExperimentKind::Gibbs, a),
        Command::Rpf(a) => (ExperimentKind::Rpf, a),
        Command::SigmaCurve(a) => (ExperimentKind::SigmaCurve, a),
        Command::VarScan(a) => (ExperimentKind::VarScan, a),
        Command::LyapunovCompare(a) => (ExperimentKind::LyapunovCompare, a),
        Command::Selftest(a) => (ExperimentKind::Selftest, a),
    };
    let mut cfg = match &args.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::preset(kind),
    };
    if cfg.experiment != kind {
        return Err(Error::Config(format!(
            "config is for '{}', not '{}'",
            cfg.experiment.command(),
            kind.command()
        ))
        .into());
    }
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    let out = args.out.unwrap_or_else(|| PathBuf::from("out").join(kind.command()));
    let res = run_experiment_with_workers(&cfg, &out, args.workers)
        .with_context(|| format!("{} failed", kind.command()))?;
    let rec = &res.record;
    println!("{} seed={} config_hash={}", kind.command(), rec.seed, rec.metadata.config_hash);
    for s in &rec.scalars {
        match s.stderr {
            Some(se) => println!("  {} = {:.6e} +- {:.2e}", s.name, s.value, se),
            None => println!("  {} = {:.6e}", s.name, s.value),
        }
    }
    for c in &rec.checks {
        println!("  [{}] {}: {}", if c.passed { "pass" } else { "FAIL" }, c.name, c.detail);
    }
    println!("wrote {} files to {} in {:.1} s", res.files.len(), out.display(), res.wall_time);
    Ok(())
}
