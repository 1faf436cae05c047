//! Command-line driver for the `dicke_lmg` engine.

pub mod commands;
pub mod config;
pub mod output;
pub mod selftest;

use std::path::PathBuf;

use clap::{Parser, Subcommand};

use config::RunConfig;
use output::Artifacts;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] dicke_lmg::Error),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("selftest failed: {0} check(s)")]
    Selftest(usize),
}

impl CliError {
    /// 2 for configuration problems, 3 for numerical failures, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        use dicke_lmg::Error as E;
        match self {
            CliError::Config(_) => 2,
            CliError::Core(e) if e.is_convergence_failure() => 3,
            CliError::Core(E::InvalidParams(_) | E::DimensionMismatch { .. } | E::Underdetermined { .. } | E::Unsupported(_)) => 2,
            CliError::Core(_) | CliError::Selftest(_) => 3,
            CliError::Io(_) | CliError::Json(_) => 1,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "dlmg", version, about = "Dicke-LMG critical detector simulations")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// TOML run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = ".")]
    pub out: PathBuf,
    /// Worker threads (overrides the config's `workers`).
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    /// Seed recorded in metadata; only the selftest draws random numbers.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Subcommand)]
pub enum Command {
    PhaseDiagram,
    OpScan,
    ChiScan,
    Dynamics,
    BiasScan,
    Qfunc,
    Thermal,
    LiouvilleEvolve,
    Selftest,
}

fn init_pool(workers: Option<usize>) -> Result<(), CliError> {
    if let Some(n) = workers {
        if n == 0 {
            return Err(CliError::Config("workers must be at least 1".into()));
        }
        // a second initialisation in the same process keeps the first pool
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    Ok(())
}

pub fn run(cli: &Cli) -> Result<(), CliError> {
    if cli.command == Command::Selftest {
        init_pool(cli.workers)?;
        let checks = selftest::run(cli.seed)?;
        let mut failed = 0;
        for c in &checks {
            let verdict = if c.passed() { "PASS" } else { "FAIL" };
            println!("{verdict} {} (worst {:.3e}, tolerance {:.1e})", c.name, c.worst, c.tolerance);
            failed += usize::from(!c.passed());
        }
        return if failed == 0 { Ok(()) } else { Err(CliError::Selftest(failed)) };
    }
    let path = cli.config.as_ref().ok_or_else(|| CliError::Config("--config is required".into()))?;
    let config = RunConfig::load(path)?;
    init_pool(cli.workers.or(config.workers))?;
    let mut out = Artifacts::new(&cli.out)?;
    let mut ctx = commands::Context { config: &config, out: &mut out, seed: cli.seed };
    match cli.command {
        Command::PhaseDiagram => commands::phase_diagram(&mut ctx),
        Command::OpScan => commands::op_scan_cmd(&mut ctx),
        Command::ChiScan => commands::chi_scan(&mut ctx),
        Command::Dynamics => commands::dynamics(&mut ctx),
        Command::BiasScan => commands::bias_scan_cmd(&mut ctx),
        Command::Qfunc => commands::qfunc(&mut ctx),
        Command::Thermal => commands::thermal(&mut ctx),
        Command::LiouvilleEvolve => commands::liouville_evolve(&mut ctx),
        Command::Selftest => unreachable!("handled above"),
    }?;
    for p in &out.written {
        println!("wrote {}", p.display());
    }
    Ok(())
}
