//! Command-line runner for the ISAC experiment suite.
//!
//! Logs go to stderr, data files go to a fresh run directory, and stdout
//! carries a single JSON summary line.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use log::error;
use risac_core::experiment::{execute, Command, RunOptions};
use risac_core::oracles::OracleScale;
use risac_core::ExperimentConfig;

#[derive(Debug, Parser)]
#[command(
    name = "risac",
    version,
    about = "1-bit DAC ISAC transmitter with RIS symbol modulation"
)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,

    /// Flat `key = value` configuration file; missing keys take defaults.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Master seed, overriding the configuration file.
    #[arg(long, global = true, value_name = "U64")]
    seed: Option<u64>,

    /// 100 realizations of 50 symbols and reduced oracle sizes.
    #[arg(long, global = true)]
    quick: bool,

    /// Base directory for run directories.
    #[arg(long, global = true, value_name = "DIR", default_value = "runs")]
    out: PathBuf,

    /// Monte-Carlo worker threads; 0 uses every core.
    #[arg(long, global = true, value_name = "N", default_value_t = 0)]
    workers: usize,
}

#[derive(Debug, Clone, Copy, Subcommand)]
enum Cmd {
    /// Beampattern and target illumination tables.
    Beampattern,
    /// Symbol error probability sweeps.
    Sep,
    /// Independent validation oracles.
    Oracles,
    /// Every experiment above.
    All,
}

impl From<Cmd> for Command {
    fn from(c: Cmd) -> Self {
        match c {
            Cmd::Beampattern => Command::Beampattern,
            Cmd::Sep => Command::Sep,
            Cmd::Oracles => Command::Oracles,
            Cmd::All => Command::All,
        }
    }
}

fn load_config(cli: &Cli) -> risac_core::Result<ExperimentConfig> {
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.master_seed = seed;
    }
    if cli.quick {
        cfg = cfg.quick();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: &Cli) -> risac_core::Result<bool> {
    let cfg = load_config(cli)?;
    let opts = RunOptions {
        out_base: cli.out.clone(),
        workers: cli.workers,
        oracle_scale: if cli.quick {
            OracleScale::quick()
        } else {
            OracleScale::standard()
        },
    };
    let summary = execute(cli.command.into(), &cfg, &opts)?;
    println!("{}", summary.to_json()?);
    for reason in &summary.incomplete {
        error!("incomplete: {reason}");
    }
    if summary.oracle_status.as_deref() == Some("fail") {
        error!("one or more oracles failed");
    }
    Ok(summary.succeeded())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .target(env_logger::Target::Stderr)
        .init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            error!("{e}");
            ExitCode::FAILURE
        }
    }
}
