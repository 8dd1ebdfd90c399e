//! Command-line driver: config → simulation → CF → bounds → inversion →
//! reports. Every command writes the resolved `config.json`, its CSV
//! artifacts and `<command>_summary.json` into the output directory.

pub mod commands;
pub mod config;
pub mod presets;

use std::fs;
use std::path::PathBuf;

use clap::{Parser, Subcommand};

pub use commands::{Check, Checks, RunSummary};
pub use config::{RunConfig, Validated};
pub use presets::{preset, PRESETS};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Parser)]
#[command(name = "localdens", version, about = "Local densities of scalar SDEs via Monte-Carlo characteristic functions")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// JSON run configuration.
    #[arg(long, global = true, conflicts_with = "preset")]
    pub config: Option<PathBuf>,
    /// Shipped configuration: gaussian, ou, gbm or sign_drift.
    #[arg(long, global = true)]
    pub preset: Option<String>,
    /// Output directory (overrides the config's `output`).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Worker threads; results do not depend on it.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Replaces `simulation.seed`.
    #[arg(long = "seed-override", global = true)]
    pub seed_override: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Simulate and dump the ensemble at the configured times.
    Simulate,
    /// Lamperti-coordinate CF estimates.
    Cf,
    /// Refined bound report and fitted decay constants.
    Bound,
    /// Local densities in the state coordinate.
    Density,
    /// Hölder-norm table over t_list and the γ list.
    Hoelder,
    /// All checks in one report.
    Certify,
    /// Print the resolved configuration as JSON.
    Config,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::Cf => "cf",
            Command::Bound => "bound",
            Command::Density => "density",
            Command::Hoelder => "hoelder",
            Command::Certify => "certify",
            Command::Config => "config",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Outcome {
    Summary(RunSummary),
    ConfigJson(String),
}

/// The configuration named by the flags, with overrides applied.
pub fn resolve_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match (&cli.config, &cli.preset) {
        (Some(path), None) => RunConfig::load(path)?,
        (None, Some(name)) => preset(name)?,
        (Some(_), Some(_)) => return Err(Error::config("--config", "conflicts with --preset")),
        (None, None) => return Err(Error::config("--config", "either --config or --preset is required")),
    };
    if let Some(seed) = cli.seed_override {
        cfg.simulation.seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.output = out.clone();
    }
    Ok(cfg)
}

fn execute(cmd: Command, v: &Validated) -> Result<Checks> {
    let out = &v.config.output;
    match cmd {
        Command::Simulate => commands::cmd_simulate(v, out),
        Command::Cf => commands::cmd_cf(&commands::compute_cfs(v)?, out),
        Command::Bound => commands::cmd_bound(v, out),
        Command::Density => commands::cmd_density(v, &commands::compute_cfs(v)?, out),
        Command::Hoelder => commands::cmd_hoelder(v, &commands::compute_cfs(v)?, out),
        Command::Certify => commands::cmd_certify(v, out),
        Command::Config => unreachable!("handled before validation"),
    }
}

/// Runs one command. The summary is also written to
/// `<out>/<command>_summary.json`.
pub fn run(cli: &Cli) -> Result<Outcome> {
    let cfg = resolve_config(cli)?;
    if cli.command == Command::Config {
        return Ok(Outcome::ConfigJson(cfg.to_json()?));
    }
    let v = cfg.validate()?;
    fs::create_dir_all(&cfg.output)?;
    fs::write(cfg.output.join("config.json"), cfg.to_json()?)?;
    let checks = match cli.threads {
        Some(0) => return Err(Error::config("--threads", "must be at least 1")),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::config("--threads", e.to_string()))?
            .install(|| execute(cli.command, &v))?,
        None => execute(cli.command, &v)?,
    };
    let summary = RunSummary::new(cli.command.name(), &v, checks);
    let path = cfg.output.join(format!("{}_summary.json", cli.command.name()));
    fs::write(path, serde_json::to_string_pretty(&summary)?)?;
    Ok(Outcome::Summary(summary))
}
