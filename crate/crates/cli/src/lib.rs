//! `hts-lab`: run hitting-time experiments from a TOML configuration.
//!
//! Every output file carries the configuration hash and the master seed.
//! `manifest.json` is the only file with wall-clock information, so all other
//! outputs are byte-identical across reruns and worker counts.

pub mod config;
pub mod run;

use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{Context, Result};
use clap::{Parser, ValueEnum};
use serde_json::json;
use sha2::{Digest, Sha256};

pub use config::{parse_config, ConfigError, ExperimentConfig};
pub use run::{run, Check, RunOutput, Subcommand};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Command {
    /// Quenched (and optionally annealed) survival curves.
    Simulate,
    /// Periodic / non-periodic verdicts over a depth schedule.
    Dichotomy,
    /// Proof-term diagnostics and cylinder bound fits.
    Diagnostics,
    /// Transfer-operator checks for a Gibbs model.
    GibbsAudit,
}

impl From<Command> for Subcommand {
    fn from(c: Command) -> Self {
        match c {
            Command::Simulate => Subcommand::Simulate,
            Command::Dichotomy => Subcommand::Dichotomy,
            Command::Diagnostics => Subcommand::Diagnostics,
            Command::GibbsAudit => Subcommand::GibbsAudit,
        }
    }
}

#[derive(Debug, Clone, Parser)]
#[command(name = "hts-lab", version, about = "Hitting-time statistics experiments")]
pub struct Args {
    #[arg(value_enum)]
    pub command: Command,
    /// Experiment configuration (TOML).
    #[arg(long)]
    pub config: PathBuf,
    /// Master seed; overrides the configuration's `seed`.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads; defaults to the available parallelism.
    #[arg(long)]
    pub workers: Option<usize>,
    /// Output directory; overrides `output.dir`.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Exit codes: 0 all invariants held, 1 an invariant failed, 2 an error.
pub const EXIT_OK: i32 = 0;
pub const EXIT_INVARIANT: i32 = 1;
pub const EXIT_ERROR: i32 = 2;

fn error_kind(e: &anyhow::Error) -> &'static str {
    if e.downcast_ref::<ConfigError>().is_some() {
        "config"
    } else if e.downcast_ref::<hts_core::Error>().is_some() {
        "model"
    } else if e.downcast_ref::<std::io::Error>().is_some() {
        "io"
    } else {
        "runtime"
    }
}

fn write_error(dir: &Path, command: Subcommand, hash: Option<&str>, seed: Option<u64>, e: &anyhow::Error) {
    let record = json!({
        "subcommand": command.name(),
        "config_hash": hash,
        "seed": seed,
        "error": error_kind(e),
        "message": format!("{e:#}"),
    });
    if std::fs::create_dir_all(dir).is_ok() {
        let _ = std::fs::write(dir.join("error.json"), serde_json::to_vec_pretty(&record).unwrap_or_default());
    }
}

/// Runs one subcommand end to end and returns the process exit code.
pub fn execute(args: &Args) -> i32 {
    let command: Subcommand = args.command.into();
    let fallback = args.out.clone().unwrap_or_else(|| PathBuf::from("hts-out"));
    let cfg = match load(&args.config) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e:#}");
            write_error(&fallback, command, None, args.seed, &e);
            return EXIT_ERROR;
        }
    };
    let seed = args.seed.unwrap_or(cfg.seed);
    let dir = args.out.clone().or_else(|| cfg.output_dir.as_ref().map(PathBuf::from)).unwrap_or(fallback);
    match execute_with(&cfg, command, seed, args.workers, &dir) {
        Ok(out) => {
            for c in out.checks.iter().filter(|c| !c.ok) {
                eprintln!("invariant failed: {}: {}", c.name, c.detail);
            }
            if out.passed() {
                EXIT_OK
            } else {
                EXIT_INVARIANT
            }
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            write_error(&dir, command, Some(&cfg.hash), Some(seed), &e);
            EXIT_ERROR
        }
    }
}

pub fn load(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(parse_config(&text)?)
}

/// Runs on a pool of `workers` threads and writes the outputs and manifest
/// into `dir`.
pub fn execute_with(
    cfg: &ExperimentConfig,
    command: Subcommand,
    seed: u64,
    workers: Option<usize>,
    dir: &Path,
) -> Result<RunOutput> {
    let started = Instant::now();
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(w) = workers {
        pool = pool.num_threads(w.max(1));
    }
    let pool = pool.build()?;
    let out = pool.install(|| run(command, cfg, seed))?;
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut files = Vec::new();
    for (name, bytes) in &out.files {
        std::fs::write(dir.join(name), bytes).with_context(|| format!("writing {name}"))?;
        files.push(json!({ "name": name, "sha256": hex::encode(Sha256::digest(bytes)) }));
    }
    let manifest = json!({
        "tool": "hts-lab",
        "version": env!("CARGO_PKG_VERSION"),
        "subcommand": command.name(),
        "config_name": cfg.name,
        "config_hash": cfg.hash,
        "seed": seed,
        "workers": pool.current_num_threads(),
        "wall_clock_seconds": started.elapsed().as_secs_f64(),
        "parsed_numbers": cfg.parsed,
        "files": files,
        "invariants_passed": out.passed(),
    });
    std::fs::write(dir.join("manifest.json"), serde_json::to_vec_pretty(&manifest)?)?;
    Ok(out)
}
