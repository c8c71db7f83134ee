//! Command-line front end.
//!
//! Exit codes: 0 on success, 2 for configuration, argument or I/O errors,
//! 3 when a numeric failure occurred (including any failed trial).

mod commands;
mod output;

pub use commands::{
    cmd_accuracy_curve, cmd_optimize_delta, cmd_place_uav, cmd_run, cmd_select_rounds, cmd_sweep,
};
pub use output::{write_atomic, write_csv, write_json, RunManifest};

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::error::{Error, Result};
use crate::scenario::ScenarioConfig;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;

/// Output directory used when `--out` is not given.
pub const OUT_DIR_ENV: &str = "FEDSWIPT_OUT_DIR";

#[derive(Debug, Parser)]
#[command(name = "fedswipt", version, about = "Federated learning over a UAV-served SWIPT network")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Monte Carlo trials; writes rounds.csv and summary.json.
    Run(CommonArgs),
    /// Repeats the Monte Carlo run for each value of one parameter; writes sweep.csv.
    Sweep {
        #[command(flatten)]
        common: CommonArgs,
        /// Dotted config path to vary, e.g. link.ptx_dl_w.
        #[arg(long)]
        param: String,
        /// Comma-separated values.
        #[arg(long, value_delimiter = ',', required = true, num_args = 1..)]
        values: Vec<String>,
    },
    /// Mean test metric per round over trials; writes accuracy.csv.
    AccuracyCurve(CommonArgs),
    /// Chooses the number of rounds on the validation set.
    SelectRounds {
        #[command(flatten)]
        common: CommonArgs,
        /// Comma-separated candidate round counts; defaults to round_candidates.
        #[arg(long, value_delimiter = ',', num_args = 1..)]
        candidates: Option<Vec<usize>>,
    },
    /// Per-device power-splitting ratios over fading draws; writes deltas.csv.
    OptimizeDelta {
        #[command(flatten)]
        common: CommonArgs,
        /// Number of fading draws; defaults to monte_carlo_trials.
        #[arg(long)]
        realizations: Option<usize>,
    },
    /// UAV placement; writes placement.json.
    PlaceUav(CommonArgs),
}

#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    /// TOML scenario file, or a manifest.json from an earlier run.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Set a config field, e.g. --override link.ptx_dl_w=5.0 (repeatable).
    #[arg(long = "override", value_name = "PATH=VALUE")]
    pub overrides: Vec<String>,
    /// Replaces master_seed.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, env = OUT_DIR_ENV, default_value = "out")]
    pub out: PathBuf,
    /// Trial worker threads (default: all cores).
    #[arg(long)]
    pub workers: Option<usize>,
}

impl CommonArgs {
    pub fn new(out: impl Into<PathBuf>) -> Self {
        Self {
            config: None,
            overrides: Vec::new(),
            seed: None,
            out: out.into(),
            workers: None,
        }
    }

    /// Loads the base config (TOML file, manifest snapshot or defaults), then
    /// applies overrides and the seed.
    pub fn resolve_config(&self) -> Result<ScenarioConfig> {
        let base = match &self.config {
            None => ScenarioConfig::default(),
            Some(p) if p.extension().is_some_and(|e| e == "json") => RunManifest::load(p)?.config,
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| Error::Io(format!("{}: {e}", p.display())))?;
                ScenarioConfig::from_toml_str(&text)
                    .map_err(|e| Error::Config(format!("{}: {e}", p.display())))?
            }
        };
        let mut cfg = base.with_overrides(&self.overrides)?;
        if let Some(seed) = self.seed {
            cfg.master_seed = seed;
            cfg.validate()?;
        }
        Ok(cfg)
    }
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Numeric(_) => EXIT_NUMERIC,
        Error::Domain(_) | Error::Argument(_) | Error::Config(_) | Error::Io(_) => EXIT_CONFIG,
    }
}

/// Parses `args` (program name first), runs the subcommand and returns the
/// process exit code. Diagnostics go to stderr.
pub fn run_cli<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let result = match &cli.command {
        Command::Run(c) => cmd_run(c),
        Command::Sweep { common, param, values } => cmd_sweep(common, param, values),
        Command::AccuracyCurve(c) => cmd_accuracy_curve(c),
        Command::SelectRounds { common, candidates } => {
            cmd_select_rounds(common, candidates.as_deref())
        }
        Command::OptimizeDelta { common, realizations } => cmd_optimize_delta(common, *realizations),
        Command::PlaceUav(c) => cmd_place_uav(c),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
