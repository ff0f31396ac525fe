//! Batch front-end for the regime-switching lab: loads a model file, runs the
//! selected checks or simulations on a rayon pool of `--threads` workers and
//! writes reports plus a checksum manifest.

pub mod config;
pub mod error;
pub mod suite;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use regime_lab::markov::MatrixVariant;
use serde::Serialize;
use sha2::{Digest, Sha256};

pub use config::{parse_model, ModelConfig, DEFAULT_FIXTURE};
pub use error::CliError;
pub use suite::{CheckOutcome, Outputs, RunOptions};

pub const DEFAULT_SEED: u64 = 20_240_601;
pub const DEFAULT_TRIALS: u64 = 100_000;
pub const DEFAULT_PATHS: u64 = 100;
const DEFAULT_OUT: &str = "regime-lab-out";

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Variant {
    Paper,
    Stochastic,
}

impl From<Variant> for MatrixVariant {
    fn from(v: Variant) -> Self {
        match v {
            Variant::Paper => MatrixVariant::PaperDiagonal,
            Variant::Stochastic => MatrixVariant::RowStochastic,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Export the generator, the one-step matrix and sample paths.
    Simulate,
    /// Run every convergence check.
    Converge,
    /// Discrete-market call prices against the limit price.
    Price,
    /// Simulate, converge and price in one run.
    ReportAll,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::Converge => "converge",
            Command::Price => "price",
            Command::ReportAll => "report-all",
        }
    }
}

#[derive(Debug, Clone, Parser)]
#[command(name = "regime-lab", version, about = "Regime-switching market simulator and convergence checker")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Option<Command>,

    /// Model file (TOML). Defaults to the shipped two-state fixture.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    #[arg(long, global = true, default_value_t = DEFAULT_SEED)]
    pub seed: u64,

    /// Monte Carlo trials per check, or paths for `simulate`.
    #[arg(long, global = true)]
    pub trials: Option<u64>,

    #[arg(long = "n-grid", global = true, value_delimiter = ',', default_values_t = [64u64, 256, 1024])]
    pub n_grid: Vec<u64>,

    /// Worker threads; 0 lets rayon decide.
    #[arg(long, global = true, default_value_t = 0)]
    pub threads: usize,

    /// Output directory. Falls back to $OUTPUT_DIR, then ./regime-lab-out.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,

    #[arg(long, global = true, value_enum, default_value_t = Variant::Stochastic)]
    pub variant: Variant,
}

impl Cli {
    pub fn command(&self) -> Command {
        self.command.unwrap_or(Command::ReportAll)
    }

    pub fn out_dir(&self) -> PathBuf {
        self.out.clone().or_else(|| std::env::var_os("OUTPUT_DIR").map(PathBuf::from)).unwrap_or_else(|| PathBuf::from(DEFAULT_OUT))
    }
}

#[derive(Serialize)]
struct Manifest<'a> {
    command: &'a str,
    config_sha256: String,
    seed: u64,
    trials: u64,
    n_grid: &'a [u64],
    variant: &'a str,
    all_pass: bool,
    files: BTreeMap<&'a str, String>,
}

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::IoFailure { path: path.to_path_buf(), source }
}

/// Result of one invocation.
#[derive(Debug)]
pub struct RunSummary {
    pub out_dir: PathBuf,
    pub checks: Vec<CheckOutcome>,
    pub files: Vec<String>,
}

impl RunSummary {
    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }
}

/// Runs the command in `cli` and writes its outputs. Failed checks are
/// reported in the summary, not as errors.
pub fn run(cli: &Cli) -> Result<RunSummary, CliError> {
    let config_text = match &cli.config {
        Some(path) => fs::read_to_string(path).map_err(io_err(path))?,
        None => DEFAULT_FIXTURE.to_string(),
    };
    let model = parse_model(&config_text)?;
    let command = cli.command();
    let default_trials = if command == Command::Simulate { DEFAULT_PATHS } else { DEFAULT_TRIALS };
    let trials = cli.trials.unwrap_or(default_trials);
    if trials == 0 {
        return Err(CliError::Usage("--trials must be at least 1".into()));
    }
    let grid = &cli.n_grid;
    if grid.is_empty() || grid[0] == 0 || grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(CliError::Usage("--n-grid must be positive and strictly increasing".into()));
    }
    let opts = RunOptions { seed: cli.seed, trials, n_grid: cli.n_grid.clone(), variant: cli.variant.into() };

    let pool =
        rayon::ThreadPoolBuilder::new().num_threads(cli.threads).build().map_err(|e| CliError::Usage(format!("thread pool: {e}")))?;
    let mut outputs = pool.install(|| -> Result<Outputs, CliError> {
        let mut out = Outputs::default();
        match command {
            Command::Simulate => suite::simulate(&model, &opts, trials, &mut out)?,
            Command::Converge => suite::converge(&model, &opts, &mut out),
            Command::Price => suite::price(&model, &opts, &mut out),
            Command::ReportAll => {
                suite::simulate(&model, &opts, DEFAULT_PATHS, &mut out)?;
                suite::converge(&model, &opts, &mut out);
                suite::price(&model, &opts, &mut out);
            }
        }
        Ok(out)
    })?;
    outputs.finish();

    let dir = cli.out_dir();
    let mut files = BTreeMap::new();
    for (name, bytes) in &outputs.files {
        let path = dir.join(name);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(io_err(parent))?;
        }
        fs::write(&path, bytes).map_err(io_err(&path))?;
        files.insert(name.as_str(), sha256_hex(bytes));
    }
    let manifest = Manifest {
        command: command.name(),
        config_sha256: sha256_hex(config_text.as_bytes()),
        seed: cli.seed,
        trials,
        n_grid: &opts.n_grid,
        variant: suite::variant_name(opts.variant),
        all_pass: outputs.all_pass(),
        files,
    };
    let path = dir.join("manifest.json");
    let mut text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    text.push('\n');
    fs::write(&path, text).map_err(io_err(&path))?;

    let mut names: Vec<String> = outputs.files.iter().map(|(n, _)| n.clone()).collect();
    names.push("manifest.json".into());
    Ok(RunSummary { out_dir: dir, checks: outputs.checks, files: names })
}
