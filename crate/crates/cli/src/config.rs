//! Command-line flags and the optional JSON config file.
//!
//! Every flag may also be given in the file under its long name
//! (`"master-seed"`, `"eps-grid"`, ...). Flags on the command line win.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

#[derive(Debug, Parser)]
#[command(
    name = "expbound",
    version,
    about = "Checks on the expected total experimentation of optimal rules"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Revelation family: exact value, exact total and Monte Carlo.
    Prop1(Prop1Args),
    /// Gaussian precision construction: recursion, conditions, deviations, curves.
    Prop2(Prop2Args),
    /// One-arm bandit: cut-off, bound, visits, path identity, consistency.
    Bandit(BanditArgs),
    /// Monte Carlo of a rule on a problem read from JSON.
    Simulate(SimulateArgs),
    /// Re-evaluates the bound check on a saved report.
    Verify(VerifyArgs),
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// JSON file supplying any flag (kebab-case keys).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Directory receiving the output files.
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    /// Output file stem; defaults to the subcommand name.
    #[arg(long)]
    pub name: Option<String>,
    #[arg(long, alias = "master-seed")]
    pub seed: Option<u64>,
    #[arg(long)]
    pub runs: Option<usize>,
    /// Hard cap on stages per trajectory.
    #[arg(long)]
    pub cap: Option<usize>,
    /// Worker threads (results do not depend on it).
    #[arg(long)]
    pub workers: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct Prop1Args {
    #[arg(long)]
    pub m: Option<usize>,
    #[arg(long)]
    pub delta: Option<f64>,
    /// Thresholds for the N(eps) curve.
    #[arg(long, value_delimiter = ',')]
    pub eps_grid: Option<Vec<f64>>,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Clone, Args)]
pub struct Prop2Args {
    #[arg(long)]
    pub delta: Option<f64>,
    #[arg(long)]
    pub n_max: Option<usize>,
    #[arg(long)]
    pub target_sum: Option<f64>,
    /// First index following the `1/(n ln^2 n)` profile.
    #[arg(long)]
    pub onset: Option<usize>,
    /// Exponents for the `n eps_n^alpha` curves.
    #[arg(long, value_delimiter = ',')]
    pub alphas: Option<Vec<f64>>,
    /// Deviation checks run for `k = 1 ..= k-dev`.
    #[arg(long)]
    pub k_dev: Option<usize>,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Clone, Args)]
pub struct BanditArgs {
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub p0a: Option<f64>,
    #[arg(long)]
    pub rb: Option<f64>,
    #[arg(long)]
    pub delta: Option<f64>,
    /// Run every cell of alpha-grid x delta-grid x p0a-grid.
    #[arg(long)]
    pub grid: bool,
    #[arg(long, value_delimiter = ',')]
    pub alpha_grid: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    pub delta_grid: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    pub p0a_grid: Option<Vec<f64>>,
    /// Trajectories for the path identity.
    #[arg(long)]
    pub paths: Option<usize>,
    /// Walks for the Monte Carlo visit estimate.
    #[arg(long)]
    pub visit_runs: Option<usize>,
    #[arg(long)]
    pub visit_cap: Option<usize>,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RuleKind {
    Myopic,
    Prop1,
    Cutoff,
}

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    /// Problem in the `expbound.problem.v1` JSON schema.
    #[arg(long)]
    pub problem: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub rule: Option<RuleKind>,
    /// Cut-off level for `--rule cutoff`.
    #[arg(long)]
    pub kstar: Option<i64>,
    /// Lattice step for `--rule cutoff`.
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long, value_delimiter = ',')]
    pub eps_grid: Option<Vec<f64>>,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Clone, Args)]
pub struct VerifyArgs {
    /// Report written by `simulate` or `prop1`.
    #[arg(long)]
    pub report: Option<PathBuf>,
    #[command(flatten)]
    pub common: Common,
}

/// Contents of `--config`.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct FileConfig {
    pub out_dir: Option<PathBuf>,
    pub name: Option<String>,
    #[serde(alias = "master-seed")]
    pub seed: Option<u64>,
    pub runs: Option<usize>,
    pub cap: Option<usize>,
    pub workers: Option<usize>,
    pub m: Option<usize>,
    pub delta: Option<f64>,
    pub eps_grid: Option<Vec<f64>>,
    pub n_max: Option<usize>,
    pub target_sum: Option<f64>,
    pub onset: Option<usize>,
    pub alphas: Option<Vec<f64>>,
    pub k_dev: Option<usize>,
    pub alpha: Option<f64>,
    pub p0a: Option<f64>,
    pub rb: Option<f64>,
    pub grid: Option<bool>,
    pub alpha_grid: Option<Vec<f64>>,
    pub delta_grid: Option<Vec<f64>>,
    pub p0a_grid: Option<Vec<f64>>,
    pub paths: Option<usize>,
    pub visit_runs: Option<usize>,
    pub visit_cap: Option<usize>,
    pub problem: Option<PathBuf>,
    pub rule: Option<RuleKind>,
    pub kstar: Option<i64>,
    pub report: Option<PathBuf>,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }
}

/// Command line, then file, then default.
pub fn pick<T: Clone>(cli: &Option<T>, file: &Option<T>, default: T) -> T {
    cli.clone().or_else(|| file.clone()).unwrap_or(default)
}

/// Output location and Monte Carlo settings shared by the subcommands.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub out_dir: PathBuf,
    pub name: String,
    pub seed: u64,
    pub runs: usize,
    pub cap: usize,
    pub workers: usize,
}

pub struct Defaults {
    pub name: &'static str,
    pub runs: usize,
    pub cap: usize,
}

impl Common {
    pub fn resolve(&self, file: &FileConfig, d: Defaults) -> Resolved {
        Resolved {
            out_dir: pick(&self.out_dir, &file.out_dir, PathBuf::from(".")),
            name: pick(&self.name, &file.name, d.name.to_string()),
            seed: pick(&self.seed, &file.seed, 0),
            runs: pick(&self.runs, &file.runs, d.runs),
            cap: pick(&self.cap, &file.cap, d.cap),
            workers: pick(&self.workers, &file.workers, 1),
        }
    }
}

impl Resolved {
    pub fn path(&self, suffix: &str) -> PathBuf {
        self.out_dir.join(format!("{}.{suffix}", self.name))
    }
}
