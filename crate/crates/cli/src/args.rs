use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

/// FDP-controlling multiple testing: critical values, rejections and
/// Monte Carlo studies.
#[derive(Debug, Parser)]
#[command(name = "fdpctl", version)]
pub struct Cli {
    /// Worker threads for parallel work; results do not depend on it.
    #[arg(long, env = "FDPCTL_WORKERS", global = true)]
    pub workers: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Subcommand, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    /// Compute a table of critical values.
    Critvals(CritvalsArgs),
    /// Apply a procedure to a file of p-values.
    Apply(ApplyArgs),
    /// Run a Monte Carlo campaign of one procedure.
    Simulate(SimulateArgs),
    /// FNR of several procedures relative to [LR] over a parameter grid.
    Power(PowerArgs),
    /// Re-run a manifest and compare output checksums.
    Replay(ReplayArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Critvals(_) => "critvals",
            Command::Apply(_) => "apply",
            Command::Simulate(_) => "simulate",
            Command::Power(_) => "power",
            Command::Replay(_) => "replay",
        }
    }
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct ModelArgs {
    /// Noise model as JSON, inline or as a file path, e.g.
    /// '{"kind":"gauss_equi","rho":0.1}'.
    #[arg(long, conflicts_with = "rho")]
    pub model: Option<String>,
    /// Shorthand for a Gaussian equicorrelated model.
    #[arg(long)]
    pub rho: Option<f64>,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct ProcArgs {
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub zeta: Option<f64>,
    /// su or sd.
    #[arg(long, default_value = "su")]
    pub direction: String,
    /// Split or DKW weight.
    #[arg(long)]
    pub lambda: Option<f64>,
    /// K of the split and K-Markov constructions.
    #[arg(long = "K")]
    pub big_k: Option<usize>,
    /// Device of raw critical values: markov, kmarkov, exact or mc.
    #[arg(long, default_value = "exact")]
    pub device: String,
    /// nonadaptive, adaptive or oracle (needs --m0).
    #[arg(long, default_value = "adaptive")]
    pub mode: String,
    /// Draws of the Monte Carlo device.
    #[arg(long, default_value_t = 10_000)]
    pub mc_draws: usize,
    #[arg(long, default_value_t = 0)]
    pub mc_seed: u64,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct CritvalsArgs {
    #[arg(long)]
    pub m: usize,
    /// raw, split, rwasymp, dkw, lr, bh, or any procedure with critical values.
    #[arg(long = "proc", default_value = "raw")]
    pub procedure: String,
    /// True null count of the oracle mode.
    #[arg(long)]
    pub m0: Option<usize>,
    #[command(flatten)]
    pub proc_args: ProcArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    /// Output CSV (stdout if absent).
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct ApplyArgs {
    /// Single-column CSV of p-values.
    #[arg(long)]
    pub pvalues: PathBuf,
    /// Critical values CSV as written by critvals.
    #[arg(long, conflicts_with = "procedure")]
    pub critvals: Option<PathBuf>,
    /// Procedure computed on the fly instead of --critvals.
    #[arg(long = "proc")]
    pub procedure: Option<String>,
    #[arg(long)]
    pub m0: Option<usize>,
    #[command(flatten)]
    pub proc_args: ProcArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    /// Output JSON (stdout if absent).
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct SimulateArgs {
    #[arg(long = "proc")]
    pub procedure: String,
    #[arg(long)]
    pub m: usize,
    #[arg(long)]
    pub m0: usize,
    /// Common alternative mean.
    #[arg(long)]
    pub beta: f64,
    /// Redraw the true-null subset uniformly in every replicate.
    #[arg(long)]
    pub uniform_mixture: bool,
    #[arg(long)]
    pub reps: usize,
    #[arg(long)]
    pub seed: u64,
    /// Also estimate P(V >= k).
    #[arg(long)]
    pub kfwer_k: Option<usize>,
    #[command(flatten)]
    pub proc_args: ProcArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    /// Write the FDP samples as a single-column CSV.
    #[arg(long)]
    pub dump_fdp: Option<PathBuf>,
    /// Full JSON report (stdout if absent).
    #[arg(long)]
    pub out_json: Option<PathBuf>,
    /// One-row CSV summary.
    #[arg(long)]
    pub out_csv: Option<PathBuf>,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct PowerArgs {
    /// Comma-separated procedure names.
    #[arg(long, value_delimiter = ',', required = true)]
    pub procs: Vec<String>,
    #[arg(long, value_delimiter = ',', required = true)]
    pub beta_grid: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_value = "0")]
    pub rho: Vec<f64>,
    /// Proportion of true nulls.
    #[arg(long, value_delimiter = ',', required = true)]
    pub pi0: Vec<f64>,
    #[arg(long)]
    pub m: usize,
    #[arg(long)]
    pub alpha: f64,
    #[arg(long)]
    pub zeta: f64,
    #[arg(long)]
    pub reps: usize,
    #[arg(long)]
    pub seed: u64,
    /// Long-format CSV (stdout if absent).
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct ReplayArgs {
    pub manifest: PathBuf,
}
