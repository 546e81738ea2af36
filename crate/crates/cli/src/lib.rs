//! Command-line front end for the space-split estimators.
//!
//! Every command reads a [`RunConfig`](config::RunConfig), applies flag
//! overrides, and writes one CSV table whose leading `#` lines echo the
//! resolved configuration.

pub mod commands;
pub mod config;
pub mod error;
pub mod output;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::config::RunConfig;
use crate::error::CliResult;

#[derive(Debug, Parser)]
#[command(name = "s3", version, about = "Sensitivities of long-time averages in chaotic maps")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Space-split sensitivity estimate per objective.
    S3(RunArgs),
    /// Central finite differences over sampled orbits.
    Fd(RunArgs),
    /// Truncated ensemble tangent sums and their per-lag variance.
    Ensemble(RunArgs),
    /// Transfer-operator estimate for periodic 1-D maps.
    Ulam(RunArgs),
    /// Lyapunov spectrum and the number of unstable directions.
    Lyapunov(RunArgs),
    /// Compares an estimate file against a finite-difference file.
    Compare(CompareArgs),
    /// Checks the analytic derivatives of a model against finite differences.
    CheckModel(RunArgs),
}

#[derive(Debug, Clone, Default, Args)]
pub struct RunArgs {
    /// TOML run configuration.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub model: Option<String>,
    /// Comma-separated parameter vector.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    pub params: Option<Vec<f64>>,
    #[arg(long)]
    pub param_index: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output file; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub psi_warm_up: Option<usize>,
    #[arg(long)]
    pub lags: Option<usize>,
    #[arg(long)]
    pub burn_in: Option<usize>,
    #[arg(long, allow_negative_numbers = true)]
    pub fd_step: Option<f64>,
    #[arg(long)]
    pub frame_warm_up: Option<usize>,
    #[arg(long)]
    pub unstable_dim: Option<usize>,
    #[arg(long)]
    pub replicates: Option<usize>,
    #[arg(long, allow_negative_numbers = true)]
    pub delta: Option<f64>,
    #[arg(long)]
    pub samples: Option<usize>,
    #[arg(long)]
    pub sample_burn_in: Option<usize>,
    #[arg(long)]
    pub horizon: Option<usize>,
    #[arg(long)]
    pub truncation: Option<usize>,
    #[arg(long)]
    pub n_cells: Option<usize>,
}

impl RunArgs {
    /// Config file (or defaults) with the flags applied, validated.
    pub fn resolve(&self) -> CliResult<RunConfig> {
        let mut c = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        macro_rules! set {
            ($($field:ident),*) => {
                $(if let Some(v) = &self.$field { c.$field = v.clone(); })*
            };
        }
        set!(
            model, param_index, seed, steps, psi_warm_up, lags, burn_in, fd_step, frame_warm_up,
            replicates, delta, samples, sample_burn_in, horizon, truncation, n_cells
        );
        if let Some(p) = &self.params {
            c.params = Some(p.clone());
        }
        if let Some(m) = self.unstable_dim {
            c.unstable_dim = Some(m);
        }
        if let Some(out) = &self.out {
            c.out = Some(out.clone());
        }
        c.resolve()
    }
}

#[derive(Debug, Clone, Args)]
pub struct CompareArgs {
    /// Output of `s3` (column `total`) or of `fd` (column `estimate`).
    #[arg(long = "s3")]
    pub estimate: PathBuf,
    /// Output of `fd`.
    #[arg(long)]
    pub fd: PathBuf,
    /// Largest |z| counted as agreement.
    #[arg(long = "z", default_value_t = 3.0)]
    pub z_threshold: f64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn run(cli: &Cli) -> CliResult<()> {
    match &cli.command {
        Command::S3(a) => commands::s3(&a.resolve()?),
        Command::Fd(a) => commands::fd(&a.resolve()?),
        Command::Ensemble(a) => commands::ensemble(&a.resolve()?),
        Command::Ulam(a) => commands::ulam(&a.resolve()?),
        Command::Lyapunov(a) => commands::lyapunov(&a.resolve()?),
        Command::CheckModel(a) => commands::check_model(&a.resolve()?),
        Command::Compare(a) => commands::compare(a),
    }
}
