//! `rfpde`: solves, benchmarks, sweeps, ablations and application demos.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::{Format, NewtonFile, RunConfig};
use rfpde::BasisKind;

/// Environment variable holding the dense-kernel thread count.
pub const THREADS_ENV: &str = "RFPDE_THREADS";

#[derive(Debug, Parser)]
#[command(name = "rfpde", version, about = "Meshfree PDE solving with sinusoidal random features")]
pub struct Cli {
    #[command(flatten)]
    pub run: RunArgs,
    /// Print the problem registry and exit.
    #[arg(long, global = true)]
    pub list_problems: bool,
    #[command(subcommand)]
    pub command: Option<Command>,
}

/// Flags shared by every command. They override values from `--config`.
#[derive(Debug, Clone, Default, Args)]
pub struct RunArgs {
    /// TOML file with run settings.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Shrink to N=600, M1=3000, M2=800.
    #[arg(long, global = true)]
    pub desk_scale: bool,
    /// Print the resolved configuration without computing.
    #[arg(long, global = true)]
    pub dry_run: bool,
    /// Problem names, comma separated, or `all`.
    #[arg(long, alias = "problem", value_delimiter = ',', global = true)]
    pub problems: Vec<String>,
    #[arg(long, value_delimiter = ',', global = true)]
    pub basis: Vec<BasisKind>,
    #[arg(long, alias = "seed", value_delimiter = ',', global = true)]
    pub seeds: Vec<u64>,
    #[arg(long, global = true)]
    pub sigma: Option<f64>,
    /// Bandwidth grid for `sweep`.
    #[arg(long, value_delimiter = ',', global = true)]
    pub grid: Vec<f64>,
    #[arg(long, global = true)]
    pub trials: Option<usize>,
    /// Total feature count.
    #[arg(long, global = true)]
    pub n_total: Option<usize>,
    #[arg(long, global = true)]
    pub blocks: Option<usize>,
    #[arg(long, global = true)]
    pub m_interior: Option<usize>,
    #[arg(long, global = true)]
    pub m_boundary: Option<usize>,
    #[arg(long, global = true)]
    pub m_initial: Option<usize>,
    /// Boundary and initial penalty weight.
    #[arg(long, global = true)]
    pub penalty: Option<f64>,
    /// Tikhonov parameter for linear and regression solves.
    #[arg(long, global = true)]
    pub mu: Option<f64>,
    /// Drop the 1/sqrt(N) feature scaling.
    #[arg(long, global = true)]
    pub no_normalize: bool,
    #[arg(long, global = true)]
    pub test_points: Option<usize>,
    #[arg(long, global = true)]
    pub test_seed: Option<u64>,
    #[arg(long, short, global = true)]
    pub output: Option<PathBuf>,
    #[arg(long, value_enum, global = true)]
    pub format: Option<Format>,
    #[arg(long, global = true)]
    pub max_iter: Option<usize>,
    /// Newton relative step tolerance.
    #[arg(long, global = true)]
    pub tol: Option<f64>,
    /// Newton Tikhonov parameter.
    #[arg(long, global = true)]
    pub newton_mu: Option<f64>,
    #[arg(long, global = true)]
    pub no_line_search: bool,
    #[arg(long, global = true)]
    pub no_warm_start: bool,
}

impl RunArgs {
    pub fn to_config(&self) -> RunConfig {
        let newton = NewtonFile {
            max_iter: self.max_iter,
            tol: self.tol,
            mu: self.newton_mu,
            line_search: self.no_line_search.then_some(false),
            warm_start: self.no_warm_start.then_some(false),
        };
        RunConfig {
            problems: nonempty(&self.problems),
            basis: nonempty(&self.basis),
            seeds: nonempty(&self.seeds),
            sigma: self.sigma,
            grid: nonempty(&self.grid),
            trials: self.trials,
            n_total: self.n_total,
            blocks: self.blocks,
            m_interior: self.m_interior,
            m_boundary: self.m_boundary,
            m_initial: self.m_initial,
            penalty: self.penalty,
            mu: self.mu,
            normalized: self.no_normalize.then_some(false),
            desk_scale: self.desk_scale.then_some(true),
            test_points: self.test_points,
            test_seed: self.test_seed,
            output: self.output.clone(),
            format: self.format,
            newton: (newton != NewtonFile::default()).then_some(newton),
        }
    }
}

fn nonempty<T: Clone>(v: &[T]) -> Option<Vec<T>> {
    (!v.is_empty()).then(|| v.to_vec())
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve one problem and print its error and solve reports.
    Solve,
    /// One row per (problem, basis, seed).
    Bench,
    /// Bandwidth sensitivity: error per sigma, basis and trial.
    Sweep,
    /// Full method and single-component removals on nonlinear problems.
    Ablate {
        /// Variants to run (default: all).
        #[arg(long, value_delimiter = ',')]
        variants: Vec<rfpde::problems::ablation::AblationVariant>,
    },
    /// Sparse equation discovery on the noisy damped oscillator.
    Discover {
        #[arg(long)]
        noise: Option<f64>,
        #[arg(long)]
        points: Option<usize>,
        /// Fraction of the range left out at each end of the regression.
        #[arg(long)]
        edge_trim: Option<f64>,
    },
    /// Gaussian source recovery through a prefactored forward map.
    Inverse {
        #[arg(long, default_value = "poisson")]
        operator: rfpde::applications::inverse::InverseOperator,
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long)]
        step_size: Option<f64>,
        /// Observation noise relative to the RMS sensor value.
        #[arg(long)]
        noise: Option<f64>,
        /// Write the loss and parameter trajectory as CSV.
        #[arg(long)]
        trajectory: Option<PathBuf>,
    },
    /// Fresh versus cached solve timings over many right-hand sides.
    CacheBench {
        #[arg(long, default_value_t = 20)]
        rhs: usize,
    },
    /// Print the problem registry.
    ListProblems,
}

fn main() -> ExitCode {
    if let Ok(v) = std::env::var(THREADS_ENV) {
        match v.parse::<usize>() {
            Ok(n) => rfpde::linalg::set_threads(n),
            Err(_) => {
                let e = anyhow::Error::new(rfpde::Error::InvalidArgument(format!("{THREADS_ENV} must be an integer, got `{v}`")));
                return commands::report_error(&e);
            }
        }
    }
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            return commands::report_usage(&e);
        }
    };
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => commands::report_error(&e),
    }
}
