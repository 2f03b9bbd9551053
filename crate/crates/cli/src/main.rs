//! `hdgof`: fit, test and simulate from the command line.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use hdgof_core::{ColumnRef, CovarianceKind, GlmFamily, Model};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Command {
    /// Post-lasso fit and selected coefficients
    Fit,
    /// Projection tests and combined p-values
    Test,
    /// Monte Carlo rejection rates over a grid of `a`
    Simulate,
    /// Linear vs quadratic logistic test accuracy over random splits
    Sonar,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Family {
    Gaussian,
    Logit,
}

impl From<Family> for GlmFamily {
    fn from(f: Family) -> Self {
        match f {
            Family::Gaussian => GlmFamily::GaussianIdentity,
            Family::Logit => GlmFamily::BernoulliLogit,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Cov {
    Identity,
    Toeplitz,
}

impl From<Cov> for CovarianceKind {
    fn from(c: Cov) -> Self {
        match c {
            Cov::Identity => CovarianceKind::Identity,
            Cov::Toeplitz => CovarianceKind::ToeplitzHalf,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Text,
    JsonLines,
}

#[derive(Debug, Clone, Parser)]
#[command(name = "hdgof", version, about = "Random-projection goodness-of-fit tests for GLMs")]
pub struct RunConfig {
    #[arg(long, value_enum)]
    pub command: Command,

    /// CSV file with a header row (fit, test, sonar)
    #[arg(long)]
    pub input: Option<PathBuf>,

    /// Response column name or zero-based index
    #[arg(long, default_value = "y")]
    pub response: ColumnRef,

    #[arg(long, value_enum, default_value = "gaussian")]
    pub family: Family,

    /// Random projections in the combined battery
    #[arg(long, default_value_t = 10)]
    pub d_random: usize,

    #[arg(long, default_value_t = 1)]
    pub seed: u64,

    #[arg(long, default_value_t = 0.05)]
    pub level: f64,

    /// Center and scale each covariate column
    #[arg(long)]
    pub standardize: bool,

    /// Prepend a column of ones
    #[arg(long)]
    pub intercept: bool,

    /// Append squared covariates
    #[arg(long)]
    pub quadratic: bool,

    #[arg(long, default_value_t = 500)]
    pub n_reps: usize,

    #[arg(long, default_value = "H11")]
    pub model: Model,

    #[arg(long, default_value_t = 200)]
    pub n: usize,

    #[arg(long, default_value_t = 100)]
    pub p: usize,

    /// Comma-separated deviation sizes
    #[arg(long, value_delimiter = ',', default_value = "0,0.2,0.4,0.6,0.8")]
    pub a: Vec<f64>,

    #[arg(long, value_enum, default_value = "identity")]
    pub cov: Cov,

    #[arg(long, value_enum, default_value = "text")]
    pub format: Format,

    /// Random train/test splits for the sonar command
    #[arg(long, default_value_t = 100)]
    pub splits: usize,
}

impl RunConfig {
    fn validate(&self) -> Result<(), String> {
        if !(self.level > 0.0 && self.level < 1.0) {
            return Err(format!("--level must lie in (0, 1), got {}", self.level));
        }
        Ok(())
    }
}

/// Worker threads from `HDGOF_THREADS`; 0 or unset means rayon's default.
fn threads_from_env() -> Result<usize, String> {
    match std::env::var("HDGOF_THREADS") {
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| format!("HDGOF_THREADS must be a nonnegative integer, got {v:?}")),
        Err(_) => Ok(0),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cfg = RunConfig::parse();
    let result = cfg
        .validate()
        .and_then(|_| threads_from_env())
        .and_then(|threads| {
            let stdout = std::io::stdout();
            commands::run(&cfg, threads, &mut stdout.lock()).map_err(|e| e.to_string())
        });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(msg) => {
            eprintln!("error: {msg}");
            ExitCode::FAILURE
        }
    }
}
