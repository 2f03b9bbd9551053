//! Goodness-of-fit testing for (possibly p >> n) generalized linear models.
//!
//! The test projects the covariates onto a direction `alpha`, smooths the
//! fitted residuals along `alpha'X` with a Gaussian kernel and
//! self-normalizes the resulting degenerate U-statistic, which is
//! asymptotically standard normal under a correctly specified model.
//! Several projections are combined with the Cauchy combination or the
//! harmonic mean p-value.
//!
//! Module map:
//!
//! - [`glm`]: families, datasets, residuals and unpenalized refits.
//! - [`penalized`]: lasso by coordinate descent, cross-validated tuning and
//!   the post-lasso estimator.
//! - [`projection`]: projections, bandwidth, kernel and the statistic.
//! - [`combine`]: Cauchy and harmonic-mean p-value combination.
//! - [`battery`]: the projection battery applied to one fitted dataset.
//! - [`sim`]: data generators and the Monte Carlo replication engine.
//! - [`dataio`]: CSV ingestion, preprocessing and the train/test accuracy study.

pub mod battery;
pub mod combine;
pub mod dataio;
pub mod error;
pub mod glm;
pub mod penalized;
pub mod projection;
pub mod sim;

pub use battery::{run_battery, BatteryResult};
pub use combine::{cauchy_combine, combine, default_weights, hmp_combine, CombinedTestResult};
pub use dataio::{compare_accuracy, load_csv, AccuracyReport, ColumnRef, LoadedTable, Preprocess};
pub use error::{Error, Result};
pub use glm::{linear_predictor, mle_refit, residuals, Dataset, GlmFamily, RefitOutcome};
pub use penalized::{
    lambda_max, lasso_fit, lasso_objective, post_lasso, select_lambda_cv, soft_threshold, CvSelection, LambdaRule, PathConfig,
    PostLassoFit, RefitStatus, SparseFit,
};
pub use projection::{
    bandwidth, estimated_projection, gaussian_kernel, projected_statistic, run_projection_test,
    sample_projection, upper_tail_p, Projection, ProjectionOrigin, ProjectionTestResult, StatisticValue,
};
pub use sim::{
    replication_rng, run_replications, run_replications_with, CovarianceKind, CovarianceSpec, Model,
    PowerTableCell, ReplicationOptions, ReplicationSummary, ScenarioSpec, TestName,
};

/// Matrix type used throughout the crate (column-major, dense).
pub type Matrix = nalgebra::DMatrix<f64>;
/// Column vector type used throughout the crate.
pub type Vector = nalgebra::DVector<f64>;
