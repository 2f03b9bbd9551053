//! The projected kernel statistic.
//!
//! For a unit direction `alpha` and fitted residuals `e_i`, with
//! `d_ij = (alpha'X_i - alpha'X_j) / h` and Gaussian kernel `K`,
//!
//! ```text
//!               sum_{i != j} e_i e_j K(d_ij)
//! T = -----------------------------------------------
//!      ( 2 sum_{i != j} e_i^2 e_j^2 K(d_ij)^2 )^(1/2)
//! ```
//!
//! which is asymptotically N(0, 1) under a correctly specified model. Large
//! positive values indicate misspecification, so p-values are upper tail.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::error::{Error, Result};
use crate::glm::{residuals, Dataset};
use crate::penalized::SparseFit;
use crate::Vector;

const FRAC_1_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Denominators below this are treated as a perfect fit.
pub const DEGENERATE_DENOMINATOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ProjectionOrigin {
    RandomSphere,
    EstimatedBeta,
}

/// A unit-norm projection direction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Projection {
    pub alpha: Vec<f64>,
    pub origin: ProjectionOrigin,
}

impl Projection {
    pub fn dim(&self) -> usize {
        self.alpha.len()
    }

    /// The opposite direction, same origin.
    pub fn negated(&self) -> Projection {
        Projection {
            alpha: self.alpha.iter().map(|a| -a).collect(),
            origin: self.origin,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectionTestResult {
    pub projection: Projection,
    pub h: f64,
    pub q_hat: usize,
    pub t_stat: f64,
    pub p_value: f64,
    pub degenerate: bool,
}

/// Uniform draw from the unit sphere in `R^p` (normalized Gaussian vector).
pub fn sample_projection<R: Rng + ?Sized>(p: usize, rng: &mut R) -> Result<Projection> {
    if p == 0 {
        return Err(Error::InvalidArgument("projection dimension must be >= 1".into()));
    }
    loop {
        let draw: Vec<f64> = (0..p).map(|_| rng.sample(StandardNormal)).collect();
        let norm = draw.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 0.0 && norm.is_finite() {
            return Ok(Projection {
                alpha: draw.into_iter().map(|v| v / norm).collect(),
                origin: ProjectionOrigin::RandomSphere,
            });
        }
    }
}

/// `beta_hat / |beta_hat|_2`.
pub fn estimated_projection(beta_hat: &Vector) -> Result<Projection> {
    let norm = beta_hat.norm();
    if norm == 0.0 {
        return Err(Error::DegenerateEstimate);
    }
    Ok(Projection {
        alpha: beta_hat.iter().map(|b| b / norm).collect(),
        origin: ProjectionOrigin::EstimatedBeta,
    })
}

/// `h = 2 n^{-1/(4 + max(q_hat, 1))}`.
pub fn bandwidth(n: usize, q_hat: usize) -> f64 {
    bandwidth_with_floor(n, q_hat, 1)
}

/// Bandwidth with a configurable floor on the model size.
pub fn bandwidth_with_floor(n: usize, q_hat: usize, q_floor: usize) -> f64 {
    let q = q_hat.max(q_floor) as f64;
    2.0 * (n as f64).powf(-1.0 / (4.0 + q))
}

/// Standard normal density.
#[inline]
pub fn gaussian_kernel(u: f64) -> f64 {
    FRAC_1_SQRT_2PI * (-0.5 * u * u).exp()
}

/// `1 - Phi(t)`, accurate in the upper tail.
pub fn upper_tail_p(t: f64) -> f64 {
    0.5 * erfc(t / std::f64::consts::SQRT_2)
}

/// Value of the self-normalized statistic.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StatisticValue {
    pub t_stat: f64,
    pub degenerate: bool,
    pub numerator: f64,
    pub denominator: f64,
}

/// Computes the statistic from residuals and projected covariates over all
/// ordered pairs `i != j`.
pub fn projected_statistic(residuals: &[f64], proj_x: &[f64], h: f64) -> Result<StatisticValue> {
    let n = residuals.len();
    if proj_x.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "{n} residuals but {} projected values",
            proj_x.len()
        )));
    }
    if n < 2 {
        return Err(Error::InsufficientData { needed: 2, got: n });
    }
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::InvalidArgument(format!("bandwidth must be positive, got {h}")));
    }

    // Symmetric in (i, j): accumulate i < j and double.
    let inv_h = 1.0 / h;
    let mut num = 0.0;
    let mut den = 0.0;
    for i in 0..n {
        let (ei, xi) = (residuals[i], proj_x[i]);
        for j in (i + 1)..n {
            let k = gaussian_kernel((xi - proj_x[j]) * inv_h);
            let prod = ei * residuals[j];
            num += prod * k;
            den += prod * prod * k * k;
        }
    }
    let numerator = 2.0 * num;
    let denominator = (4.0 * den).sqrt();
    if denominator < DEGENERATE_DENOMINATOR {
        return Ok(StatisticValue {
            t_stat: 0.0,
            degenerate: true,
            numerator,
            denominator,
        });
    }
    Ok(StatisticValue {
        t_stat: numerator / denominator,
        degenerate: false,
        numerator,
        denominator,
    })
}

/// Runs the test for one projection against a fitted model.
pub fn run_projection_test(
    data: &Dataset,
    fit: &SparseFit,
    proj: &Projection,
) -> Result<ProjectionTestResult> {
    run_projection_test_with_floor(data, fit, proj, 1)
}

/// As [`run_projection_test`] with an explicit bandwidth floor on `q_hat`.
pub fn run_projection_test_with_floor(
    data: &Dataset,
    fit: &SparseFit,
    proj: &Projection,
    q_floor: usize,
) -> Result<ProjectionTestResult> {
    if proj.dim() != data.p() {
        return Err(Error::DimensionMismatch(format!(
            "projection has dimension {}, data has p = {}",
            proj.dim(),
            data.p()
        )));
    }
    let resid = residuals(data, &fit.beta)?;
    let proj_x = data.x() * Vector::from_column_slice(&proj.alpha);
    let q_hat = fit.q_hat();
    let h = bandwidth_with_floor(data.n(), q_hat, q_floor);
    let value = projected_statistic(resid.as_slice(), proj_x.as_slice(), h)?;
    Ok(result_from(proj.clone(), h, q_hat, value))
}

pub(crate) fn result_from(
    projection: Projection,
    h: f64,
    q_hat: usize,
    value: StatisticValue,
) -> ProjectionTestResult {
    let p_value = if value.degenerate {
        1.0
    } else {
        upper_tail_p(value.t_stat)
    };
    ProjectionTestResult {
        projection,
        h,
        q_hat,
        t_stat: value.t_stat,
        p_value,
        degenerate: value.degenerate,
    }
}
