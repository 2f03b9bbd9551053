//! GLM families, datasets, residuals and unpenalized refits on small supports.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::{Matrix, Vector};

const IRLS_TOL: f64 = 1e-8;
const IRLS_MAX_ITER: usize = 100;
const SEPARATION_NORM: f64 = 1e6;
const SEPARATION_LOGLIK: f64 = 1e-6;
const SATURATED_ETA: f64 = 30.0;

/// Link / inverse-link bundle. No intercept is ever added implicitly.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum GlmFamily {
    GaussianIdentity,
    BernoulliLogit,
}

impl GlmFamily {
    /// Inverse link `mu(z)`.
    #[inline]
    pub fn mu(self, z: f64) -> f64 {
        match self {
            GlmFamily::GaussianIdentity => z,
            GlmFamily::BernoulliLogit => {
                if z >= 0.0 {
                    1.0 / (1.0 + (-z).exp())
                } else {
                    let e = z.exp();
                    e / (1.0 + e)
                }
            }
        }
    }

    /// Derivative of the inverse link.
    #[inline]
    pub fn mu_prime(self, z: f64) -> f64 {
        match self {
            GlmFamily::GaussianIdentity => 1.0,
            GlmFamily::BernoulliLogit => {
                let m = self.mu(z);
                m * (1.0 - m)
            }
        }
    }

    /// Per-observation loss: half squared error, or negative Bernoulli
    /// log-likelihood.
    #[inline]
    pub(crate) fn loss(self, y: f64, eta: f64) -> f64 {
        match self {
            GlmFamily::GaussianIdentity => 0.5 * (y - eta) * (y - eta),
            GlmFamily::BernoulliLogit => softplus(eta) - y * eta,
        }
    }

    /// Per-observation deviance: squared error, or `-2` times the Bernoulli
    /// log-likelihood (the saturated model has likelihood one).
    #[inline]
    pub(crate) fn deviance(self, y: f64, eta: f64) -> f64 {
        2.0 * self.loss(y, eta)
    }
}

/// `log(1 + exp(z))` without overflow.
#[inline]
pub(crate) fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

/// Design matrix, response and family. Validated on construction.
#[derive(Debug, Clone)]
pub struct Dataset {
    x: Matrix,
    y: Vector,
    family: GlmFamily,
}

impl Dataset {
    pub fn new(x: Matrix, y: Vector, family: GlmFamily) -> Result<Self> {
        let (n, p) = x.shape();
        if y.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "design has {n} rows but response has {} entries",
                y.len()
            )));
        }
        if n < 2 {
            return Err(Error::InvalidDataset(format!("need n >= 2, got {n}")));
        }
        if p < 1 {
            return Err(Error::InvalidDataset("need at least one covariate".into()));
        }
        if x.iter().chain(y.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidDataset("non-finite entry".into()));
        }
        if family == GlmFamily::BernoulliLogit {
            if let Some(i) = y.iter().position(|&v| v != 0.0 && v != 1.0) {
                return Err(Error::InvalidDataset(format!(
                    "logistic response must be 0/1, row {i} has {}",
                    y[i]
                )));
            }
        }
        Ok(Self { x, y, family })
    }

    pub fn x(&self) -> &Matrix {
        &self.x
    }

    pub fn y(&self) -> &Vector {
        &self.y
    }

    pub fn family(&self) -> GlmFamily {
        self.family
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    /// Subset of rows, in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> Dataset {
        Dataset {
            x: self.x.select_rows(rows),
            y: Vector::from_iterator(rows.len(), rows.iter().map(|&i| self.y[i])),
            family: self.family,
        }
    }

    pub fn into_parts(self) -> (Matrix, Vector, GlmFamily) {
        (self.x, self.y, self.family)
    }
}

/// `X beta`.
pub fn linear_predictor(x: &Matrix, beta: &Vector) -> Result<Vector> {
    if x.ncols() != beta.len() {
        return Err(Error::DimensionMismatch(format!(
            "design has {} columns but beta has {} entries",
            x.ncols(),
            beta.len()
        )));
    }
    Ok(x * beta)
}

/// `y_i - mu(x_i' beta)`.
pub fn residuals(data: &Dataset, beta: &Vector) -> Result<Vector> {
    let eta = linear_predictor(data.x(), beta)?;
    let family = data.family();
    Ok(Vector::from_iterator(
        data.n(),
        data.y().iter().zip(eta.iter()).map(|(&y, &e)| y - family.mu(e)),
    ))
}

/// Result of an unpenalized refit.
#[derive(Debug, Clone)]
pub struct RefitOutcome {
    /// Full-length coefficient vector, zero off the support.
    pub beta: Vector,
    pub iterations: usize,
    pub converged: bool,
    /// Logistic coefficients diverged past the separation threshold; `beta`
    /// holds the last iterate.
    pub separated: bool,
}

/// Least squares (Gaussian) or logistic maximum likelihood restricted to
/// `support`.
pub fn mle_refit(data: &Dataset, support: &[usize]) -> Result<RefitOutcome> {
    let (n, p) = (data.n(), data.p());
    if let Some(&j) = support.iter().find(|&&j| j >= p) {
        return Err(Error::InvalidArgument(format!(
            "support index {j} out of range for p = {p}"
        )));
    }
    let mut beta = Vector::zeros(p);
    if support.is_empty() {
        return Ok(RefitOutcome {
            beta,
            iterations: 0,
            converged: true,
            separated: false,
        });
    }
    if support.len() >= n {
        return Err(Error::SingularDesign {
            columns: support.len(),
        });
    }
    let xs = data.x().select_columns(support);
    check_full_rank(&xs)?;

    let (coef, iterations, converged, separated) = match data.family() {
        GlmFamily::GaussianIdentity => (least_squares(&xs, data.y())?, 1, true, false),
        GlmFamily::BernoulliLogit => logistic_irls(&xs, data.y())?,
    };
    for (k, &j) in support.iter().enumerate() {
        beta[j] = coef[k];
    }
    Ok(RefitOutcome {
        beta,
        iterations,
        converged,
        separated,
    })
}

fn check_full_rank(xs: &Matrix) -> Result<()> {
    let r = xs.clone().qr().r();
    let diag: Vec<f64> = r.diagonal().iter().map(|v| v.abs()).collect();
    let max = diag.iter().cloned().fold(0.0, f64::max);
    if max == 0.0 || diag.iter().any(|&d| d <= 1e-10 * max) {
        return Err(Error::SingularDesign {
            columns: xs.ncols(),
        });
    }
    Ok(())
}

fn least_squares(xs: &Matrix, y: &Vector) -> Result<Vector> {
    let s = xs.ncols();
    let qr = xs.clone().qr();
    let qty = qr.q().transpose() * y;
    let r: DMatrix<f64> = qr.r();
    r.solve_upper_triangular(&qty.rows(0, s).into_owned())
        .ok_or(Error::SingularDesign { columns: s })
}

fn log_likelihood(eta: &Vector, y: &Vector) -> f64 {
    eta.iter()
        .zip(y.iter())
        .map(|(&e, &yi)| yi * e - softplus(e))
        .sum()
}

/// Newton-Raphson with step halving on the Bernoulli log-likelihood.
fn logistic_irls(xs: &Matrix, y: &Vector) -> Result<(Vector, usize, bool, bool)> {
    let family = GlmFamily::BernoulliLogit;
    let s = xs.ncols();
    let mut beta = Vector::zeros(s);
    let mut eta = Vector::zeros(xs.nrows());
    let mut ll = log_likelihood(&eta, y);

    for iter in 1..=IRLS_MAX_ITER {
        let mu = eta.map(|e| family.mu(e));
        let w = eta.map(|e| family.mu_prime(e));
        let score = xs.transpose() * (y - &mu);
        let mut weighted = xs.clone();
        for (mut row, &wi) in weighted.row_iter_mut().zip(w.iter()) {
            row *= wi;
        }
        let info = xs.transpose() * weighted;
        let step = match info.cholesky() {
            Some(chol) => chol.solve(&score),
            // Weights collapsed to zero on a full-rank design: separation.
            None => return Ok((beta, iter, false, true)),
        };

        let mut scale = 1.0;
        let mut candidate = &beta + &step;
        let mut cand_eta = xs * &candidate;
        let mut cand_ll = log_likelihood(&cand_eta, y);
        for _ in 0..30 {
            if cand_ll >= ll - 1e-12 * ll.abs() {
                break;
            }
            scale *= 0.5;
            candidate = &beta + &step * scale;
            cand_eta = xs * &candidate;
            cand_ll = log_likelihood(&cand_eta, y);
        }
        let change = (&candidate - &beta).amax();
        beta = candidate;
        eta = cand_eta;
        ll = cand_ll;

        // Newton iterates drift off linearly under separation, so besides the
        // norm guard a vanishing log-likelihood also counts.
        if beta.norm() > SEPARATION_NORM || ll > -SEPARATION_LOGLIK {
            log::warn!("logistic refit: data appear separated");
            return Ok((beta, iter, false, true));
        }
        if change <= IRLS_TOL {
            return Ok((beta, iter, true, false));
        }
    }
    let saturated = eta.iter().any(|e| e.abs() > SATURATED_ETA);
    if saturated {
        log::warn!("logistic refit: no convergence with saturated fitted probabilities");
    }
    Ok((beta, IRLS_MAX_ITER, false, saturated))
}
