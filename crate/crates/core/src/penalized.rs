//! L1-penalized GLM estimation by cyclic coordinate descent.
//!
//! Both families minimize `L_n(beta) + lambda * |beta|_1` where `L_n` is the
//! mean per-observation loss (half squared error or negative Bernoulli
//! log-likelihood). The Gaussian loss is quadratic, so plain coordinate
//! descent applies. The logistic loss is handled by proximal Newton steps:
//! coordinate descent on a weighted quadratic approximation, followed by a
//! backtracking line search that keeps the objective nonincreasing.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::glm::{mle_refit, Dataset, GlmFamily};
use crate::Vector;

/// Stop when no coefficient moves by more than this in a full sweep.
pub const COEF_TOL: f64 = 1e-7;
/// Coordinate sweeps allowed per penalty level.
pub const MAX_SWEEPS: usize = 100_000;
/// Deviance explained at which a logistic path is considered saturated.
pub const SATURATED_DEV_RATIO: f64 = 0.999;
/// Smallest per-step deviance gain, relative to the null deviance, that
/// keeps a logistic path going.
pub const MIN_DEV_GAIN: f64 = 1e-5;
/// Penalties evaluated past the running CV minimum before the walk stops.
pub const CV_PATIENCE: usize = 10;
const MIN_IRLS_WEIGHT: f64 = 1e-5;
const LINE_SEARCH_STEPS: usize = 30;

/// `sign(z) * max(|z| - gamma, 0)`.
#[inline]
pub fn soft_threshold(z: f64, gamma: f64) -> f64 {
    debug_assert!(gamma >= 0.0);
    if z > gamma {
        z - gamma
    } else if z < -gamma {
        z + gamma
    } else {
        0.0
    }
}

/// A penalized (or refitted) coefficient vector with its support.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseFit {
    pub beta: Vector,
    /// Indices of the nonzero entries of `beta`, ascending.
    pub support: Vec<usize>,
    pub lambda: f64,
    /// Coordinate sweeps used.
    pub n_iter: usize,
    pub converged: bool,
}

impl SparseFit {
    /// Number of nonzero coefficients.
    pub fn q_hat(&self) -> usize {
        self.support.len()
    }
}

pub(crate) fn support_of(beta: &Vector) -> Vec<usize> {
    beta.iter()
        .enumerate()
        .filter(|(_, &b)| b != 0.0)
        .map(|(j, _)| j)
        .collect()
}

/// How the working penalty level is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum LambdaRule {
    /// K-fold cross-validation minimizing held-out deviance over the path.
    CrossValidation,
    /// `lambda = c * sqrt(ln p / n)`.
    Theory { c: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathConfig {
    pub n_lambda: usize,
    /// `None` resolves to 0.01 when `p >= n` and 1e-4 otherwise.
    pub lambda_min_ratio: Option<f64>,
    pub n_folds: usize,
    pub seed: u64,
    pub rule: LambdaRule,
}

impl Default for PathConfig {
    fn default() -> Self {
        Self {
            n_lambda: 100,
            lambda_min_ratio: None,
            n_folds: 10,
            seed: 0,
            rule: LambdaRule::CrossValidation,
        }
    }
}

impl PathConfig {
    pub fn with_seed(seed: u64) -> Self {
        Self {
            seed,
            ..Self::default()
        }
    }

    pub fn min_ratio(&self, n: usize, p: usize) -> f64 {
        self.lambda_min_ratio
            .unwrap_or(if p >= n { 0.01 } else { 1e-4 })
    }

    fn validate(&self) -> Result<()> {
        if self.n_lambda < 2 {
            return Err(Error::InvalidArgument("n_lambda must be >= 2".into()));
        }
        if let Some(r) = self.lambda_min_ratio {
            if !(r > 0.0 && r < 1.0) {
                return Err(Error::InvalidArgument(
                    "lambda_min_ratio must lie in (0, 1)".into(),
                ));
            }
        }
        if self.n_folds < 2 {
            return Err(Error::InvalidArgument("n_folds must be >= 2".into()));
        }
        if let LambdaRule::Theory { c } = self.rule {
            if !(c > 0.0 && c.is_finite()) {
                return Err(Error::InvalidArgument("theory constant must be positive".into()));
            }
        }
        Ok(())
    }
}

/// Penalized objective `L_n(beta) + lambda |beta|_1`.
pub fn lasso_objective(data: &Dataset, beta: &Vector, lambda: f64) -> f64 {
    penalized_value(data, &(data.x() * beta), beta, lambda)
}

/// `max_j |x_j'(y - mu(0))| / n`: the smallest penalty with an all-zero
/// solution.
pub fn lambda_max(data: &Dataset) -> f64 {
    let mu0 = data.family().mu(0.0);
    let r = data.y().map(|y| y - mu0);
    let n = data.n() as f64;
    data.x()
        .column_iter()
        .map(|c| (c.dot(&r) / n).abs())
        .fold(0.0, f64::max)
}

/// Log-spaced path from `lambda_max` down to `lambda_max * min_ratio`.
pub fn lambda_path(lambda_max: f64, n_lambda: usize, min_ratio: f64) -> Vec<f64> {
    let last = (n_lambda - 1) as f64;
    (0..n_lambda)
        .map(|k| lambda_max * min_ratio.powf(k as f64 / last))
        .collect()
}

fn penalized_value(data: &Dataset, eta: &Vector, beta: &Vector, lambda: f64) -> f64 {
    let family = data.family();
    let loss: f64 = data
        .y()
        .iter()
        .zip(eta.iter())
        .map(|(&y, &e)| family.loss(y, e))
        .sum::<f64>()
        / data.n() as f64;
    loss + lambda * beta.lp_norm(1)
}

/// Working state of the coordinate-descent solver.
struct CoordinateDescent<'a> {
    data: &'a Dataset,
    /// Gaussian coordinate curvatures `x_j'x_j / n`.
    curvature: Vec<f64>,
    beta: Vector,
    eta: Vector,
    resid: Vector,
}

impl<'a> CoordinateDescent<'a> {
    fn new(data: &'a Dataset, warm_start: Option<&Vector>) -> Self {
        let n = data.n() as f64;
        let curvature = data.x().column_iter().map(|c| c.norm_squared() / n).collect();
        let beta = warm_start
            .cloned()
            .unwrap_or_else(|| Vector::zeros(data.p()));
        let mut cd = Self {
            data,
            curvature,
            beta,
            eta: Vector::zeros(data.n()),
            resid: Vector::zeros(data.n()),
        };
        cd.resync();
        cd
    }

    /// Recompute `eta` and the residuals from `beta`.
    fn resync(&mut self) {
        self.eta = self.data.x() * &self.beta;
        let family = self.data.family();
        self.resid = Vector::from_iterator(
            self.data.n(),
            self.data
                .y()
                .iter()
                .zip(self.eta.iter())
                .map(|(&y, &e)| y - family.mu(e)),
        );
    }

    /// Exact Gaussian coordinate step.
    #[inline]
    fn update(&mut self, j: usize, lambda: f64) -> f64 {
        let b = self.curvature[j];
        if b == 0.0 {
            return 0.0;
        }
        let n = self.data.n() as f64;
        let col = self.data.x().column(j);
        let grad = -col.dot(&self.resid) / n;
        let old = self.beta[j];
        let new = soft_threshold(b * old - grad, lambda) / b;
        let delta = new - old;
        if delta == 0.0 {
            return 0.0;
        }
        self.beta[j] = new;
        self.eta.axpy(delta, &col, 1.0);
        self.resid.axpy(-delta, &col, 1.0);
        delta.abs()
    }

    fn sweep_all(&mut self, lambda: f64) -> f64 {
        (0..self.beta.len())
            .map(|j| self.update(j, lambda))
            .fold(0.0, f64::max)
    }

    fn sweep_active(&mut self, lambda: f64) -> f64 {
        let active = support_of(&self.beta);
        active
            .into_iter()
            .map(|j| self.update(j, lambda))
            .fold(0.0, f64::max)
    }

    fn objective(&self, lambda: f64) -> f64 {
        penalized_value(self.data, &self.eta, &self.beta, lambda)
    }

    /// Full sweeps alternate with inner passes over the active set until a
    /// full sweep moves no coefficient by more than `COEF_TOL`.
    fn solve(&mut self, lambda: f64, trace: Option<&mut Vec<f64>>) -> (usize, bool) {
        match self.data.family() {
            GlmFamily::GaussianIdentity => self.solve_gaussian(lambda, trace),
            GlmFamily::BernoulliLogit => self.solve_logistic(lambda, trace),
        }
    }

    fn solve_gaussian(&mut self, lambda: f64, mut trace: Option<&mut Vec<f64>>) -> (usize, bool) {
        self.resync();
        if let Some(t) = trace.as_deref_mut() {
            t.push(self.objective(lambda));
        }
        let mut sweeps = 0;
        loop {
            let change = self.sweep_all(lambda);
            sweeps += 1;
            if let Some(t) = trace.as_deref_mut() {
                t.push(self.objective(lambda));
            }
            if change <= COEF_TOL {
                return (sweeps, true);
            }
            loop {
                if sweeps >= MAX_SWEEPS {
                    return (sweeps, false);
                }
                let change = self.sweep_active(lambda);
                sweeps += 1;
                if let Some(t) = trace.as_deref_mut() {
                    t.push(self.objective(lambda));
                }
                if change <= COEF_TOL {
                    break;
                }
            }
        }
    }

    /// Proximal Newton: each outer step minimizes the penalized quadratic
    /// approximation of the loss by coordinate descent, then backtracks along
    /// the resulting direction until the objective does not increase. The
    /// trace records one value per outer step.
    fn solve_logistic(&mut self, lambda: f64, mut trace: Option<&mut Vec<f64>>) -> (usize, bool) {
        self.resync();
        let (n, p) = (self.data.n(), self.data.p());
        let nf = n as f64;
        let x = self.data.x();
        let mut current = self.objective(lambda);
        if let Some(t) = trace.as_deref_mut() {
            t.push(current);
        }
        let mut sweeps = 0;
        while sweeps < MAX_SWEEPS {
            let w = self.eta.map(|e| GlmFamily::BernoulliLogit.mu_prime(e).max(MIN_IRLS_WEIGHT));
            let curv: Vec<f64> = x
                .column_iter()
                .map(|c| c.iter().zip(w.iter()).map(|(&v, &wi)| wi * v * v).sum::<f64>() / nf)
                .collect();
            // Weighted working residual w_i (z_i - x_i'b) at the trial point,
            // which starts at the current iterate where it equals y - mu.
            let mut wr = self.resid.clone();
            let mut trial = self.beta.clone();
            let update = |j: usize, trial: &mut Vector, wr: &mut Vector| -> f64 {
                let c = curv[j];
                if c == 0.0 {
                    return 0.0;
                }
                let col = x.column(j);
                let grad = -col.dot(wr) / nf;
                let old = trial[j];
                let new = soft_threshold(c * old - grad, lambda) / c;
                let delta = new - old;
                if delta != 0.0 {
                    trial[j] = new;
                    for i in 0..n {
                        wr[i] -= delta * w[i] * col[i];
                    }
                }
                delta.abs()
            };
            loop {
                let change = (0..p).map(|j| update(j, &mut trial, &mut wr)).fold(0.0, f64::max);
                sweeps += 1;
                if change <= COEF_TOL || sweeps >= MAX_SWEEPS {
                    break;
                }
                loop {
                    let active = support_of(&trial);
                    let change = active.into_iter().map(|j| update(j, &mut trial, &mut wr)).fold(0.0, f64::max);
                    sweeps += 1;
                    if change <= COEF_TOL || sweeps >= MAX_SWEEPS {
                        break;
                    }
                }
            }

            let direction = &trial - &self.beta;
            let step_eta = x * &direction;
            let mut t = 1.0;
            let mut accepted = false;
            for _ in 0..LINE_SEARCH_STEPS {
                let beta = &self.beta + &direction * t;
                let eta = &self.eta + &step_eta * t;
                let value = penalized_value(self.data, &eta, &beta, lambda);
                if value <= current + 1e-12 * current.abs() {
                    self.beta = beta;
                    self.eta = eta;
                    current = value;
                    accepted = true;
                    break;
                }
                t *= 0.5;
            }
            let moved = if accepted { t * direction.amax() } else { 0.0 };
            self.refresh_resid();
            if let Some(tr) = trace.as_deref_mut() {
                tr.push(current);
            }
            if moved <= COEF_TOL {
                return (sweeps, true);
            }
        }
        (sweeps, false)
    }

    fn refresh_resid(&mut self) {
        let family = self.data.family();
        for (r, (&y, &e)) in self.resid.iter_mut().zip(self.data.y().iter().zip(self.eta.iter())) {
            *r = y - family.mu(e);
        }
    }

    fn snapshot(&self, lambda: f64, n_iter: usize, converged: bool) -> SparseFit {
        SparseFit {
            support: support_of(&self.beta),
            beta: self.beta.clone(),
            lambda,
            n_iter,
            converged,
        }
    }
}

fn check_lambda(data: &Dataset, lambda: f64) -> Result<()> {
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "lambda must be finite and nonnegative, got {lambda}"
        )));
    }
    if lambda == 0.0 && data.p() >= data.n() {
        return Err(Error::InvalidArgument(
            "lambda = 0 requires p < n".into(),
        ));
    }
    Ok(())
}

/// Lasso estimate at a single penalty level.
///
/// Non-convergence within [`MAX_SWEEPS`] is reported through
/// `SparseFit::converged`, with the last iterate returned.
pub fn lasso_fit(data: &Dataset, lambda: f64, warm_start: Option<&Vector>) -> Result<SparseFit> {
    lasso_fit_traced(data, lambda, warm_start, None)
}

/// As [`lasso_fit`], recording the penalized objective before the first
/// sweep and after every sweep into `trace`.
pub fn lasso_fit_traced(
    data: &Dataset,
    lambda: f64,
    warm_start: Option<&Vector>,
    trace: Option<&mut Vec<f64>>,
) -> Result<SparseFit> {
    check_lambda(data, lambda)?;
    if let Some(w) = warm_start {
        if w.len() != data.p() {
            return Err(Error::DimensionMismatch(format!(
                "warm start has {} entries, expected {}",
                w.len(),
                data.p()
            )));
        }
    }
    let mut cd = CoordinateDescent::new(data, warm_start);
    let (sweeps, converged) = cd.solve(lambda, trace);
    if !converged {
        log::warn!("lasso did not converge at lambda = {lambda:e} after {sweeps} sweeps");
    }
    Ok(cd.snapshot(lambda, sweeps, converged))
}

/// A warm-started walk down a penalty path.
struct PathWalker<'a> {
    cd: CoordinateDescent<'a>,
    null_dev: f64,
    prev_dev: f64,
    steps: usize,
    saturated: bool,
}

impl<'a> PathWalker<'a> {
    fn new(data: &'a Dataset) -> Self {
        let null_dev = data.n() as f64 * 2.0 * std::f64::consts::LN_2;
        Self { cd: CoordinateDescent::new(data, None), null_dev, prev_dev: null_dev, steps: 0, saturated: false }
    }

    /// Fits at `lambda` unless the path has saturated.
    fn step(&mut self, lambda: f64) -> Option<SparseFit> {
        if self.saturated {
            return None;
        }
        let (sweeps, converged) = self.cd.solve(lambda, None);
        self.steps += 1;
        let data = self.cd.data;
        if data.family() == GlmFamily::BernoulliLogit {
            let dev: f64 = data
                .y()
                .iter()
                .zip(self.cd.eta.iter())
                .map(|(&y, &e)| GlmFamily::BernoulliLogit.deviance(y, e))
                .sum();
            let ratio = 1.0 - dev / self.null_dev;
            let gain = (self.prev_dev - dev) / self.null_dev;
            if ratio >= SATURATED_DEV_RATIO || (self.steps > 1 && gain < MIN_DEV_GAIN) {
                log::debug!("logistic path saturated at lambda = {lambda:e}");
                self.saturated = true;
            }
            self.prev_dev = dev;
        }
        Some(self.cd.snapshot(lambda, sweeps, converged))
    }
}

/// Warm-started fits along a decreasing sequence of penalties.
///
/// Logistic paths stop early once the fit saturates: deviance explained
/// reaches [`SATURATED_DEV_RATIO`] or improves by less than
/// [`MIN_DEV_GAIN`] of the null deviance between steps. Past that point the
/// coefficients diverge toward a separating direction. The returned path
/// may therefore be shorter than `lambdas`.
pub fn lasso_path(data: &Dataset, lambdas: &[f64]) -> Result<Vec<SparseFit>> {
    for &l in lambdas {
        check_lambda(data, l)?;
    }
    let mut walker = PathWalker::new(data);
    Ok(lambdas.iter().map_while(|&l| walker.step(l)).collect())
}

/// Outcome of cross-validated penalty selection.
#[derive(Debug, Clone)]
pub struct CvSelection {
    pub lambda: f64,
    /// Position of `lambda` in `lambdas`.
    pub index: usize,
    /// The evaluated prefix of the penalty path.
    pub lambdas: Vec<f64>,
    /// Pooled mean held-out deviance at each penalty.
    pub cv_error: Vec<f64>,
    pub skipped_folds: usize,
}

fn is_constant(v: &Vector) -> bool {
    v.iter().all(|&x| x == v[0])
}

/// Selects the penalty on a log path by K-fold cross-validation.
///
/// Folds come from a seeded shuffle, so the choice is deterministic given
/// `cfg.seed`. Ties in CV error resolve to the larger penalty. Folds whose
/// training response is constant are skipped. The walk down the path stops
/// [`CV_PATIENCE`] penalties after the last improvement of the pooled error.
pub fn select_lambda_cv(data: &Dataset, cfg: &PathConfig) -> Result<CvSelection> {
    cfg.validate()?;
    let (n, p) = (data.n(), data.p());
    if n < 2 * cfg.n_folds {
        return Err(Error::InsufficientData {
            needed: 2 * cfg.n_folds,
            got: n,
        });
    }
    let lmax = lambda_max(data);
    if lmax == 0.0 {
        return Err(Error::InvalidDataset(
            "response is orthogonal to every covariate at beta = 0".into(),
        ));
    }
    let lambdas = lambda_path(lmax, cfg.n_lambda, cfg.min_ratio(n, p));

    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(cfg.seed));
    let mut fold_of = vec![0usize; n];
    for (pos, &i) in order.iter().enumerate() {
        fold_of[i] = pos % cfg.n_folds;
    }

    let mut splits = Vec::with_capacity(cfg.n_folds);
    let mut skipped_folds = 0;
    for fold in 0..cfg.n_folds {
        let (train, test): (Vec<usize>, Vec<usize>) = (0..n).partition(|&i| fold_of[i] != fold);
        let train_data = data.select_rows(&train);
        if is_constant(train_data.y()) {
            log::warn!("cv fold {fold}: constant training response, fold skipped");
            skipped_folds += 1;
            continue;
        }
        splits.push((train_data, data.select_rows(&test)));
    }
    if splits.is_empty() {
        return Err(Error::InvalidDataset("every cv fold was degenerate".into()));
    }
    let used: usize = splits.iter().map(|(_, test)| test.n()).sum();

    // Folds advance in lockstep so the walk can stop once the pooled error
    // has clearly passed its minimum. A saturated fold keeps its last fit.
    let family = data.family();
    let held_out = |test: &Dataset, beta: &Vector| -> f64 {
        let eta = test.x() * beta;
        test.y().iter().zip(eta.iter()).map(|(&y, &e)| family.deviance(y, e)).sum()
    };
    let mut folds: Vec<(PathWalker, &Dataset, f64)> =
        splits.iter().map(|(train, test)| (PathWalker::new(train), test, f64::NAN)).collect();
    let mut cv_error = Vec::with_capacity(lambdas.len());
    let mut index = 0;
    for (k, &lambda) in lambdas.iter().enumerate() {
        folds.par_iter_mut().for_each(|(walker, test, dev)| {
            if let Some(fit) = walker.step(lambda) {
                *dev = held_out(test, &fit.beta);
            }
        });
        let err = folds.iter().map(|f| f.2).sum::<f64>() / used as f64;
        cv_error.push(err);
        // Ties keep the earlier, larger penalty.
        if err < cv_error[index] {
            index = k;
        }
        if k - index >= CV_PATIENCE {
            break;
        }
    }
    let lambdas = lambdas[..cv_error.len()].to_vec();
    Ok(CvSelection {
        lambda: lambdas[index],
        index,
        lambdas,
        cv_error,
        skipped_folds,
    })
}

/// What happened in the unpenalized refit step of [`post_lasso`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RefitStatus {
    /// Refit converged on the lasso support.
    Refit,
    /// Logistic refit diverged (separation); the last iterate is used.
    Separated,
    /// Support too large or rank deficient; lasso coefficients are used.
    LassoFallback,
}

#[derive(Debug, Clone)]
pub struct PostLassoFit {
    /// The estimate handed to the test: refit coefficients on the lasso
    /// support.
    pub fit: SparseFit,
    pub lasso: SparseFit,
    pub status: RefitStatus,
    pub selection: Option<CvSelection>,
}

/// Lasso selection followed by an unpenalized refit on the selected support.
pub fn post_lasso(data: &Dataset, cfg: &PathConfig) -> Result<PostLassoFit> {
    cfg.validate()?;
    let (lasso, selection) = match cfg.rule {
        LambdaRule::CrossValidation => {
            let sel = select_lambda_cv(data, cfg)?;
            let path = lasso_path(data, &sel.lambdas[..=sel.index])?;
            let fit = path.into_iter().last().expect("path is nonempty");
            (fit, Some(sel))
        }
        LambdaRule::Theory { c } => {
            let lambda = c * ((data.p() as f64).ln() / data.n() as f64).sqrt();
            (lasso_fit(data, lambda, None)?, None)
        }
    };

    let fallback = |lasso: SparseFit, selection| PostLassoFit {
        fit: lasso.clone(),
        lasso,
        status: RefitStatus::LassoFallback,
        selection,
    };
    if lasso.q_hat() >= data.n() {
        log::warn!("post-lasso: support size {} >= n, using lasso coefficients", lasso.q_hat());
        return Ok(fallback(lasso, selection));
    }
    let refit = match mle_refit(data, &lasso.support) {
        Ok(r) => r,
        Err(Error::SingularDesign { .. }) => {
            log::warn!("post-lasso: singular restricted design, using lasso coefficients");
            return Ok(fallback(lasso, selection));
        }
        Err(e) => return Err(e),
    };
    let status = if refit.separated {
        RefitStatus::Separated
    } else {
        RefitStatus::Refit
    };
    let fit = SparseFit {
        beta: refit.beta,
        support: lasso.support.clone(),
        lambda: lasso.lambda,
        n_iter: lasso.n_iter,
        converged: lasso.converged && refit.converged,
    };
    Ok(PostLassoFit {
        fit,
        lasso,
        status,
        selection,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::glm::residuals;
    use crate::Matrix;
    use proptest::prelude::*;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn padded(beta: &[f64], p: usize) -> Vector {
        Vector::from_fn(p, |j, _| beta.get(j).copied().unwrap_or(0.0))
    }

    fn gaussian_data(rng: &mut ChaCha8Rng, n: usize, p: usize, beta: &[f64], noise: f64) -> Dataset {
        let x = Matrix::from_fn(n, p, |_, _| rng.sample(StandardNormal));
        let b = padded(beta, p);
        let mut y = &x * &b;
        for v in y.iter_mut() {
            *v += noise * rng.sample::<f64, _>(StandardNormal);
        }
        Dataset::new(x, y, GlmFamily::GaussianIdentity).unwrap()
    }

    fn logistic_data(rng: &mut ChaCha8Rng, n: usize, p: usize, beta: &[f64]) -> Dataset {
        let x = Matrix::from_fn(n, p, |_, _| rng.sample(StandardNormal));
        let eta = &x * padded(beta, p);
        let y = eta.map(|e| {
            let u: f64 = rng.random();
            if u < GlmFamily::BernoulliLogit.mu(e) { 1.0 } else { 0.0 }
        });
        Dataset::new(x, y, GlmFamily::BernoulliLogit).unwrap()
    }

    /// Max KKT violation for the Gaussian lasso.
    fn kkt_violation(data: &Dataset, fit: &SparseFit) -> f64 {
        let r = residuals(data, &fit.beta).unwrap();
        let n = data.n() as f64;
        (0..data.p())
            .map(|j| {
                let g = data.x().column(j).dot(&r) / n;
                let b = fit.beta[j];
                if b == 0.0 {
                    (g.abs() - fit.lambda).max(0.0)
                } else {
                    (g - fit.lambda * b.signum()).abs()
                }
            })
            .fold(0.0, f64::max)
    }

    #[test]
    fn soft_threshold_examples() {
        assert!((soft_threshold(1.0, 0.3) - 0.7).abs() < 1e-15);
        assert_eq!(soft_threshold(0.2, 2.0), 0.0);
        assert!((soft_threshold(-1.5, 0.5) + 1.0).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn soft_threshold_is_odd(z in -1e3f64..1e3, g in 0f64..1e3) {
            prop_assert_eq!(soft_threshold(-z, g), -soft_threshold(z, g));
        }
    }

    #[test]
    fn lambda_above_max_gives_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let data = gaussian_data(&mut rng, 50, 8, &[1.0, -1.0, 0.0, 0.0, 0.5, 0.0, 0.0, 0.0], 1.0);
        let lmax = lambda_max(&data);
        let fit = lasso_fit(&data, lmax, None).unwrap();
        assert!(fit.support.is_empty());
        let fit = lasso_fit(&data, 1.01 * lmax, None).unwrap();
        assert!(fit.beta.iter().all(|&b| b == 0.0));
        let fit = lasso_fit(&data, 0.9 * lmax, None).unwrap();
        assert!(!fit.support.is_empty());
    }

    #[test]
    fn orthonormal_design_matches_closed_form() {
        // Columns of sqrt(n) * Q with Q orthonormal give X'X/n = I.
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 40;
        let raw = Matrix::from_fn(n, 5, |_, _| rng.sample(StandardNormal));
        let q = raw.qr().q() * (n as f64).sqrt();
        let y = Vector::from_fn(n, |_, _| rng.sample(StandardNormal));
        let data = Dataset::new(q.clone(), y.clone(), GlmFamily::GaussianIdentity).unwrap();
        let lambda = 0.15;
        let fit = lasso_fit(&data, lambda, None).unwrap();
        for j in 0..5 {
            let z = q.column(j).dot(&y) / n as f64;
            assert!((fit.beta[j] - soft_threshold(z, lambda)).abs() < 1e-9);
        }
    }

    #[test]
    fn objective_is_monotone_per_sweep() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let data = gaussian_data(&mut rng, 60, 30, &[2.0, -1.0, 1.0, 0.5], 1.0);
        let mut trace = Vec::new();
        lasso_fit_traced(&data, 0.05, None, Some(&mut trace)).unwrap();
        assert!(trace.len() > 2);
        for w in trace.windows(2) {
            assert!(w[1] <= w[0] + 1e-13, "{} -> {}", w[0], w[1]);
        }

        let data = logistic_data(&mut rng, 80, 20, &[1.5, -1.0, 0.5]);
        let mut trace = Vec::new();
        lasso_fit_traced(&data, 0.01, None, Some(&mut trace)).unwrap();
        for w in trace.windows(2) {
            assert!(w[1] <= w[0] + 1e-13, "{} -> {}", w[0], w[1]);
        }
    }

    #[test]
    fn gaussian_solution_satisfies_kkt() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for (n, p) in [(50, 10), (40, 120)] {
            let data = gaussian_data(&mut rng, n, p, &[1.0, 1.0, -1.0, 0.0, 0.7], 0.5);
            for frac in [0.5, 0.1, 0.02] {
                let fit = lasso_fit(&data, frac * lambda_max(&data), None).unwrap();
                assert!(fit.converged);
                assert!(kkt_violation(&data, &fit) <= 1e-6);
            }
        }
    }

    #[test]
    fn warm_path_equals_cold_fits() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let data = gaussian_data(&mut rng, 60, 40, &[1.0, -0.5, 0.0, 2.0], 1.0);
        let lambdas = lambda_path(lambda_max(&data), 15, 0.01);
        let path = lasso_path(&data, &lambdas).unwrap();
        for fit in &path {
            let cold = lasso_fit(&data, fit.lambda, None).unwrap();
            assert!((&cold.beta - &fit.beta).amax() <= 1e-5);
        }
        let data = logistic_data(&mut rng, 100, 15, &[1.0, -1.0, 0.5]);
        let lambdas = lambda_path(lambda_max(&data), 10, 0.05);
        for fit in lasso_path(&data, &lambdas).unwrap() {
            let cold = lasso_fit(&data, fit.lambda, None).unwrap();
            assert!((&cold.beta - &fit.beta).amax() <= 1e-5);
        }
    }

    #[test]
    fn zero_lambda_requires_p_below_n() {
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        let wide = gaussian_data(&mut rng, 10, 12, &[1.0], 1.0);
        assert!(lasso_fit(&wide, 0.0, None).is_err());
        let tall = gaussian_data(&mut rng, 30, 3, &[1.0, -2.0, 0.5], 0.1);
        let fit = lasso_fit(&tall, 0.0, None).unwrap();
        let ols = mle_refit(&tall, &[0, 1, 2]).unwrap();
        assert!((&fit.beta - &ols.beta).amax() < 1e-5);
        assert!(lasso_fit(&tall, -1.0, None).is_err());
    }

    #[test]
    fn cv_on_pure_noise_selects_sparse_model() {
        // Single draws have a heavy right tail, so check the median.
        let mut sizes: Vec<usize> = (0..15u64)
            .map(|s| {
                let mut rng = ChaCha8Rng::seed_from_u64(100 + s);
                let data = gaussian_data(&mut rng, 200, 50, &[0.0], 1.0);
                let sel = select_lambda_cv(&data, &PathConfig::with_seed(s)).unwrap();
                lasso_fit(&data, sel.lambda, None).unwrap().q_hat()
            })
            .collect();
        sizes.sort_unstable();
        assert!(sizes[7] <= 3, "selection sizes {sizes:?}");
    }

    #[test]
    fn cv_keeps_strong_predictor() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let mut beta = vec![0.0; 30];
        beta[7] = 3.0;
        let data = gaussian_data(&mut rng, 100, 30, &beta, 0.5);
        let sel = select_lambda_cv(&data, &PathConfig::with_seed(2)).unwrap();
        let fit = lasso_fit(&data, sel.lambda, None).unwrap();
        assert!(fit.support.contains(&7));
    }

    #[test]
    fn two_point_path_returns_a_candidate() {
        let mut rng = ChaCha8Rng::seed_from_u64(18);
        let data = gaussian_data(&mut rng, 60, 10, &[1.0, 0.5], 1.0);
        let cfg = PathConfig {
            n_lambda: 2,
            ..PathConfig::with_seed(3)
        };
        let sel = select_lambda_cv(&data, &cfg).unwrap();
        let lmax = lambda_max(&data);
        let candidates = [lmax, lmax * cfg.min_ratio(60, 10)];
        assert!(candidates.contains(&sel.lambda));
    }

    #[test]
    fn cv_is_deterministic_and_validates() {
        let mut rng = ChaCha8Rng::seed_from_u64(19);
        let data = gaussian_data(&mut rng, 60, 10, &[1.0, 0.5], 1.0);
        let a = select_lambda_cv(&data, &PathConfig::with_seed(4)).unwrap();
        let b = select_lambda_cv(&data, &PathConfig::with_seed(4)).unwrap();
        assert_eq!(a.lambda, b.lambda);
        assert_eq!(a.cv_error, b.cv_error);
        let small = data.select_rows(&(0..15).collect::<Vec<_>>());
        assert!(select_lambda_cv(&small, &PathConfig::default()).is_err());
        let bad = PathConfig {
            n_lambda: 1,
            ..PathConfig::default()
        };
        assert!(select_lambda_cv(&data, &bad).is_err());
    }

    #[test]
    fn degenerate_folds_are_skipped() {
        // A single positive label: every fold that holds it out trains on a
        // constant response.
        let mut rng = ChaCha8Rng::seed_from_u64(20);
        let n = 40;
        let x = Matrix::from_fn(n, 3, |_, _| rng.sample(StandardNormal));
        let mut y = Vector::zeros(n);
        y[5] = 1.0;
        let data = Dataset::new(x, y, GlmFamily::BernoulliLogit).unwrap();
        let cfg = PathConfig {
            n_folds: 4,
            ..PathConfig::with_seed(0)
        };
        let sel = select_lambda_cv(&data, &cfg).unwrap();
        assert_eq!(sel.skipped_folds, 1);
    }

    #[test]
    fn post_lasso_recovers_noiseless_model() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let truth = [1.0, -2.0, 0.0, 0.0, 1.5, 0.0, 0.0, 0.0, 0.0, 0.0];
        let data = gaussian_data(&mut rng, 100, 10, &truth, 0.0);
        let out = post_lasso(&data, &PathConfig::with_seed(5)).unwrap();
        assert_eq!(out.status, RefitStatus::Refit);
        for &j in &out.fit.support {
            assert!((out.fit.beta[j] - truth[j]).abs() < 1e-6);
        }
        for j in [0, 1, 4] {
            assert!(out.fit.support.contains(&j));
        }
    }

    #[test]
    fn post_lasso_empty_support() {
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        let data = gaussian_data(&mut rng, 50, 20, &[0.0], 1.0);
        let cfg = PathConfig {
            rule: LambdaRule::Theory { c: 100.0 },
            ..PathConfig::default()
        };
        let out = post_lasso(&data, &cfg).unwrap();
        assert_eq!(out.fit.q_hat(), 0);
        assert!(out.fit.beta.iter().all(|&b| b == 0.0));
    }
}
