//! Data generators for the two simulation studies and the replication
//! engine producing empirical size / power cells.
//!
//! Study 1 (Gaussian linear null, `beta0 = (1,1,1,1,1,0,..)/sqrt(5)`):
//!
//! | model | `Y = beta0'X + a * g(X) + eps` |
//! |-------|--------------------------------|
//! | H11   | `g = exp(-(beta0'X)^2)`        |
//! | H12   | `g = cos(0.6 pi beta0'X)`      |
//! | H13   | `g = (beta1'X)^2`              |
//! | H14   | `g = exp(beta1'X)`             |
//!
//! with `beta1` the normalized indicator of the first
//! `p1 = min(p, floor(2 n^{1/3}))` coordinates.
//!
//! Study 2 (logistic null, `beta0 = (1,1,1,1,1,0,..)`):
//! `Y | X ~ Bernoulli(mu(beta0'X + a * g(X)))` with `g` one of
//! `(beta0'X)^2`, `exp(beta0'X)`, `2 X_1^2`, `2 X_1 X_2` (H21..H24).
//!
//! Replication `r` draws everything from `ChaCha8Rng::seed_from_u64(seed)`
//! switched to stream `r`, so serial and parallel runs agree exactly.

use nalgebra::Cholesky;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::battery::run_battery;
use crate::error::{Error, Result};
use crate::glm::{Dataset, GlmFamily};
use crate::penalized::{post_lasso, PathConfig};
use crate::{Matrix, Vector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CovarianceKind {
    Identity,
    /// `Sigma_ij = (1/2)^{|i-j|}`.
    ToeplitzHalf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CovarianceSpec {
    pub kind: CovarianceKind,
    pub p: usize,
}

impl CovarianceSpec {
    pub fn new(kind: CovarianceKind, p: usize) -> Self {
        Self { kind, p }
    }

    pub fn matrix(&self) -> Matrix {
        match self.kind {
            CovarianceKind::Identity => Matrix::identity(self.p, self.p),
            CovarianceKind::ToeplitzHalf => Matrix::from_fn(self.p, self.p, |i, j| {
                0.5f64.powi(i.abs_diff(j) as i32)
            }),
        }
    }

    /// Lower Cholesky factor, `None` for the identity.
    fn factor(&self) -> Result<Option<Matrix>> {
        match self.kind {
            CovarianceKind::Identity => Ok(None),
            CovarianceKind::ToeplitzHalf => Cholesky::new(self.matrix())
                .map(|c| Some(c.l()))
                .ok_or_else(|| Error::InvalidScenario("covariance is not positive definite".into())),
        }
    }
}

/// Draws rows iid `N(0, Sigma)`, reusing one Cholesky factor.
struct MvnSampler {
    p: usize,
    factor_t: Option<Matrix>,
}

impl MvnSampler {
    fn new(cov: &CovarianceSpec) -> Result<Self> {
        Ok(Self {
            p: cov.p,
            factor_t: cov.factor()?.map(|l| l.transpose()),
        })
    }

    fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Matrix {
        let mut z = Matrix::zeros(n, self.p);
        for i in 0..n {
            for j in 0..self.p {
                z[(i, j)] = rng.sample(StandardNormal);
            }
        }
        match &self.factor_t {
            None => z,
            Some(lt) => z * lt,
        }
    }
}

/// `n` rows iid `N(0, Sigma)` via the Cholesky factor of `Sigma`.
pub fn sample_mvn<R: Rng + ?Sized>(n: usize, cov: &CovarianceSpec, rng: &mut R) -> Result<Matrix> {
    if cov.p == 0 {
        return Err(Error::InvalidScenario("p must be >= 1".into()));
    }
    Ok(MvnSampler::new(cov)?.sample(n, rng))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Model {
    H11,
    H12,
    H13,
    H14,
    H21,
    H22,
    H23,
    H24,
}

impl Model {
    pub const ALL: [Model; 8] = [
        Model::H11,
        Model::H12,
        Model::H13,
        Model::H14,
        Model::H21,
        Model::H22,
        Model::H23,
        Model::H24,
    ];

    pub fn family(self) -> GlmFamily {
        match self {
            Model::H11 | Model::H12 | Model::H13 | Model::H14 => GlmFamily::GaussianIdentity,
            _ => GlmFamily::BernoulliLogit,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Model::H11 => "H11",
            Model::H12 => "H12",
            Model::H13 => "H13",
            Model::H14 => "H14",
            Model::H21 => "H21",
            Model::H22 => "H22",
            Model::H23 => "H23",
            Model::H24 => "H24",
        }
    }
}

impl std::str::FromStr for Model {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Model::ALL
            .into_iter()
            .find(|m| m.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::InvalidScenario(format!("unknown model `{s}`")))
    }
}

/// `min(p, floor(2 n^{1/3}))`.
pub fn p1(n: usize, p: usize) -> usize {
    p.min((2.0 * (n as f64).cbrt()).floor() as usize)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub model: Model,
    pub n: usize,
    pub p: usize,
    /// Departure magnitude; `a = 0` is the null.
    pub a: f64,
    pub cov: CovarianceKind,
    pub seed: u64,
}

impl ScenarioSpec {
    pub fn covariance(&self) -> CovarianceSpec {
        CovarianceSpec::new(self.cov, self.p)
    }

    fn validate(&self) -> Result<()> {
        if self.p < 5 {
            return Err(Error::InvalidScenario(format!("need p >= 5, got {}", self.p)));
        }
        if self.n < 2 {
            return Err(Error::InvalidScenario(format!("need n >= 2, got {}", self.n)));
        }
        if !self.a.is_finite() {
            return Err(Error::InvalidScenario("departure a must be finite".into()));
        }
        Ok(())
    }

    /// Null coefficient vector `beta0`.
    pub fn true_beta(&self) -> Vector {
        let scale = match self.model.family() {
            GlmFamily::GaussianIdentity => 1.0 / 5f64.sqrt(),
            GlmFamily::BernoulliLogit => 1.0,
        };
        Vector::from_fn(self.p, |j, _| if j < 5 { scale } else { 0.0 })
    }

    /// Conditional mean (Study 1) or linear predictor (Study 2) at `x`.
    pub fn regression_function(&self, x: &[f64]) -> f64 {
        let b0x: f64 = x[..5].iter().sum::<f64>()
            * match self.model.family() {
                GlmFamily::GaussianIdentity => 1.0 / 5f64.sqrt(),
                GlmFamily::BernoulliLogit => 1.0,
            };
        let b1x = || {
            let k = p1(self.n, self.p);
            x[..k].iter().sum::<f64>() / (k as f64).sqrt()
        };
        let g = match self.model {
            Model::H11 => (-b0x * b0x).exp(),
            Model::H12 => (0.6 * std::f64::consts::PI * b0x).cos(),
            Model::H13 => b1x().powi(2),
            Model::H14 => b1x().exp(),
            Model::H21 => b0x * b0x,
            Model::H22 => b0x.exp(),
            Model::H23 => 2.0 * x[0] * x[0],
            Model::H24 => 2.0 * x[0] * x[1],
        };
        b0x + self.a * g
    }

    fn generate_with<R: Rng + ?Sized>(&self, sampler: &MvnSampler, rng: &mut R) -> Result<Dataset> {
        let x = sampler.sample(self.n, rng);
        let mut row = vec![0.0; self.p];
        let family = self.model.family();
        let mut y = Vector::zeros(self.n);
        for i in 0..self.n {
            for (j, v) in row.iter_mut().enumerate() {
                *v = x[(i, j)];
            }
            y[i] = draw_response(family, self.regression_function(&row), rng);
        }
        Dataset::new(x, y, family)
    }

    /// One dataset drawn from this scenario.
    pub fn generate<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Dataset> {
        self.validate()?;
        self.generate_with(&MvnSampler::new(&self.covariance())?, rng)
    }
}

/// Gaussian noise around `m`, or a Bernoulli draw with success probability
/// `mu(m)`.
fn draw_response<R: Rng + ?Sized>(family: GlmFamily, m: f64, rng: &mut R) -> f64 {
    match family {
        GlmFamily::GaussianIdentity => m + rng.sample::<f64, _>(StandardNormal),
        GlmFamily::BernoulliLogit => {
            if rng.random::<f64>() < family.mu(m) {
                1.0
            } else {
                0.0
            }
        }
    }
}

/// Study 1 (Gaussian) data; rejects Study 2 models.
pub fn generate_study1<R: Rng + ?Sized>(spec: &ScenarioSpec, rng: &mut R) -> Result<Dataset> {
    if spec.model.family() != GlmFamily::GaussianIdentity {
        return Err(Error::InvalidScenario(format!("{} is not a Study 1 model", spec.model.name())));
    }
    spec.generate(rng)
}

/// Study 2 (logistic) data; rejects Study 1 models.
pub fn generate_study2<R: Rng + ?Sized>(spec: &ScenarioSpec, rng: &mut R) -> Result<Dataset> {
    if spec.model.family() != GlmFamily::BernoulliLogit {
        return Err(Error::InvalidScenario(format!("{} is not a Study 2 model", spec.model.name())));
    }
    spec.generate(rng)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TestName {
    #[serde(rename = "T_alpha")]
    TAlpha,
    #[serde(rename = "T_betahat")]
    TBetahat,
    #[serde(rename = "T_cauchy")]
    TCauchy,
    #[serde(rename = "T_hmp")]
    THmp,
}

impl TestName {
    /// Table column order.
    pub const ALL: [TestName; 4] = [
        TestName::TAlpha,
        TestName::TBetahat,
        TestName::TCauchy,
        TestName::THmp,
    ];

    pub fn label(self) -> &'static str {
        match self {
            TestName::TAlpha => "T_alpha",
            TestName::TBetahat => "T_betahat",
            TestName::TCauchy => "T_cauchy",
            TestName::THmp => "T_hmp",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerTableCell {
    pub scenario: ScenarioSpec,
    pub test_name: TestName,
    pub rejection_rate: f64,
    /// Replications that completed (failed ones are excluded).
    pub n_reps: usize,
    pub level: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplicationSummary {
    /// One cell per test, in [`TestName::ALL`] order.
    pub cells: Vec<PowerTableCell>,
    /// Rejection counts behind each cell.
    pub rejections: [usize; 4],
    pub n_failed: usize,
}

impl ReplicationSummary {
    pub fn rate(&self, test: TestName) -> f64 {
        self.cells
            .iter()
            .find(|c| c.test_name == test)
            .map(|c| c.rejection_rate)
            .unwrap_or(f64::NAN)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplicationOptions {
    pub n_reps: usize,
    pub d_random: usize,
    pub level: f64,
    /// Template for the lasso path; the CV seed is drawn per replication.
    pub path: PathConfig,
    /// Worker threads, 0 = rayon default.
    pub threads: usize,
}

impl ReplicationOptions {
    pub fn new(n_reps: usize, d_random: usize) -> Self {
        Self {
            n_reps,
            d_random,
            level: 0.05,
            path: PathConfig::default(),
            threads: 0,
        }
    }
}

/// Stream for replication `rep` of a run seeded with `seed`.
pub fn replication_rng(seed: u64, rep: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(rep as u64);
    rng
}

/// Runs `n_reps` replications with default options and 5% level.
pub fn run_replications(spec: &ScenarioSpec, n_reps: usize, d_random: usize) -> Result<ReplicationSummary> {
    run_replications_with(spec, &ReplicationOptions::new(n_reps, d_random))
}

fn one_replication(
    spec: &ScenarioSpec,
    sampler: &MvnSampler,
    opts: &ReplicationOptions,
    rep: usize,
) -> Result<[bool; 4]> {
    let mut rng = replication_rng(spec.seed, rep);
    let data = spec.generate_with(sampler, &mut rng)?;
    let path = PathConfig {
        seed: rng.next_u64(),
        ..opts.path.clone()
    };
    let fit = post_lasso(&data, &path)?;
    let out = run_battery(&data, &fit.fit, opts.d_random, &mut rng)?;
    let level = opts.level;
    Ok([
        out.t_alpha.p_value <= level,
        out.t_betahat.p_value <= level,
        out.combined.cauchy_p <= level,
        out.combined.hmp_p <= level,
    ])
}

pub fn run_replications_with(spec: &ScenarioSpec, opts: &ReplicationOptions) -> Result<ReplicationSummary> {
    spec.validate()?;
    if opts.n_reps == 0 {
        return Err(Error::InvalidArgument("n_reps must be >= 1".into()));
    }
    if opts.d_random == 0 {
        return Err(Error::InvalidArgument("d_random must be >= 1".into()));
    }
    if !(opts.level > 0.0 && opts.level < 1.0) {
        return Err(Error::InvalidArgument("level must lie in (0, 1)".into()));
    }
    let sampler = MvnSampler::new(&spec.covariance())?;
    let work = || -> Vec<Result<[bool; 4]>> {
        (0..opts.n_reps)
            .into_par_iter()
            .map(|rep| one_replication(spec, &sampler, opts, rep))
            .collect()
    };
    let outcomes = if opts.threads == 0 {
        work()
    } else {
        rayon::ThreadPoolBuilder::new()
            .num_threads(opts.threads)
            .build()
            .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?
            .install(work)
    };

    let mut rejections = [0usize; 4];
    let mut completed = 0;
    let mut n_failed = 0;
    for (rep, outcome) in outcomes.into_iter().enumerate() {
        match outcome {
            Ok(flags) => {
                completed += 1;
                for (count, flag) in rejections.iter_mut().zip(flags) {
                    *count += flag as usize;
                }
            }
            Err(e) => {
                log::warn!("replication {rep} failed: {e}");
                n_failed += 1;
            }
        }
    }
    let cells = TestName::ALL
        .iter()
        .zip(rejections)
        .map(|(&test_name, count)| PowerTableCell {
            scenario: *spec,
            test_name,
            rejection_rate: if completed == 0 {
                f64::NAN
            } else {
                count as f64 / completed as f64
            },
            n_reps: completed,
            level: opts.level,
        })
        .collect();
    Ok(ReplicationSummary {
        cells,
        rejections,
        n_failed,
    })
}
