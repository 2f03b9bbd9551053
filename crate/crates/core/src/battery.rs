//! The projection battery applied to one fitted dataset.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::combine::{combine, CombinedTestResult};
use crate::error::{Error, Result};
use crate::glm::{residuals, Dataset};
use crate::penalized::SparseFit;
use crate::projection::{
    bandwidth_with_floor, estimated_projection, projected_statistic, result_from,
    sample_projection, Projection, ProjectionOrigin, ProjectionTestResult,
};
use crate::Vector;

/// Outcome of the standalone random-projection test, the estimated-direction
/// test and the `1 + d_random` combined battery.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatteryResult {
    /// Standalone test on its own random direction.
    pub t_alpha: ProjectionTestResult,
    /// Test on `beta_hat / |beta_hat|`; a random direction when the estimate
    /// is zero (see `betahat_substituted`).
    pub t_betahat: ProjectionTestResult,
    /// Every test feeding the combiners, estimated direction first.
    pub battery: Vec<ProjectionTestResult>,
    pub combined: CombinedTestResult,
    pub betahat_substituted: bool,
}

/// Runs the battery. Random directions are drawn from `rng` in a fixed
/// order: the standalone direction, then the `d_random` battery directions
/// (plus one extra first if the estimated direction is undefined).
pub fn run_battery<R: Rng + ?Sized>(
    data: &Dataset,
    fit: &SparseFit,
    d_random: usize,
    rng: &mut R,
) -> Result<BatteryResult> {
    run_battery_with_floor(data, fit, d_random, 1, rng)
}

pub fn run_battery_with_floor<R: Rng + ?Sized>(
    data: &Dataset,
    fit: &SparseFit,
    d_random: usize,
    q_floor: usize,
    rng: &mut R,
) -> Result<BatteryResult> {
    let p = data.p();
    let resid = residuals(data, &fit.beta)?;
    let q_hat = fit.q_hat();
    let h = bandwidth_with_floor(data.n(), q_hat, q_floor);

    let run = |proj: Projection| -> Result<ProjectionTestResult> {
        let proj_x = data.x() * Vector::from_column_slice(&proj.alpha);
        let value = projected_statistic(resid.as_slice(), proj_x.as_slice(), h)?;
        Ok(result_from(proj, h, q_hat, value))
    };

    let t_alpha = run(sample_projection(p, rng)?)?;
    let (betahat_proj, betahat_substituted) = match estimated_projection(&fit.beta) {
        Ok(proj) => (proj, false),
        Err(Error::DegenerateEstimate) => {
            log::warn!("estimated coefficients are zero; substituting a random projection");
            (sample_projection(p, rng)?, true)
        }
        Err(e) => return Err(e),
    };
    let t_betahat = run(betahat_proj)?;

    let mut battery = Vec::with_capacity(1 + d_random);
    battery.push(t_betahat.clone());
    for _ in 0..d_random {
        battery.push(run(sample_projection(p, rng)?)?);
    }
    let p_values: Vec<f64> = battery.iter().map(|r| r.p_value).collect();
    let combined = combine(&p_values, None)?;

    debug_assert!(
        betahat_substituted || battery[0].projection.origin == ProjectionOrigin::EstimatedBeta
    );
    Ok(BatteryResult {
        t_alpha,
        t_betahat,
        battery,
        combined,
        betahat_substituted,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::glm::GlmFamily;
    use crate::projection::run_projection_test;
    use crate::Matrix;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn setup() -> (Dataset, SparseFit) {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let x = Matrix::from_fn(80, 6, |_, _| rng.sample(StandardNormal));
        let y = Vector::from_fn(80, |i, _| x[(i, 0)] - x[(i, 2)] + rng.sample::<f64, _>(StandardNormal));
        let data = Dataset::new(x, y, GlmFamily::GaussianIdentity).unwrap();
        let mut beta = Vector::zeros(6);
        beta[0] = 1.0;
        beta[2] = -1.0;
        let fit = SparseFit { beta, support: vec![0, 2], lambda: 0.1, n_iter: 1, converged: true };
        (data, fit)
    }

    #[test]
    fn battery_shape_and_consistency() {
        let (data, fit) = setup();
        let out = run_battery(&data, &fit, 10, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert_eq!(out.battery.len(), 11);
        assert_eq!(out.combined.p_values.len(), 11);
        assert!(!out.betahat_substituted);
        assert_eq!(out.t_betahat.projection.origin, ProjectionOrigin::EstimatedBeta);
        let direct = run_projection_test(&data, &fit, &out.t_betahat.projection).unwrap();
        assert_eq!(direct, out.t_betahat);
        for r in &out.battery {
            assert!(r.p_value > 0.0 && r.p_value <= 1.0);
        }
        let again = run_battery(&data, &fit, 10, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert_eq!(out, again);
    }

    #[test]
    fn zero_estimate_is_substituted() {
        let (data, mut fit) = setup();
        fit.beta = Vector::zeros(6);
        fit.support.clear();
        let out = run_battery(&data, &fit, 0, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        assert!(out.betahat_substituted);
        assert_eq!(out.t_betahat.projection.origin, ProjectionOrigin::RandomSphere);
        assert_eq!(out.battery.len(), 1);
        assert!((out.combined.cauchy_p - out.t_betahat.p_value).abs() < 1e-12);
    }
}
