//! Combination of per-projection p-values.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Boundary p-values are moved this far inside `(0, 1)`.
pub const P_CLAMP: f64 = 1e-15;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CombinedTestResult {
    pub p_values: Vec<f64>,
    pub weights: Vec<f64>,
    pub cauchy_stat: f64,
    pub cauchy_p: f64,
    pub hmp_stat: f64,
    /// Reported equal to `hmp_stat`: for small levels `tau`,
    /// `P(hmp <= tau) ~ tau` under the null.
    pub hmp_p: f64,
}

/// Equal weights `1/d`.
pub fn default_weights(d: usize) -> Vec<f64> {
    vec![1.0 / d as f64; d]
}

fn check_weights(p_values: &[f64], weights: &[f64]) -> Result<()> {
    if p_values.is_empty() {
        return Err(Error::InvalidArgument("no p-values to combine".into()));
    }
    if p_values.len() != weights.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} p-values but {} weights",
            p_values.len(),
            weights.len()
        )));
    }
    if weights.iter().any(|&w| !(w >= 0.0)) {
        return Err(Error::InvalidArgument("weights must be nonnegative".into()));
    }
    let total: f64 = weights.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidArgument(format!("weights sum to {total}, expected 1")));
    }
    if p_values.iter().any(|&p| !(0.0..=1.0).contains(&p)) {
        return Err(Error::InvalidArgument("p-values must lie in [0, 1]".into()));
    }
    Ok(())
}

/// Cauchy combination: `T = sum w_i tan((1/2 - p_i) pi)`, with
/// `p = 1/2 - arctan(T) / pi` from the standard Cauchy tail.
pub fn cauchy_combine(p_values: &[f64], weights: &[f64]) -> Result<(f64, f64)> {
    check_weights(p_values, weights)?;
    let stat: f64 = p_values
        .iter()
        .zip(weights)
        .map(|(&p, &w)| {
            let clamped = p.clamp(P_CLAMP, 1.0 - P_CLAMP);
            if clamped != p {
                log::warn!("cauchy combination: p-value {p} clamped to {clamped}");
            }
            w * ((0.5 - clamped) * PI).tan()
        })
        .sum();
    Ok((stat, cauchy_upper_tail(stat)))
}

/// `P(C > t)` for a standard Cauchy variable.
pub fn cauchy_upper_tail(t: f64) -> f64 {
    if t > 1.0 {
        // Avoids cancellation in 1/2 - arctan(t)/pi for large t.
        (1.0 / t).atan() / PI
    } else {
        0.5 - t.atan() / PI
    }
}

/// Weighted harmonic mean `(sum w_i / p_i)^{-1}`; the p-value is the
/// statistic itself.
pub fn hmp_combine(p_values: &[f64], weights: &[f64]) -> Result<(f64, f64)> {
    check_weights(p_values, weights)?;
    let inv: f64 = p_values
        .iter()
        .zip(weights)
        .map(|(&p, &w)| {
            let clamped = p.max(P_CLAMP);
            if clamped != p {
                log::warn!("harmonic mean: p-value {p} clamped to {clamped}");
            }
            w / clamped
        })
        .sum();
    let stat = 1.0 / inv;
    Ok((stat, stat))
}

/// Both combiners with the given weights (equal weights when `None`).
pub fn combine(p_values: &[f64], weights: Option<&[f64]>) -> Result<CombinedTestResult> {
    let weights = weights
        .map(<[f64]>::to_vec)
        .unwrap_or_else(|| default_weights(p_values.len()));
    let (cauchy_stat, cauchy_p) = cauchy_combine(p_values, &weights)?;
    let (hmp_stat, hmp_p) = hmp_combine(p_values, &weights)?;
    Ok(CombinedTestResult {
        p_values: p_values.to_vec(),
        weights,
        cauchy_stat,
        cauchy_p,
        hmp_stat,
        hmp_p,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn cauchy_examples() {
        let (s, p) = cauchy_combine(&[0.5, 0.5, 0.5], &default_weights(3)).unwrap();
        assert!(s.abs() < 1e-15);
        assert!((p - 0.5).abs() < 1e-15);

        let (s, p) = cauchy_combine(&[0.01, 0.5], &default_weights(2)).unwrap();
        let oracle = 0.5 * (0.49 * PI).tan();
        assert!((s - oracle).abs() < 1e-12);
        assert!((s - 15.9103).abs() < 1e-4);
        assert!((p - 0.0200).abs() < 1e-4);

        for &q in &[1e-6, 0.03, 0.4, 0.77, 0.999] {
            let (_, p) = cauchy_combine(&[q], &[1.0]).unwrap();
            assert!((p - q).abs() < 1e-12, "{q} -> {p}");
        }
    }

    #[test]
    fn boundary_p_values_are_clamped() {
        let (s, p) = cauchy_combine(&[0.0, 0.5], &default_weights(2)).unwrap();
        assert!(s.is_finite() && s > 0.0);
        assert!(p < 1e-10);
        let (s, _) = cauchy_combine(&[1.0], &[1.0]).unwrap();
        assert!(s.is_finite() && s < 0.0);
        let (h, _) = hmp_combine(&[0.0, 0.5], &default_weights(2)).unwrap();
        assert!(h > 0.0 && h < 1e-14);
    }

    #[test]
    fn hmp_examples() {
        let (h, p) = hmp_combine(&[0.3; 4], &default_weights(4)).unwrap();
        assert!((h - 0.3).abs() < 1e-15);
        assert_eq!(h, p);
        let (h, _) = hmp_combine(&[0.01, 0.1], &default_weights(2)).unwrap();
        assert!((h - 1.0 / 55.0).abs() < 1e-15);
        assert!((h - 0.018182).abs() < 1e-6);
        let (h, _) = hmp_combine(&[0.42], &[1.0]).unwrap();
        assert!((h - 0.42).abs() < 1e-15);
    }

    #[test]
    fn weights() {
        assert_eq!(default_weights(4), vec![0.25; 4]);
        assert_eq!(default_weights(1), vec![1.0]);
        for d in [3, 7, 10_000] {
            let s: f64 = default_weights(d).iter().sum();
            assert!((s - 1.0).abs() < 1e-12);
        }
        assert!(cauchy_combine(&[0.5, 0.5], &[0.7, 0.7]).is_err());
        assert!(cauchy_combine(&[0.5, 0.5], &[1.0]).is_err());
        assert!(hmp_combine(&[], &[]).is_err());
        assert!(hmp_combine(&[1.5], &[1.0]).is_err());
    }

    #[test]
    fn combined_result_fields() {
        let r = combine(&[0.2, 0.05, 0.8], None).unwrap();
        assert_eq!(r.weights.len(), 3);
        assert!((r.cauchy_p - (0.5 - r.cauchy_stat.atan() / PI)).abs() < 1e-12);
        assert!(r.hmp_stat >= 0.05 && r.hmp_stat <= 0.8);
    }

    proptest! {
        #[test]
        fn hmp_lies_between_extremes(ps in proptest::collection::vec(1e-6f64..1.0, 1..20)) {
            let (h, _) = hmp_combine(&ps, &default_weights(ps.len())).unwrap();
            let lo = ps.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = ps.iter().cloned().fold(0.0, f64::max);
            prop_assert!(h >= lo * (1.0 - 1e-12) && h <= hi * (1.0 + 1e-12));
        }

        #[test]
        fn decreasing_one_p_value_never_weakens_evidence(
            ps in proptest::collection::vec(1e-4f64..0.9999, 2..12),
            k in 0usize..12,
            shrink in 0.0f64..1.0,
        ) {
            let k = k % ps.len();
            let w = default_weights(ps.len());
            let mut smaller = ps.clone();
            smaller[k] *= shrink.max(1e-3);
            let (_, c0) = cauchy_combine(&ps, &w).unwrap();
            let (_, c1) = cauchy_combine(&smaller, &w).unwrap();
            let (h0, _) = hmp_combine(&ps, &w).unwrap();
            let (h1, _) = hmp_combine(&smaller, &w).unwrap();
            prop_assert!(c1 <= c0 + 1e-15);
            prop_assert!(h1 <= h0 + 1e-15);
        }
    }
}
