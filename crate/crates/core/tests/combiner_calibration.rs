//! Null calibration of the combiners under independent uniform p-values.

use std::f64::consts::PI;

use hdgof_core::{combine, default_weights, cauchy_combine};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const DRAWS: usize = 100_000;

fn uniform_vectors(d: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..DRAWS).map(|_| (0..d).map(|_| rng.random::<f64>()).collect()).collect()
}

#[test]
fn cauchy_statistic_has_cauchy_tails() {
    let w = default_weights(11);
    let stats: Vec<f64> = uniform_vectors(11, 1).iter().map(|ps| cauchy_combine(ps, &w).unwrap().0).collect();
    for tau in [0.01, 0.05] {
        let cut = ((0.5 - tau) * PI).tan();
        let rate = stats.iter().filter(|&&s| s > cut).count() as f64 / DRAWS as f64;
        let band = 3.0 * (tau * (1.0 - tau) / DRAWS as f64).sqrt();
        assert!((rate - tau).abs() <= band, "tau {tau}: rate {rate}");
    }
}

// At tau = 0.05 the raw harmonic mean is slightly anti-conservative
// (about 0.064 for d = 11); that bound is checked in the acceptance suite.
#[test]
fn harmonic_mean_is_nearly_calibrated_at_small_levels() {
    let vectors = uniform_vectors(11, 2);
    let rate = vectors.iter().filter(|ps| combine(ps, None).unwrap().hmp_p <= 0.01).count() as f64 / DRAWS as f64;
    assert!(rate <= 0.0125, "rate {rate}");
}
