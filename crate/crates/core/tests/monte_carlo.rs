//! Replication-level properties of the simulation engine.

use hdgof_core::sim::ReplicationOptions;
use hdgof_core::{
    post_lasso, replication_rng, run_replications, run_replications_with, CovarianceKind, Model,
    PathConfig, ScenarioSpec, TestName,
};

fn spec(model: Model, p: usize, a: f64, cov: CovarianceKind, seed: u64) -> ScenarioSpec {
    ScenarioSpec { model, n: 200, p, a, cov, seed }
}

#[test]
fn identical_inputs_give_identical_cells() {
    let s = spec(Model::H12, 30, 0.3, CovarianceKind::ToeplitzHalf, 11);
    let a = run_replications(&s, 12, 4).unwrap();
    let serial = run_replications_with(&s, &ReplicationOptions { threads: 1, ..ReplicationOptions::new(12, 4) }).unwrap();
    assert_eq!(a, serial);
    assert_eq!(a, run_replications(&s, 12, 4).unwrap());
}

#[test]
fn null_sizes_are_sane() {
    for (model, cov) in [
        (Model::H11, CovarianceKind::Identity),
        (Model::H11, CovarianceKind::ToeplitzHalf),
        (Model::H21, CovarianceKind::Identity),
    ] {
        let summary = run_replications(&spec(model, 100, 0.0, cov, 21), 1000, 10).unwrap();
        for test in [TestName::TAlpha, TestName::TBetahat] {
            let rate = summary.rate(test);
            assert!((0.02..=0.09).contains(&rate), "{model:?} {cov:?} {}: size {rate}", test.label());
        }
    }
}

#[test]
fn power_grows_with_deviation() {
    let rates: Vec<f64> = [0.0, 0.2, 0.4, 0.6]
        .iter()
        .map(|&a| {
            run_replications(&spec(Model::H11, 100, a, CovarianceKind::Identity, 31), 1000, 10)
                .unwrap()
                .rate(TestName::TBetahat)
        })
        .collect();
    let inversions: Vec<f64> = rates.windows(2).map(|w| w[0] - w[1]).filter(|&d| d > 0.0).collect();
    assert!(
        inversions.len() <= 1 && inversions.iter().all(|&d| d <= 0.03),
        "rates {rates:?}"
    );
}

#[test]
fn post_lasso_recovers_null_coefficients() {
    let s = spec(Model::H11, 100, 0.0, CovarianceKind::Identity, 41);
    let truth = s.true_beta();
    let mut close = 0;
    let mut sizes = Vec::new();
    for rep in 0..100 {
        let mut rng = replication_rng(s.seed, rep);
        let data = s.generate(&mut rng).unwrap();
        let fit = post_lasso(&data, &PathConfig::with_seed(rep as u64)).unwrap();
        close += ((&fit.fit.beta - &truth).norm() <= 0.25) as usize;
        sizes.push(fit.fit.q_hat());
    }
    sizes.sort_unstable();
    assert!(close >= 90, "{close}/100 within 0.25; support sizes {sizes:?}");
    assert!((5..=15).contains(&sizes[50]), "median support size {}", sizes[50]);
}
