//! Shared fixtures for the benchmarks.

use jgl_core::{generate, CovarianceSet, GroundTruth, SyntheticSpec};

/// Synthetic two-class problem with `p` variables and `4p` samples per class.
pub fn problem(p: usize, seed: u64) -> (GroundTruth, CovarianceSet) {
    let truth = generate(&SyntheticSpec {
        p,
        n_total: 8 * p,
        seed,
        ..SyntheticSpec::default()
    })
    .expect("default spec is feasible");
    let cov = truth.samples.covariance_set(true).expect("samples are valid");
    (truth, cov)
}
