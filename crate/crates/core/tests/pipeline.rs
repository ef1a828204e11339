use jgl_core::io::{load_ground_truth, read_precision_set, save_ground_truth, write_precision_set};
use jgl_core::select::grid_product;
use jgl_core::{
    cross_validate, fit, fit_ista, generate, mse, roc_counts, Algorithm, CovarianceSet, CvPlan,
    PenaltyKind, PenaltySpec, PrecisionSet, SolverOptions, Status, SyntheticSpec,
};

fn small_truth(seed: u64) -> jgl_core::GroundTruth {
    generate(&SyntheticSpec {
        p: 12,
        n_total: 300,
        edge_density: 0.2,
        seed,
        ..SyntheticSpec::default()
    })
    .unwrap()
}

fn tight() -> SolverOptions {
    SolverOptions {
        tolerance: 1e-12,
        max_iterations: 100_000,
        ..SolverOptions::default()
    }
}

fn max_diff(a: &PrecisionSet, b: &PrecisionSet) -> f64 {
    a.blocks()
        .iter()
        .zip(b.blocks())
        .map(|(x, y)| x.sub(y).max_abs())
        .fold(0.0, f64::max)
}

#[test]
fn ground_truth_survives_disk() {
    let truth = small_truth(2);
    let dir = tempfile::tempdir().unwrap();
    let manifest = save_ground_truth(dir.path(), &truth).unwrap();
    assert_eq!(manifest.counts, truth.samples.counts());
    let back = load_ground_truth(dir.path()).unwrap();
    assert_eq!(back.spec, truth.spec);
    assert!(max_diff(&back.theta, &truth.theta) == 0.0);
    for (a, b) in back.samples.classes().iter().zip(truth.samples.classes()) {
        assert_eq!(a, b);
    }
}

#[test]
fn estimate_round_trips_through_csv() {
    let truth = small_truth(3);
    let cov = truth.samples.covariance_set(true).unwrap();
    let est = fit_ista(&cov, &PenaltySpec::fused(5.0, 2.0).unwrap(), &SolverOptions::default(), None)
        .unwrap()
        .estimate;
    let dir = tempfile::tempdir().unwrap();
    write_precision_set(dir.path(), &est).unwrap();
    let back = read_precision_set(dir.path(), 2).unwrap();
    assert_eq!(max_diff(&est, &back), 0.0);
}

#[test]
fn fit_is_equivariant_under_class_relabeling() {
    let truth = small_truth(4);
    let cov = truth.samples.covariance_set(true).unwrap();
    let swapped = CovarianceSet::new(
        cov.covariances().iter().rev().cloned().collect(),
        cov.counts().iter().rev().copied().collect(),
    )
    .unwrap();
    for kind in [PenaltyKind::Fused, PenaltyKind::Group] {
        let spec = PenaltySpec::new(4.0, 3.0, kind).unwrap();
        let a = fit_ista(&cov, &spec, &tight(), None).unwrap().estimate;
        let b = fit_ista(&swapped, &spec, &tight(), None).unwrap().estimate;
        let b = PrecisionSet::new(b.into_blocks().into_iter().rev().collect()).unwrap();
        assert!(max_diff(&a, &b) < 1e-8, "{kind:?}");
    }
}

#[test]
fn strong_fusion_equalizes_classes() {
    let truth = small_truth(5);
    let cov = truth.samples.covariance_set(true).unwrap();
    let est = fit_ista(&cov, &PenaltySpec::fused(3.0, 1e4).unwrap(), &tight(), None)
        .unwrap()
        .estimate;
    let b = est.blocks();
    assert!(b[0].sub(&b[1]).max_abs() < 1e-8);
}

#[test]
fn huge_group_penalty_leaves_inverse_variances() {
    let truth = small_truth(6);
    let cov = truth.samples.covariance_set(true).unwrap();
    let res = fit_ista(&cov, &PenaltySpec::group(1e6, 1e6).unwrap(), &tight(), None).unwrap();
    for (theta, s) in res.estimate.blocks().iter().zip(cov.covariances()) {
        assert_eq!(theta.upper_nonzeros(0.0), 0);
        for (t, v) in theta.diagonal().iter().zip(s.diagonal()) {
            assert!((t - 1.0 / v).abs() < 1e-9 * t);
        }
    }
}

#[test]
fn ista_and_mista_reach_the_same_optimum() {
    let truth = small_truth(7);
    let cov = truth.samples.covariance_set(true).unwrap();
    let spec = PenaltySpec::fused(6.0, 2.0).unwrap();
    let opts = SolverOptions {
        tolerance: 1e-10,
        max_iterations: 500_000,
        ..SolverOptions::default()
    };
    let a = fit(Algorithm::Ista, &cov, &spec, &opts, None).unwrap();
    let b = fit(Algorithm::Mista, &cov, &spec, &opts, None).unwrap();
    assert_eq!(a.report.status, Status::Converged);
    assert_eq!(b.report.status, Status::Converged);
    let rel = a.estimate.relative_distance(&b.estimate);
    assert!(rel < 1e-6, "relative distance {rel}");
    let fa = a.report.final_objective();
    assert!((fa - b.report.final_objective()).abs() <= 1e-8 * fa.abs());
}

#[test]
fn moderate_penalty_recovers_structure() {
    let truth = small_truth(8);
    let cov = truth.samples.covariance_set(true).unwrap();
    let est = fit_ista(&cov, &PenaltySpec::fused(8.0, 4.0).unwrap(), &SolverOptions::default(), None)
        .unwrap()
        .estimate;
    let c = roc_counts(&truth.theta, &est, 0.0).unwrap();
    let tpr = c.tp as f64 / (c.tp + c.fn_) as f64;
    let fpr = c.fp as f64 / (c.fp + c.tn) as f64;
    assert!(tpr > fpr, "tpr {tpr} fpr {fpr}");
    let empty = PrecisionSet::identity(2, 12);
    assert!(mse(&truth.theta, &est).unwrap() < mse(&truth.theta, &empty).unwrap());
}

#[test]
fn cross_validation_is_reproducible() {
    let truth = small_truth(9);
    let plan = CvPlan {
        folds: 3,
        grid: grid_product(&[2.0, 8.0, 32.0], &[1.0, 4.0]),
        seed: 11,
        kind: PenaltyKind::Fused,
        algorithm: Algorithm::Ista,
        center: true,
    };
    let opts = SolverOptions::default();
    let a = cross_validate(&truth.samples, &plan, &opts).unwrap();
    let b = cross_validate(&truth.samples, &plan, &opts).unwrap();
    assert_eq!(a.scores, b.scores);
    assert_eq!(a.best, b.best);
    assert_eq!(a.best_fits.len(), 3);
    assert_eq!(a.scores.len(), 6);
    let min = a.scores.iter().map(|s| s.score).fold(f64::INFINITY, f64::min);
    assert_eq!(a.scores[a.best_index].score, min);
    assert_eq!(a.best, plan.grid[a.best_index]);
}
