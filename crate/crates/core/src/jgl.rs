//! Joint graphical lasso fits: ISTA with backtracking, modified ISTA with
//! self-concordant step sizes, and the single-class G-ISTA with its duality
//! gap. Also the a-priori bounds on the optimum and on modified-ISTA
//! iterates.

use serde::{Deserialize, Serialize};

use crate::error::{JglError, Result};
use crate::matrix::{norms, CholeskyFactor, CovarianceSet, SymMatrix};
use crate::prox::PenaltySpec;
use crate::solver::{
    bb_step, relative_error, sc_step_weighted, Point, PrecisionSet, Problem, Regularizer,
    SolverOptions, SolverReport, Status, StepInit, StopRule,
};

/// Which JGL algorithm to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Ista,
    Mista,
}

impl std::str::FromStr for Algorithm {
    type Err = JglError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ista" => Ok(Algorithm::Ista),
            "mista" => Ok(Algorithm::Mista),
            other => Err(JglError::InvalidParameter(format!(
                "unknown algorithm '{other}' (expected ista or mista)"
            ))),
        }
    }
}

/// Bounds on the optimum and on the iterates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundDiagnostics {
    /// `sqrt(K l1^2 + 2 K l1 l2 + l2^2)`
    pub lambda_c: f64,
    /// `n_k / (p lambda_c + n_k ||S_k||_2)` per class.
    pub lower: Vec<f64>,
    /// `N p / l1 + sum_k sum_i 1 / s_ii^(k)`.
    pub upper: f64,
    /// Iterate bounds `(m, M)` computed with the returned estimate standing
    /// in for the optimum.
    pub iterates: Option<IterateBounds>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterateBounds {
    pub m: f64,
    /// `ln m`; finite even when `m` underflows.
    pub log_m: f64,
    #[serde(rename = "M")]
    pub big_m: f64,
    /// `F(Theta_0)`.
    pub c1: f64,
    pub n_max: usize,
}

#[derive(Debug, Clone)]
pub struct FitResult {
    pub estimate: PrecisionSet,
    pub report: SolverReport,
    pub bounds: BoundDiagnostics,
}

/// `Theta_0^(k) = (diag(S^(k)) + lambda I)^-1`.
pub fn default_start(cov: &CovarianceSet, lambda: f64) -> PrecisionSet {
    let blocks = cov
        .covariances()
        .iter()
        .map(|s| {
            let d: Vec<f64> = s.diagonal().iter().map(|v| 1.0 / (v + lambda)).collect();
            SymMatrix::from_diagonal(&d)
        })
        .collect();
    PrecisionSet::new(blocks).expect("covariance set is non-empty")
}

fn bounds_for(cov: &CovarianceSet, lambda1: f64, lambda2: f64) -> Result<BoundDiagnostics> {
    cov.require_positive_diagonal()?;
    let k = cov.classes() as f64;
    let p = cov.dim() as f64;
    let lambda_c = (k * lambda1 * lambda1 + 2.0 * k * lambda1 * lambda2 + lambda2 * lambda2).sqrt();
    let lower = cov
        .covariances()
        .iter()
        .zip(cov.counts())
        .map(|(s, &n)| {
            let n = n as f64;
            n / (p * lambda_c + n * norms(s).spectral)
        })
        .collect();
    let inv_diag: f64 = cov
        .covariances()
        .iter()
        .flat_map(|s| s.diagonal())
        .map(|v| 1.0 / v)
        .sum();
    let upper = cov.total_samples() as f64 * p / lambda1 + inv_diag;
    Ok(BoundDiagnostics {
        lambda_c,
        lower,
        upper,
        iterates: None,
    })
}

/// Lower and upper bounds on `||Theta*^(k)||_2`.
pub fn solution_bounds(cov: &CovarianceSet, spec: &PenaltySpec) -> Result<BoundDiagnostics> {
    bounds_for(cov, spec.lambda1, spec.lambda2)
}

/// `M = ||Theta_0||_F + 2 ||Theta*||_F` and
/// `m = exp(-C1 / n_max) M^(1 - K p)` with `C1 = F(Theta_0)`.
pub fn iterate_bounds(
    theta0: &PrecisionSet,
    cov: &CovarianceSet,
    spec: &PenaltySpec,
    theta_star: &PrecisionSet,
) -> Result<IterateBounds> {
    let c1 = crate::solver::jgl_objective(theta0, cov, spec)?.total;
    Ok(iterate_bounds_from(c1, theta0, cov, theta_star))
}

fn iterate_bounds_from(
    c1: f64,
    theta0: &PrecisionSet,
    cov: &CovarianceSet,
    theta_star: &PrecisionSet,
) -> IterateBounds {
    let big_m = theta0.frobenius() + 2.0 * theta_star.frobenius();
    let n_max = cov.counts().iter().copied().max().unwrap_or(1);
    let kp = (cov.classes() * cov.dim()) as f64;
    let log_m = -c1 / n_max as f64 + (1.0 - kp) * big_m.ln();
    IterateBounds {
        m: log_m.exp(),
        log_m,
        big_m,
        c1,
        n_max,
    }
}

enum Termination {
    Rule(StopRule),
    /// Single-class duality gap against the given `S` and `lambda`.
    DualityGap(f64),
}

fn validate_start(problem: &Problem<'_>, theta0: Vec<SymMatrix>) -> Result<Point> {
    problem.check_dims(&theta0)?;
    problem
        .point(theta0)
        .ok_or_else(|| JglError::not_pd("initial iterate"))
}

fn initial_step(problem: &Problem<'_>, opts: &SolverOptions, at: &Point) -> f64 {
    match opts.step_init {
        StepInit::Safe => problem.safe_step(&at.theta),
        StepInit::BarzilaiBorwein | StepInit::Fixed => opts.initial_step,
    }
}

fn should_stop(
    term: &Termination,
    opts: &SolverOptions,
    problem: &Problem<'_>,
    cur: &Point,
    report: &mut SolverReport,
) -> bool {
    match term {
        Termination::Rule(StopRule::RelativeError) => report.final_relative_error <= opts.tolerance,
        Termination::Rule(StopRule::ObjectiveError) => {
            let f_star = opts.reference_objective.expect("validated");
            (cur.objective() - f_star).abs() <= opts.tolerance
        }
        Termination::DualityGap(lambda) => {
            let gap = gap_at(&problem.covs[0], &cur.theta[0], &cur.inverse[0], cur.log_dets[0], *lambda);
            report.final_duality_gap = Some(gap);
            gap <= opts.tolerance
        }
    }
}

fn run_ista(
    problem: &Problem<'_>,
    opts: &SolverOptions,
    theta0: Vec<SymMatrix>,
    term: Termination,
    observer: &mut dyn FnMut(usize, &[SymMatrix]),
) -> Result<(Vec<SymMatrix>, SolverReport)> {
    opts.validate()?;
    let mut cur = validate_start(problem, theta0)?;
    let mut report = SolverReport::new(cur.objective(), opts.reference_objective);
    observer(0, &cur.theta);
    let mut eta_next = initial_step(problem, opts, &cur);

    for _ in 0..opts.max_iterations {
        let eta0 = match opts.step_init {
            StepInit::BarzilaiBorwein => eta_next,
            StepInit::Safe => problem.safe_step(&cur.theta),
            StepInit::Fixed => opts.initial_step,
        };
        let accepted = match problem.backtrack(&cur, eta0, opts.backtrack_c, opts.backtrack_cap) {
            Ok(a) => a,
            Err(_) => {
                report.status = Status::NumericalFailure;
                return Ok((cur.theta, report));
            }
        };
        let next = problem.complete(accepted.probe);
        report.iterations += 1;
        report.step_trace.push(accepted.eta);
        report.backtrack_counts.push(accepted.tries);
        report.model_gaps.push(accepted.model_gap);
        report.objective_trace.push(next.objective());
        report.final_relative_error = relative_error(&cur.theta, &next.theta);
        observer(report.iterations, &next.theta);

        eta_next = bb_step(&cur.theta, &next.theta, &cur.grad, &next.grad, || {
            problem.safe_step(&next.theta)
        });
        let stop = should_stop(&term, opts, problem, &next, &mut report);
        cur = next;
        if stop {
            report.status = Status::Converged;
            break;
        }
    }
    Ok((cur.theta, report))
}

fn run_mista(
    problem: &Problem<'_>,
    opts: &SolverOptions,
    theta0: Vec<SymMatrix>,
    observer: &mut dyn FnMut(usize, &[SymMatrix]),
) -> Result<(Vec<SymMatrix>, SolverReport)> {
    opts.validate()?;
    let term = Termination::Rule(opts.stop_rule);
    let mut cur = validate_start(problem, theta0)?;
    let mut report = SolverReport::new(cur.objective(), opts.reference_objective);
    observer(0, &cur.theta);
    let mut step_next = initial_step(problem, opts, &cur);

    'outer: for _ in 0..opts.max_iterations {
        let step = match opts.step_init {
            StepInit::BarzilaiBorwein => step_next,
            StepInit::Safe => problem.safe_step(&cur.theta),
            StepInit::Fixed => opts.initial_step,
        };
        let mut l = 1.0 / step;
        let mut halvings = 0;
        let (direction, sc) = loop {
            let target = problem.forward_backward(&cur, 1.0 / l);
            let direction: Vec<SymMatrix> =
                target.iter().zip(&cur.theta).map(|(a, b)| a.sub(b)).collect();
            let sc = sc_step_weighted(&cur.inverse, &direction, l, &problem.weights);
            if sc.converged {
                report.final_relative_error = 0.0;
                report.status = Status::Converged;
                break 'outer;
            }
            if sc.alpha <= 1.0 {
                break (direction, sc);
            }
            if halvings == opts.halving_cap {
                report.status = Status::NumericalFailure;
                return Ok((cur.theta, report));
            }
            l /= 2.0;
            halvings += 1;
        };

        let theta: Vec<SymMatrix> = cur
            .theta
            .iter()
            .zip(&direction)
            .map(|(t, d)| t.add_scaled(sc.alpha, d))
            .collect();
        let Some(next) = problem.point(theta) else {
            report.status = Status::NumericalFailure;
            return Ok((cur.theta, report));
        };
        report.iterations += 1;
        report.step_trace.push(sc.alpha);
        report.backtrack_counts.push(halvings);
        report.local_norms.push(sc.lambda);
        report.objective_trace.push(next.objective());
        report.final_relative_error = relative_error(&cur.theta, &next.theta);
        observer(report.iterations, &next.theta);

        step_next = bb_step(&cur.theta, &next.theta, &cur.grad, &next.grad, || {
            problem.safe_step(&next.theta)
        });
        let stop = should_stop(&term, opts, problem, &next, &mut report);
        cur = next;
        if stop {
            report.status = Status::Converged;
            break;
        }
    }
    Ok((cur.theta, report))
}

fn finish(
    cov: &CovarianceSet,
    lambda1: f64,
    lambda2: f64,
    theta0: &PrecisionSet,
    theta: Vec<SymMatrix>,
    report: SolverReport,
) -> Result<FitResult> {
    let estimate = PrecisionSet::new(theta)?;
    let mut bounds = bounds_for(cov, lambda1, lambda2)?;
    let c1 = report.objective_trace[0];
    bounds.iterates = Some(iterate_bounds_from(c1, theta0, cov, &estimate));
    Ok(FitResult {
        estimate,
        report,
        bounds,
    })
}

/// ISTA with backtracking line search for the joint problem.
pub fn fit_ista(
    cov: &CovarianceSet,
    spec: &PenaltySpec,
    opts: &SolverOptions,
    theta0: Option<&PrecisionSet>,
) -> Result<FitResult> {
    fit_ista_observed(cov, spec, opts, theta0, |_, _| {})
}

/// [`fit_ista`] with a callback receiving every accepted iterate
/// (iteration 0 is the start).
pub fn fit_ista_observed(
    cov: &CovarianceSet,
    spec: &PenaltySpec,
    opts: &SolverOptions,
    theta0: Option<&PrecisionSet>,
    mut observer: impl FnMut(usize, &[SymMatrix]),
) -> Result<FitResult> {
    cov.require_positive_diagonal()?;
    let start = theta0.cloned().unwrap_or_else(|| default_start(cov, spec.lambda1));
    let problem = Problem::joint(cov, *spec);
    let (theta, report) = run_ista(
        &problem,
        opts,
        start.blocks().to_vec(),
        Termination::Rule(opts.stop_rule),
        &mut observer,
    )?;
    finish(cov, spec.lambda1, spec.lambda2, &start, theta, report)
}

/// Modified ISTA: the step along the prox direction is set from the
/// self-concordance of the log-determinant, with no objective-based line
/// search.
pub fn fit_mista(
    cov: &CovarianceSet,
    spec: &PenaltySpec,
    opts: &SolverOptions,
    theta0: Option<&PrecisionSet>,
) -> Result<FitResult> {
    fit_mista_observed(cov, spec, opts, theta0, |_, _| {})
}

pub fn fit_mista_observed(
    cov: &CovarianceSet,
    spec: &PenaltySpec,
    opts: &SolverOptions,
    theta0: Option<&PrecisionSet>,
    mut observer: impl FnMut(usize, &[SymMatrix]),
) -> Result<FitResult> {
    cov.require_positive_diagonal()?;
    let start = theta0.cloned().unwrap_or_else(|| default_start(cov, spec.lambda1));
    let problem = Problem::joint(cov, *spec);
    let (theta, report) = run_mista(&problem, opts, start.blocks().to_vec(), &mut observer)?;
    finish(cov, spec.lambda1, spec.lambda2, &start, theta, report)
}

/// Runs the requested JGL algorithm.
pub fn fit(
    algorithm: Algorithm,
    cov: &CovarianceSet,
    spec: &PenaltySpec,
    opts: &SolverOptions,
    theta0: Option<&PrecisionSet>,
) -> Result<FitResult> {
    match algorithm {
        Algorithm::Ista => fit_ista(cov, spec, opts, theta0),
        Algorithm::Mista => fit_mista(cov, spec, opts, theta0),
    }
}

/// G-ISTA for the single-class graphical lasso
/// `-log det Theta + trace(S Theta) + lambda sum_{i != j} |theta_ij|`.
///
/// Terminates when the duality gap falls to `opts.tolerance`; the
/// configured stop rule is not consulted.
pub fn fit_gista(
    s: &SymMatrix,
    lambda: f64,
    opts: &SolverOptions,
    theta0: Option<&SymMatrix>,
) -> Result<FitResult> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(JglError::InvalidParameter(format!(
            "lambda must be positive and finite, got {lambda}"
        )));
    }
    let cov = CovarianceSet::new(vec![s.clone()], vec![1])?;
    cov.require_positive_diagonal()?;
    let start = match theta0 {
        Some(t) => PrecisionSet::new(vec![t.clone()])?,
        None => default_start(&cov, lambda),
    };
    let problem = Problem {
        covs: cov.covariances(),
        weights: vec![1.0],
        reg: Regularizer::Lasso(lambda),
    };
    // the gap rule needs no reference objective
    let opts = SolverOptions {
        stop_rule: StopRule::RelativeError,
        ..opts.clone()
    };
    let (theta, mut report) = run_ista(
        &problem,
        &opts,
        start.blocks().to_vec(),
        Termination::DualityGap(lambda),
        &mut |_, _| {},
    )?;
    if report.final_duality_gap.is_none() {
        report.final_duality_gap = Some(duality_gap_single(s, &theta[0], lambda)?);
    }
    let estimate = PrecisionSet::new(theta)?;
    let mut bounds = bounds_for(&cov, lambda, 0.0)?;
    bounds.iterates = Some(iterate_bounds_from(report.objective_trace[0], &start, &cov, &estimate));
    Ok(FitResult {
        estimate,
        report,
        bounds,
    })
}

fn gap_at(s: &SymMatrix, theta: &SymMatrix, inverse: &SymMatrix, log_det: f64, lambda: f64) -> f64 {
    let p = s.dim();
    // dual point: off-diagonal residual clipped to the box, zero diagonal
    let u = SymMatrix::from_upper_fn(p, |i, j| {
        if i == j {
            0.0
        } else {
            (inverse.get(i, j) - s.get(i, j)).clamp(-lambda, lambda)
        }
    });
    let Some(dual) = CholeskyFactor::new(&s.add_scaled(1.0, &u)) else {
        return f64::INFINITY;
    };
    -dual.log_det() - p as f64 - log_det + s.dot(theta) + lambda * theta.off_diagonal_l1()
}

fn duality_gap_single(s: &SymMatrix, theta: &SymMatrix, lambda: f64) -> Result<f64> {
    let factor = CholeskyFactor::new(theta).ok_or_else(|| JglError::not_pd("duality gap"))?;
    Ok(gap_at(s, theta, &factor.inverse(), factor.log_det(), lambda))
}

/// Duality gap of the single-class graphical lasso at `theta`. The dual
/// point clips the off-diagonal entries of `theta^-1 - S` to
/// `[-lambda, lambda]`; returns `+inf` when `S + U` is not positive
/// definite.
pub fn duality_gap(theta: &PrecisionSet, s: &SymMatrix, lambda: f64) -> Result<f64> {
    if theta.classes() != 1 {
        return Err(JglError::Dimension(format!(
            "the duality gap is defined for one class, got {}",
            theta.classes()
        )));
    }
    if theta.dim() != s.dim() {
        return Err(JglError::Dimension("precision and covariance sizes differ".into()));
    }
    duality_gap_single(s, &theta.blocks()[0], lambda)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::invert_pd;
    use crate::solver::jgl_objective;
    use approx::assert_relative_eq;
    use nalgebra::DMatrix;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn tight() -> SolverOptions {
        SolverOptions {
            tolerance: 1e-10,
            max_iterations: 50_000,
            ..SolverOptions::default()
        }
    }

    fn random_cov(rng: &mut ChaCha8Rng, k: usize, p: usize, n: usize) -> CovarianceSet {
        let classes: Vec<DMatrix<f64>> = (0..k)
            .map(|_| DMatrix::from_fn(n, p, |_, _| rng.random_range(-1.0..1.0)))
            .collect();
        CovarianceSet::from_samples(&classes, true).unwrap()
    }

    #[test]
    fn gista_identity_covariance() {
        let s = SymMatrix::identity(4);
        let fit = fit_gista(&s, 0.1, &tight(), None).unwrap();
        assert_eq!(fit.report.status, Status::Converged);
        // the gap is quadratic in the distance to the optimum
        let gap = fit.report.final_duality_gap.unwrap();
        assert!(gap <= 1e-10);
        let dist = fit.estimate.blocks()[0].sub(&SymMatrix::identity(4)).max_abs();
        assert!(dist <= (2.0 * gap).sqrt() + 1e-12, "{dist} {gap}");
    }

    #[test]
    fn gista_two_by_two_kkt() {
        let s = SymMatrix::new(DMatrix::from_row_slice(2, 2, &[1.0, 0.6, 0.6, 1.0])).unwrap();
        let lambda = 0.3;
        let fit = fit_gista(&s, lambda, &tight(), None).unwrap();
        let theta = &fit.estimate.blocks()[0];
        let w = invert_pd(theta).unwrap();
        let r = w.get(0, 1) - s.get(0, 1);
        assert!(r.abs() <= lambda + 1e-5);
        assert!(theta.get(0, 1) != 0.0);
        assert!((r - lambda * theta.get(0, 1).signum()).abs() <= 1e-4);
        // diagonal stationarity: (Theta^-1)_ii = S_ii
        assert!((w.get(0, 0) - 1.0).abs() <= 1e-6);
    }

    #[test]
    fn duality_gap_examples() {
        let s = SymMatrix::identity(3);
        let theta = PrecisionSet::identity(1, 3);
        assert!(duality_gap(&theta, &s, 0.1).unwrap().abs() <= 1e-15);

        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let cov = random_cov(&mut rng, 1, 5, 30);
        let s = cov.covariances()[0].clone();
        let fit = fit_gista(&s, 0.05, &tight(), None).unwrap();
        let at_opt = duality_gap(&fit.estimate, &s, 0.05).unwrap();
        assert!((-1e-10..=1e-6).contains(&at_opt));
        let off = PrecisionSet::identity(1, 5);
        assert!(duality_gap(&off, &s, 0.05).unwrap() > 0.0);
        assert!(duality_gap(&PrecisionSet::identity(2, 5), &s, 0.05).is_err());
    }

    #[test]
    fn ista_identity_covariance_is_diagonal() {
        // S = I, large lambda1: off-diagonals vanish and each diagonal solves
        // -n log t + n t -> t = 1 (fused diagonals already agree)
        let cov = CovarianceSet::new(vec![SymMatrix::identity(3); 2], vec![10, 20]).unwrap();
        let spec = PenaltySpec::fused(50.0, 0.5).unwrap();
        let fit = fit_ista(&cov, &spec, &tight(), None).unwrap();
        for b in fit.estimate.blocks() {
            assert!(b.sub(&SymMatrix::identity(3)).max_abs() <= 1e-8);
        }
    }

    #[test]
    fn ista_diagonal_covariance_scalar_oracle() {
        // S = diag(s), group penalty: optimum diag(1/s) for any l1
        let s = SymMatrix::from_diagonal(&[0.5, 2.0, 4.0]);
        let cov = CovarianceSet::new(vec![s.clone(), s], vec![5, 5]).unwrap();
        let spec = PenaltySpec::group(5.0, 1.0).unwrap();
        let fit = fit_ista(&cov, &spec, &tight(), None).unwrap();
        for b in fit.estimate.blocks() {
            let expected = SymMatrix::from_diagonal(&[2.0, 0.5, 0.25]);
            assert!(b.sub(&expected).max_abs() <= 1e-8);
        }
    }

    #[test]
    fn ista_and_mista_agree_small() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let cov = random_cov(&mut rng, 2, 6, 40);
        for spec in [PenaltySpec::fused(2.0, 1.0).unwrap(), PenaltySpec::group(2.0, 1.0).unwrap()] {
            let a = fit_ista(&cov, &spec, &tight(), None).unwrap();
            let b = fit_mista(&cov, &spec, &tight(), None).unwrap();
            assert_eq!(a.report.status, Status::Converged);
            assert_eq!(b.report.status, Status::Converged, "{:?}", b.report.iterations);
            let rel = a.estimate.relative_distance(&b.estimate);
            assert!(rel <= 1e-6, "{rel}");
        }
    }

    #[test]
    fn ista_objective_is_monotone() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let cov = random_cov(&mut rng, 3, 8, 25);
        let spec = PenaltySpec::fused(1.0, 0.5).unwrap();
        let fit = fit_ista(&cov, &spec, &tight(), None).unwrap();
        for w in fit.report.objective_trace.windows(2) {
            assert!(w[1] <= w[0] + 1e-9 * w[0].abs());
        }
    }

    #[test]
    fn mista_steps_stay_in_dikin_region() {
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        let cov = random_cov(&mut rng, 2, 5, 30);
        let spec = PenaltySpec::group(1.0, 0.5).unwrap();
        let fit = fit_mista(&cov, &spec, &tight(), None).unwrap();
        for (alpha, lambda) in fit.report.step_trace.iter().zip(&fit.report.local_norms) {
            assert!(*alpha <= 1.0);
            assert!(alpha * alpha * lambda < 1.0);
        }
        for w in fit.report.objective_trace.windows(2) {
            assert!(w[1] <= w[0] + 1e-12 * w[0].abs().max(1.0));
        }
    }

    #[test]
    fn fused_symmetry_with_identical_classes() {
        let mut rng = ChaCha8Rng::seed_from_u64(16);
        let single = random_cov(&mut rng, 1, 5, 30);
        let s = single.covariances()[0].clone();
        let cov = CovarianceSet::new(vec![s.clone(), s], vec![30, 30]).unwrap();
        let spec = PenaltySpec::fused(1.0, 0.5).unwrap();
        let fit = fit_ista(&cov, &spec, &tight(), None).unwrap();
        let b = fit.estimate.blocks();
        assert!(b[0].sub(&b[1]).max_abs() <= 1e-8);
    }

    #[test]
    fn solution_bound_examples() {
        let cov = CovarianceSet::new(vec![SymMatrix::identity(3); 2], vec![10, 10]).unwrap();
        let spec = PenaltySpec::fused(0.1, 0.05).unwrap();
        let b = solution_bounds(&cov, &spec).unwrap();
        assert_relative_eq!(b.lambda_c, 0.0425f64.sqrt(), epsilon = 1e-15);
        assert_relative_eq!(b.lambda_c, 0.206155, epsilon = 1e-6);
        // S = I, n_k = n: lower bound n / (p lambda_c + n)
        assert_relative_eq!(b.lower[0], 10.0 / (3.0 * b.lambda_c + 10.0), epsilon = 1e-14);
        assert_relative_eq!(b.upper, 20.0 * 3.0 / 0.1 + 6.0, epsilon = 1e-12);

        let zero = CovarianceSet::new(vec![SymMatrix::from_diagonal(&[1.0, 0.0])], vec![2]).unwrap();
        assert!(solution_bounds(&zero, &spec).is_err());
    }

    #[test]
    fn fitted_optimum_respects_solution_bounds() {
        let mut rng = ChaCha8Rng::seed_from_u64(18);
        let cov = random_cov(&mut rng, 2, 6, 40);
        let spec = PenaltySpec::group(1.0, 0.5).unwrap();
        let fit = fit_ista(&cov, &spec, &tight(), None).unwrap();
        for (k, b) in fit.estimate.blocks().iter().enumerate() {
            let nrm = norms(b).spectral;
            assert!(fit.bounds.lower[k] <= nrm && nrm <= fit.bounds.upper);
        }
    }

    #[test]
    fn iterate_bound_formula_replay() {
        let cov = CovarianceSet::new(vec![SymMatrix::identity(2); 2], vec![3, 5]).unwrap();
        let spec = PenaltySpec::fused(0.1, 0.1).unwrap();
        let theta0 = PrecisionSet::identity(2, 2);
        let star = PrecisionSet::new(vec![SymMatrix::identity(2).scale(2.0); 2]).unwrap();
        let ib = iterate_bounds(&theta0, &cov, &spec, &star).unwrap();
        // ||Theta_0||_F = 2, ||Theta*||_F = sqrt(16) = 4
        assert_relative_eq!(ib.big_m, 2.0 + 2.0 * 4.0, epsilon = 1e-14);
        let c1 = jgl_objective(&theta0, &cov, &spec).unwrap().total;
        assert_relative_eq!(c1, 16.0, epsilon = 1e-12);
        assert_relative_eq!(ib.m, (-c1 / 5.0).exp() * 10f64.powf(1.0 - 4.0), epsilon = 1e-15);
        assert!(ib.m > 0.0);
    }

    #[test]
    fn rejects_bad_inputs() {
        let cov = CovarianceSet::new(vec![SymMatrix::from_diagonal(&[1.0, 0.0])], vec![2]).unwrap();
        let spec = PenaltySpec::fused(0.1, 0.1).unwrap();
        assert!(fit_ista(&cov, &spec, &tight(), None).is_err());

        let cov = CovarianceSet::new(vec![SymMatrix::identity(2)], vec![2]).unwrap();
        let bad = PrecisionSet::new(vec![SymMatrix::from_diagonal(&[1.0, -1.0])]).unwrap();
        assert!(matches!(
            fit_ista(&cov, &spec, &tight(), Some(&bad)),
            Err(JglError::NotPositiveDefinite { .. })
        ));
        assert!(fit_gista(&SymMatrix::identity(2), 0.0, &tight(), None).is_err());
    }
}
