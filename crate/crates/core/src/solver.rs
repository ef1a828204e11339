//! Shared proximal-gradient machinery: objective and gradient of the
//! weighted log-likelihood, the quadratic model, backtracking, step-size
//! rules and stopping tests.

use serde::{Deserialize, Serialize};

use crate::error::{JglError, Result};
use crate::matrix::{extreme_eigenvalues, CholeskyFactor, CovarianceSet, SymMatrix};
use crate::prox::{prox_penalty, soft_threshold_offdiag, PenaltySpec};

/// Floor applied to every step size produced by the step rules.
pub const MIN_STEP: f64 = 1e-12;

/// `K` stacked symmetric `p x p` matrices. Accepted iterates are positive
/// definite in every class.
#[derive(Debug, Clone, PartialEq)]
pub struct PrecisionSet {
    blocks: Vec<SymMatrix>,
}

impl PrecisionSet {
    pub fn new(blocks: Vec<SymMatrix>) -> Result<Self> {
        let Some(first) = blocks.first() else {
            return Err(JglError::Dimension("a precision set needs at least one class".into()));
        };
        let p = first.dim();
        if blocks.iter().any(|b| b.dim() != p) {
            return Err(JglError::Dimension(
                "all precision matrices must share one dimension".into(),
            ));
        }
        Ok(PrecisionSet { blocks })
    }

    pub fn identity(classes: usize, p: usize) -> Self {
        PrecisionSet {
            blocks: vec![SymMatrix::identity(p); classes],
        }
    }

    pub fn blocks(&self) -> &[SymMatrix] {
        &self.blocks
    }

    pub fn into_blocks(self) -> Vec<SymMatrix> {
        self.blocks
    }

    pub fn classes(&self) -> usize {
        self.blocks.len()
    }

    pub fn dim(&self) -> usize {
        self.blocks[0].dim()
    }

    /// `sum_k ||Theta^(k)||_F`.
    pub fn frobenius_sum(&self) -> f64 {
        self.blocks.iter().map(SymMatrix::frobenius).sum()
    }

    /// Frobenius norm of the whole stack, `sqrt(sum_k ||Theta^(k)||_F^2)`.
    pub fn frobenius(&self) -> f64 {
        self.blocks
            .iter()
            .map(|b| b.frobenius().powi(2))
            .sum::<f64>()
            .sqrt()
    }

    pub fn is_pd(&self) -> bool {
        self.blocks.iter().all(|b| CholeskyFactor::new(b).is_some())
    }

    /// `||self - other||_F / ||other||_F` over the whole stack.
    pub fn relative_distance(&self, other: &PrecisionSet) -> f64 {
        let diff: f64 = self
            .blocks
            .iter()
            .zip(&other.blocks)
            .map(|(a, b)| a.sub(b).frobenius().powi(2))
            .sum::<f64>()
            .sqrt();
        diff / other.frobenius()
    }
}

/// Stopping rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopRule {
    /// `sum_k ||Theta_{t+1} - Theta_t||_F / max(sum_k ||Theta_t||_F, 1) <= eps`
    RelativeError,
    /// `|F(Theta_t) - F*| <= eps` against a reference optimum.
    ObjectiveError,
}

/// How each iteration's first trial step is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StepInit {
    BarzilaiBorwein,
    Safe,
    Fixed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    pub tolerance: f64,
    pub max_iterations: usize,
    pub backtrack_c: f64,
    pub initial_step: f64,
    pub stop_rule: StopRule,
    pub step_init: StepInit,
    /// `F(Theta*)`, required by [`StopRule::ObjectiveError`].
    pub reference_objective: Option<f64>,
    /// Step shrinks tried before falling back to the safe step.
    pub backtrack_cap: usize,
    /// Halvings of `L_t` allowed per modified-ISTA iteration.
    pub halving_cap: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            tolerance: 1e-5,
            max_iterations: 10_000,
            backtrack_c: 0.5,
            initial_step: 1.0,
            stop_rule: StopRule::RelativeError,
            step_init: StepInit::BarzilaiBorwein,
            reference_objective: None,
            backtrack_cap: 50,
            halving_cap: 60,
        }
    }
}

impl SolverOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.tolerance > 0.0) {
            return Err(JglError::Config(format!(
                "tolerance must be positive, got {}",
                self.tolerance
            )));
        }
        if !(self.backtrack_c > 0.0 && self.backtrack_c < 1.0) {
            return Err(JglError::Config(format!(
                "backtracking constant must lie in (0, 1), got {}",
                self.backtrack_c
            )));
        }
        if !(self.initial_step > 0.0 && self.initial_step.is_finite()) {
            return Err(JglError::Config(format!(
                "initial step must be positive, got {}",
                self.initial_step
            )));
        }
        if self.max_iterations == 0 {
            return Err(JglError::Config("max_iterations must be positive".into()));
        }
        if self.stop_rule == StopRule::ObjectiveError && self.reference_objective.is_none() {
            return Err(JglError::Config(
                "objective-error stopping needs a reference objective".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Status {
    Converged,
    MaxIterations,
    NumericalFailure,
}

/// Per-run traces and termination status.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverReport {
    pub iterations: usize,
    /// `F(Theta_t)` for `t = 0..=iterations`.
    pub objective_trace: Vec<f64>,
    /// Accepted `eta_t` (ISTA) or `alpha_t` (modified ISTA).
    pub step_trace: Vec<f64>,
    /// Step shrinks (ISTA) or `L_t` halvings (modified ISTA) per iteration.
    pub backtrack_counts: Vec<usize>,
    /// `Q_eta(Theta_{t+1}, Theta_t) - f(Theta_{t+1})` for accepted ISTA steps.
    pub model_gaps: Vec<f64>,
    /// `lambda_t` of the self-concordant step, modified ISTA only.
    pub local_norms: Vec<f64>,
    pub status: Status,
    pub final_relative_error: f64,
    pub final_duality_gap: Option<f64>,
    pub reference_objective: Option<f64>,
}

impl SolverReport {
    pub(crate) fn new(initial_objective: f64, reference: Option<f64>) -> Self {
        SolverReport {
            iterations: 0,
            objective_trace: vec![initial_objective],
            step_trace: Vec::new(),
            backtrack_counts: Vec::new(),
            model_gaps: Vec::new(),
            local_norms: Vec::new(),
            status: Status::MaxIterations,
            final_relative_error: f64::INFINITY,
            final_duality_gap: None,
            reference_objective: reference,
        }
    }

    pub fn final_objective(&self) -> f64 {
        *self.objective_trace.last().expect("trace holds the initial objective")
    }
}

/// Objective split into its smooth and non-smooth parts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Objective {
    pub total: f64,
    pub smooth: f64,
    pub penalty: f64,
}

/// The non-smooth term being handled by the prox step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum Regularizer {
    Joint(PenaltySpec),
    /// Single-class off-diagonal l1 penalty.
    Lasso(f64),
}

impl Regularizer {
    pub(crate) fn value(&self, thetas: &[SymMatrix]) -> f64 {
        match self {
            Regularizer::Joint(spec) => spec.value(thetas),
            Regularizer::Lasso(lambda) => lambda * thetas[0].off_diagonal_l1(),
        }
    }

    pub(crate) fn prox(&self, a: &[SymMatrix], eta: f64) -> Vec<SymMatrix> {
        match self {
            Regularizer::Joint(spec) => prox_penalty(a, eta, spec),
            Regularizer::Lasso(lambda) => vec![soft_threshold_offdiag(&a[0], eta * lambda)],
        }
    }
}

/// `f(Theta) = -sum_k w_k (log det Theta_k - trace(S_k Theta_k))` plus a
/// regularizer. `w_k = n_k` for the joint problem, `1` for the single-class
/// lasso.
#[derive(Debug, Clone)]
pub(crate) struct Problem<'a> {
    pub covs: &'a [SymMatrix],
    pub weights: Vec<f64>,
    pub reg: Regularizer,
}

/// A positive definite point with its factors.
#[derive(Debug, Clone)]
pub(crate) struct Probe {
    pub theta: Vec<SymMatrix>,
    pub factors: Vec<CholeskyFactor>,
    pub log_dets: Vec<f64>,
    pub smooth: f64,
}

/// A probe with its inverse and gradient.
#[derive(Debug, Clone)]
pub(crate) struct Point {
    pub theta: Vec<SymMatrix>,
    pub log_dets: Vec<f64>,
    pub inverse: Vec<SymMatrix>,
    pub grad: Vec<SymMatrix>,
    pub smooth: f64,
    pub penalty: f64,
}

impl Point {
    pub(crate) fn objective(&self) -> f64 {
        self.smooth + self.penalty
    }
}

impl<'a> Problem<'a> {
    pub(crate) fn joint(cov: &'a CovarianceSet, spec: PenaltySpec) -> Self {
        Problem {
            covs: cov.covariances(),
            weights: cov.counts().iter().map(|&n| n as f64).collect(),
            reg: Regularizer::Joint(spec),
        }
    }

    pub(crate) fn check_dims(&self, theta: &[SymMatrix]) -> Result<()> {
        if theta.len() != self.covs.len() {
            return Err(JglError::Dimension(format!(
                "{} precision matrices for {} classes",
                theta.len(),
                self.covs.len()
            )));
        }
        let p = self.covs[0].dim();
        if theta.iter().any(|t| t.dim() != p) {
            return Err(JglError::Dimension(format!(
                "precision matrices must be {p}x{p}"
            )));
        }
        Ok(())
    }

    /// Factors every block; `None` if any block is not positive definite.
    pub(crate) fn probe(&self, theta: Vec<SymMatrix>) -> Option<Probe> {
        let factors = theta
            .iter()
            .map(CholeskyFactor::new)
            .collect::<Option<Vec<_>>>()?;
        let log_dets: Vec<f64> = factors.iter().map(CholeskyFactor::log_det).collect();
        let smooth = self
            .covs
            .iter()
            .zip(&theta)
            .zip(&self.weights)
            .zip(&log_dets)
            .map(|(((s, t), w), ld)| -w * (ld - s.dot(t)))
            .sum();
        Some(Probe {
            theta,
            factors,
            log_dets,
            smooth,
        })
    }

    pub(crate) fn complete(&self, probe: Probe) -> Point {
        let inverse: Vec<SymMatrix> = probe.factors.iter().map(CholeskyFactor::inverse).collect();
        let grad = self
            .covs
            .iter()
            .zip(&inverse)
            .zip(&self.weights)
            .map(|((s, w_inv), w)| s.sub(w_inv).scale(*w))
            .collect();
        let penalty = self.reg.value(&probe.theta);
        Point {
            theta: probe.theta,
            log_dets: probe.log_dets,
            inverse,
            grad,
            smooth: probe.smooth,
            penalty,
        }
    }

    pub(crate) fn point(&self, theta: Vec<SymMatrix>) -> Option<Point> {
        self.probe(theta).map(|p| self.complete(p))
    }

    /// `min_k lambda_min(Theta_k)^2 / max_k w_k`.
    pub(crate) fn safe_step(&self, theta: &[SymMatrix]) -> f64 {
        let w_max = self.weights.iter().copied().fold(0.0, f64::max);
        safe_step_from(theta, w_max)
    }

    /// Forward-backward candidate `prox_{eta g}(Theta - eta grad)`.
    pub(crate) fn forward_backward(&self, at: &Point, eta: f64) -> Vec<SymMatrix> {
        let shifted: Vec<SymMatrix> = at
            .theta
            .iter()
            .zip(&at.grad)
            .map(|(t, g)| t.add_scaled(-eta, g))
            .collect();
        self.reg.prox(&shifted, eta)
    }

    /// `Q_eta(cand, at) - f(cand)`, arranged so the large terms cancel
    /// analytically: `sum_k w_k (logdet cand_k - logdet at_k - <D_k, at_k^-1>) + ||D||^2 / 2 eta`.
    pub(crate) fn model_gap(&self, at: &Point, cand: &Probe, eta: f64) -> f64 {
        let mut gap = 0.0;
        let mut dist2 = 0.0;
        for k in 0..self.covs.len() {
            let d = cand.theta[k].sub(&at.theta[k]);
            gap += self.weights[k] * ((cand.log_dets[k] - at.log_dets[k]) - d.dot(&at.inverse[k]));
            dist2 += d.frobenius().powi(2);
        }
        gap + dist2 / (2.0 * eta)
    }

    /// Acceptance slack for the sufficient-decrease test, covering rounding
    /// in the two log-determinants.
    pub(crate) fn model_slack(&self, at: &Point) -> f64 {
        1e-12 * (1.0 + at.smooth.abs())
    }

    /// Backtracking line search from `eta0`.
    pub(crate) fn backtrack(
        &self,
        at: &Point,
        eta0: f64,
        c: f64,
        cap: usize,
    ) -> Result<Accepted> {
        let slack = self.model_slack(at);
        let mut eta = eta0;
        for tries in 0..=cap {
            if let Some(accepted) = self.try_step(at, eta, slack) {
                return Ok(Accepted {
                    tries,
                    fell_back: false,
                    ..accepted
                });
            }
            eta *= c;
        }
        let safe = self.safe_step(&at.theta);
        if let Some(accepted) = self.try_step(at, safe, slack) {
            return Ok(Accepted {
                tries: cap + 1,
                fell_back: true,
                ..accepted
            });
        }
        Err(JglError::NumericalFailure(format!(
            "backtracking rejected {} shrinks and the safe step {safe:e}",
            cap + 1
        )))
    }

    fn try_step(&self, at: &Point, eta: f64, slack: f64) -> Option<Accepted> {
        let cand = self.forward_backward(at, eta);
        let probe = self.probe(cand)?;
        let gap = self.model_gap(at, &probe, eta);
        (gap >= -slack).then_some(Accepted {
            probe,
            eta,
            tries: 0,
            model_gap: gap,
            fell_back: false,
        })
    }
}

/// An accepted backtracking step.
#[derive(Debug, Clone)]
pub(crate) struct Accepted {
    pub probe: Probe,
    pub eta: f64,
    pub tries: usize,
    pub model_gap: f64,
    pub fell_back: bool,
}

fn safe_step_from(theta: &[SymMatrix], w_max: f64) -> f64 {
    let lam_min = theta
        .iter()
        .map(|t| extreme_eigenvalues(t).0)
        .fold(f64::INFINITY, f64::min);
    (lam_min * lam_min / w_max.max(1.0)).max(MIN_STEP)
}

/// Safe step `min_k lambda_min(Theta_k)^2 / max_k n_k`.
pub fn safe_step(theta: &PrecisionSet, cov: &CovarianceSet) -> f64 {
    let w_max = cov.counts().iter().copied().max().unwrap_or(1) as f64;
    safe_step_from(theta.blocks(), w_max)
}

fn require_pd_point<'a>(problem: &Problem<'a>, theta: &PrecisionSet) -> Result<Point> {
    problem.check_dims(theta.blocks())?;
    problem
        .point(theta.blocks().to_vec())
        .ok_or_else(|| JglError::not_pd("precision iterate"))
}

/// Joint objective `F = f + g` with
/// `f = -sum_k n_k (log det Theta_k - trace(S_k Theta_k))`.
pub fn jgl_objective(theta: &PrecisionSet, cov: &CovarianceSet, spec: &PenaltySpec) -> Result<Objective> {
    let problem = Problem::joint(cov, *spec);
    problem.check_dims(theta.blocks())?;
    let probe = problem
        .probe(theta.blocks().to_vec())
        .ok_or_else(|| JglError::not_pd("objective"))?;
    let penalty = spec.value(theta.blocks());
    Ok(Objective {
        total: probe.smooth + penalty,
        smooth: probe.smooth,
        penalty,
    })
}

/// Gradient of the smooth part, `n_k (S_k - Theta_k^-1)` per class.
pub fn jgl_gradient(theta: &PrecisionSet, cov: &CovarianceSet) -> Result<Vec<SymMatrix>> {
    // the penalty weights are irrelevant to the gradient
    let spec = PenaltySpec::fused(1.0, 1.0)?;
    let point = require_pd_point(&Problem::joint(cov, spec), theta)?;
    Ok(point.grad)
}

/// `f(T) + <Tnew - T, grad f(T)> + ||Tnew - T||_F^2 / (2 eta)`.
pub fn quadratic_model(
    theta_new: &PrecisionSet,
    theta: &PrecisionSet,
    cov: &CovarianceSet,
    eta: f64,
) -> Result<f64> {
    if !(eta > 0.0) {
        return Err(JglError::InvalidParameter(format!("eta must be positive, got {eta}")));
    }
    let spec = PenaltySpec::fused(1.0, 1.0)?;
    let problem = Problem::joint(cov, spec);
    problem.check_dims(theta_new.blocks())?;
    let point = require_pd_point(&problem, theta)?;
    let mut q = point.smooth;
    for k in 0..point.theta.len() {
        let d = theta_new.blocks()[k].sub(&point.theta[k]);
        q += d.dot(&point.grad[k]) + d.frobenius().powi(2) / (2.0 * eta);
    }
    Ok(q)
}

/// Result of one backtracked proximal-gradient step.
#[derive(Debug, Clone)]
pub struct BacktrackStep {
    pub next: PrecisionSet,
    pub eta: f64,
    /// Number of shrinks applied before acceptance.
    pub tries: usize,
    pub fell_back_to_safe_step: bool,
}

/// Shrinks `eta` by `c` from `eta0` until the forward-backward candidate is
/// positive definite in every class and satisfies `f(cand) <= Q_eta(cand, T)`.
/// After 50 shrinks the safe step is tried once; if that is rejected too the
/// step fails with [`JglError::NumericalFailure`].
pub fn backtrack_step(
    theta: &PrecisionSet,
    cov: &CovarianceSet,
    spec: &PenaltySpec,
    eta0: f64,
    c: f64,
) -> Result<BacktrackStep> {
    if !(eta0 > 0.0) || !(c > 0.0 && c < 1.0) {
        return Err(JglError::InvalidParameter(format!(
            "need eta0 > 0 and 0 < c < 1, got eta0={eta0}, c={c}"
        )));
    }
    let problem = Problem::joint(cov, *spec);
    let point = require_pd_point(&problem, theta)?;
    let accepted = problem.backtrack(&point, eta0, c, SolverOptions::default().backtrack_cap)?;
    Ok(BacktrackStep {
        next: PrecisionSet::new(accepted.probe.theta)?,
        eta: accepted.eta,
        tries: accepted.tries,
        fell_back_to_safe_step: accepted.fell_back,
    })
}

/// Barzilai-Borwein (BB1) step `<dT, dT> / <dT, dG>` aggregated over the
/// classes. A non-positive or non-finite denominator yields `safe()`.
pub fn bb_step(
    theta_prev: &[SymMatrix],
    theta: &[SymMatrix],
    grad_prev: &[SymMatrix],
    grad: &[SymMatrix],
    safe: impl FnOnce() -> f64,
) -> f64 {
    let mut ss = 0.0;
    let mut sy = 0.0;
    for k in 0..theta.len() {
        let s = theta[k].sub(&theta_prev[k]);
        let y = grad[k].sub(&grad_prev[k]);
        ss += s.dot(&s);
        sy += s.dot(&y);
    }
    let step = ss / sy;
    if sy > 0.0 && step.is_finite() {
        step.max(MIN_STEP)
    } else {
        safe()
    }
}

/// Self-concordant step quantities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScStep {
    pub alpha: f64,
    pub beta: f64,
    pub lambda: f64,
    /// Set when the direction vanishes; `alpha` is 0 in that case.
    pub converged: bool,
}

pub(crate) fn sc_step_weighted(
    inverse: &[SymMatrix],
    d: &[SymMatrix],
    l: f64,
    weights: &[f64],
) -> ScStep {
    let dist2: f64 = d.iter().map(|m| m.frobenius().powi(2)).sum();
    let beta = l * dist2;
    let lambda: f64 = inverse
        .iter()
        .zip(d)
        .zip(weights)
        .map(|((w_inv, dk), n)| n * (w_inv.as_matrix() * dk.as_matrix()).norm())
        .sum();
    if dist2 == 0.0 || lambda == 0.0 {
        return ScStep {
            alpha: 0.0,
            beta,
            lambda,
            converged: true,
        };
    }
    ScStep {
        alpha: beta / (lambda * (lambda + beta)),
        beta,
        lambda,
        converged: false,
    }
}

/// `beta = L sum_k ||d_k||_F^2`, `lambda = sum_k n_k ||Theta_k^-1 d_k||_F`,
/// `alpha = beta / (lambda (lambda + beta))`.
pub fn sc_step(theta: &PrecisionSet, d: &[SymMatrix], l: f64, cov: &CovarianceSet) -> Result<ScStep> {
    if !(l > 0.0) {
        return Err(JglError::InvalidParameter(format!("L must be positive, got {l}")));
    }
    let spec = PenaltySpec::fused(1.0, 1.0)?;
    let problem = Problem::joint(cov, spec);
    let point = require_pd_point(&problem, theta)?;
    problem.check_dims(d)?;
    Ok(sc_step_weighted(&point.inverse, d, l, &problem.weights))
}

/// `sum_k ||cur_k - prev_k||_F / max(sum_k ||prev_k||_F, 1)`.
pub fn relative_error(prev: &[SymMatrix], cur: &[SymMatrix]) -> f64 {
    let num: f64 = prev.iter().zip(cur).map(|(a, b)| b.sub(a).frobenius()).sum();
    let den: f64 = prev.iter().map(SymMatrix::frobenius).sum();
    num / den.max(1.0)
}

/// Evaluates the selected stopping rule.
pub fn stopping(
    prev: &PrecisionSet,
    cur: &PrecisionSet,
    rule: StopRule,
    objective: f64,
    reference: Option<f64>,
    eps: f64,
) -> Result<bool> {
    match rule {
        StopRule::RelativeError => Ok(relative_error(prev.blocks(), cur.blocks()) <= eps),
        StopRule::ObjectiveError => {
            let f_star = reference.ok_or_else(|| {
                JglError::Config("objective-error stopping needs a reference objective".into())
            })?;
            Ok((objective - f_star).abs() <= eps)
        }
    }
}
