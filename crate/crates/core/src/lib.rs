//! Proximal-gradient solvers for sparse precision matrices of `K` related
//! Gaussian graphical models (the joint graphical lasso).
//!
//! The crate is organized bottom-up:
//!
//! - [`matrix`]: symmetric matrix kernels (covariance, Cholesky log-det,
//!   inversion, norms).
//! - [`prox`]: exact proximal operators for the fused and group penalties.
//! - [`solver`]: objective, gradient, quadratic model, backtracking and
//!   step-size rules shared by the algorithms.
//! - [`jgl`]: ISTA, modified ISTA and single-class G-ISTA fits, plus bounds.
//! - [`select`]: cross-validation over a `(lambda1, lambda2)` grid.
//! - [`synth`] and [`metrics`]: synthetic benchmarks and edge-recovery
//!   evaluation.
//! - [`io`]: CSV and JSON file formats.

pub mod error;
pub mod io;
pub mod jgl;
pub mod matrix;
pub mod metrics;
pub mod prox;
pub mod select;
pub mod solver;
pub mod synth;

pub use error::{JglError, Result};
pub use jgl::{
    default_start, duality_gap, fit, fit_gista, fit_ista, fit_ista_observed, fit_mista,
    fit_mista_observed, iterate_bounds, solution_bounds, Algorithm, BoundDiagnostics, FitResult,
    IterateBounds,
};
pub use matrix::{
    cholesky_logdet, empirical_covariance, extreme_eigenvalues, invert_pd, norms, CovarianceSet,
    LogDet, Norms, SymMatrix,
};
pub use metrics::{convergence_trace, mse, roc_counts, roc_curve, RocCounts};
pub use prox::{
    flsa_group, group_shrink, prox_penalty, soft_threshold, PenaltyKind, PenaltySpec, ScalarGroup,
};
pub use select::{cross_validate, make_folds, ClassDataset, CvPlan, CvResult};
pub use solver::{
    backtrack_step, bb_step, jgl_gradient, jgl_objective, quadratic_model, sc_step, stopping,
    Objective, PrecisionSet, ScStep, SolverOptions, SolverReport, Status, StepInit, StopRule,
};
pub use synth::{generate, GroundTruth, SyntheticSpec};
