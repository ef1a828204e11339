//! D-fold cross-validation over a `(lambda1, lambda2)` grid.

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{JglError, Result};
use crate::jgl::{fit, Algorithm};
use crate::matrix::{center_columns, empirical_covariance, CholeskyFactor, CovarianceSet, SymMatrix};
use crate::prox::{PenaltyKind, PenaltySpec};
use crate::solver::{PrecisionSet, SolverOptions, Status};

/// Per-class sample matrices, `n_k x p`, in class order.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassDataset {
    classes: Vec<DMatrix<f64>>,
}

impl ClassDataset {
    pub fn new(classes: Vec<DMatrix<f64>>) -> Result<Self> {
        let Some(first) = classes.first() else {
            return Err(JglError::Dimension("no classes supplied".into()));
        };
        let p = first.ncols();
        if p == 0 {
            return Err(JglError::Dimension("samples have no columns".into()));
        }
        for (k, x) in classes.iter().enumerate() {
            if x.ncols() != p {
                return Err(JglError::Dimension(format!(
                    "class {} has {} columns, class 1 has {p}",
                    k + 1,
                    x.ncols()
                )));
            }
            if x.nrows() == 0 {
                return Err(JglError::Dimension(format!("class {} has no samples", k + 1)));
            }
            if x.iter().any(|v| !v.is_finite()) {
                return Err(JglError::InvalidParameter(format!(
                    "class {} contains non-finite values",
                    k + 1
                )));
            }
        }
        Ok(ClassDataset { classes })
    }

    pub fn classes(&self) -> &[DMatrix<f64>] {
        &self.classes
    }

    pub fn dim(&self) -> usize {
        self.classes[0].ncols()
    }

    pub fn counts(&self) -> Vec<usize> {
        self.classes.iter().map(|x| x.nrows()).collect()
    }

    pub fn covariance_set(&self, center: bool) -> Result<CovarianceSet> {
        CovarianceSet::from_samples(&self.classes, center)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvPlan {
    pub folds: usize,
    pub grid: Vec<(f64, f64)>,
    pub seed: u64,
    pub kind: PenaltyKind,
    pub algorithm: Algorithm,
    pub center: bool,
}

impl CvPlan {
    pub fn validate(&self, data: &ClassDataset) -> Result<()> {
        if self.folds < 2 {
            return Err(JglError::Config(format!("need at least 2 folds, got {}", self.folds)));
        }
        if self.grid.is_empty() {
            return Err(JglError::Config("empty lambda grid".into()));
        }
        for &(l1, l2) in &self.grid {
            PenaltySpec::new(l1, l2, self.kind)?;
        }
        check_fold_count(data, self.folds)
    }
}

fn check_fold_count(data: &ClassDataset, folds: usize) -> Result<()> {
    for (k, n) in data.counts().into_iter().enumerate() {
        if folds > n {
            return Err(JglError::Config(format!(
                "{folds} folds exceed the {n} samples of class {}",
                k + 1
            )));
        }
    }
    Ok(())
}

/// `count` values from `min` to `max` evenly spaced in log scale.
pub fn log_spaced(count: usize, min: f64, max: f64) -> Result<Vec<f64>> {
    if count == 0 || !(min > 0.0 && max >= min && max.is_finite()) {
        return Err(JglError::InvalidParameter(format!(
            "log grid needs count >= 1 and 0 < min <= max, got {count}:{min}:{max}"
        )));
    }
    if count == 1 {
        return Ok(vec![min]);
    }
    let (a, b) = (min.ln(), max.ln());
    Ok((0..count)
        .map(|i| (a + (b - a) * i as f64 / (count - 1) as f64).exp())
        .collect())
}

/// Cartesian product, `lambda1` outer.
pub fn grid_product(lambda1: &[f64], lambda2: &[f64]) -> Vec<(f64, f64)> {
    lambda1
        .iter()
        .flat_map(|&a| lambda2.iter().map(move |&b| (a, b)))
        .collect()
}

/// Fold index of every sample, per class: shuffle with the seeded generator,
/// then deal round-robin.
pub fn make_folds(data: &ClassDataset, folds: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if folds < 2 {
        return Err(JglError::Config(format!("need at least 2 folds, got {folds}")));
    }
    check_fold_count(data, folds)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(data
        .counts()
        .into_iter()
        .map(|n| {
            let mut order: Vec<usize> = (0..n).collect();
            order.shuffle(&mut rng);
            let mut assign = vec![0; n];
            for (pos, &s) in order.iter().enumerate() {
                assign[s] = pos % folds;
            }
            assign
        })
        .collect())
}

fn select_rows(x: &DMatrix<f64>, rows: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), x.ncols(), |r, c| x[(rows[r], c)])
}

fn covariance_of(x: &DMatrix<f64>, center: bool) -> Result<SymMatrix> {
    if center {
        empirical_covariance(&center_columns(x))
    } else {
        empirical_covariance(x)
    }
}

/// Training set (all folds but `d`) and held-out covariances of fold `d`.
pub fn fold_split(
    data: &ClassDataset,
    assignments: &[Vec<usize>],
    d: usize,
    center: bool,
) -> Result<(CovarianceSet, Vec<SymMatrix>)> {
    let mut train = Vec::with_capacity(assignments.len());
    let mut test = Vec::with_capacity(assignments.len());
    for (x, assign) in data.classes().iter().zip(assignments) {
        let (held, kept): (Vec<usize>, Vec<usize>) = (0..x.nrows()).partition(|&s| assign[s] == d);
        train.push(select_rows(x, &kept));
        test.push(covariance_of(&select_rows(x, &held), center)?);
    }
    Ok((CovarianceSet::from_samples(&train, center)?, test))
}

/// `sum_k n_k (tr(S_k Theta_k) - logdet Theta_k)` with full-class counts `n_k`.
pub fn held_out_score(theta: &PrecisionSet, test: &[SymMatrix], counts: &[usize]) -> Result<f64> {
    let mut score = 0.0;
    for ((t, s), &n) in theta.blocks().iter().zip(test).zip(counts) {
        let factor = CholeskyFactor::new(t).ok_or_else(|| JglError::not_pd("held-out score"))?;
        score += n as f64 * (s.dot(t) - factor.log_det());
    }
    Ok(score)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvScore {
    pub lambda1: f64,
    pub lambda2: f64,
    /// Sum over folds; `+inf` when any fold fit failed.
    pub score: f64,
    pub fold_scores: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct CvResult {
    /// One entry per grid point, in grid order.
    pub scores: Vec<CvScore>,
    pub best: (f64, f64),
    pub best_index: usize,
    /// `fold_assignments[k][s]` is the test fold of sample `s` of class `k`.
    pub fold_assignments: Vec<Vec<usize>>,
    /// Per-fold estimates at the best grid point.
    pub best_fits: Vec<PrecisionSet>,
}

/// Index of the smallest score; ties go to the smallest `lambda1`, then the
/// smallest `lambda2`.
pub fn best_index(scores: &[CvScore]) -> Option<usize> {
    (0..scores.len()).min_by(|&a, &b| {
        let (x, y) = (&scores[a], &scores[b]);
        x.score
            .total_cmp(&y.score)
            .then(x.lambda1.total_cmp(&y.lambda1))
            .then(x.lambda2.total_cmp(&y.lambda2))
    })
}

pub fn cross_validate(data: &ClassDataset, plan: &CvPlan, opts: &SolverOptions) -> Result<CvResult> {
    plan.validate(data)?;
    opts.validate()?;
    let assignments = make_folds(data, plan.folds, plan.seed)?;
    let splits = (0..plan.folds)
        .map(|d| fold_split(data, &assignments, d, plan.center))
        .collect::<Result<Vec<_>>>()?;
    let counts = data.counts();

    let tasks: Vec<(usize, usize)> = (0..plan.grid.len())
        .flat_map(|g| (0..plan.folds).map(move |d| (g, d)))
        .collect();
    let outcomes: Vec<Option<(f64, PrecisionSet)>> = tasks
        .par_iter()
        .map(|&(g, d)| {
            let (l1, l2) = plan.grid[g];
            let spec = PenaltySpec::new(l1, l2, plan.kind).ok()?;
            let (train, test) = &splits[d];
            let fitted = fit(plan.algorithm, train, &spec, opts, None).ok()?;
            if fitted.report.status == Status::NumericalFailure {
                return None;
            }
            let score = held_out_score(&fitted.estimate, test, &counts).ok()?;
            score.is_finite().then_some((score, fitted.estimate))
        })
        .collect();

    let mut scores = Vec::with_capacity(plan.grid.len());
    for (g, &(l1, l2)) in plan.grid.iter().enumerate() {
        let row = &outcomes[g * plan.folds..(g + 1) * plan.folds];
        let fold_scores: Vec<f64> = row
            .iter()
            .map(|o| o.as_ref().map_or(f64::INFINITY, |(s, _)| *s))
            .collect();
        scores.push(CvScore {
            lambda1: l1,
            lambda2: l2,
            score: fold_scores.iter().sum(),
            fold_scores,
        });
    }

    let best_index = best_index(&scores).expect("grid is non-empty");
    let best_fits = outcomes[best_index * plan.folds..(best_index + 1) * plan.folds]
        .iter()
        .filter_map(|o| o.as_ref().map(|(_, t)| t.clone()))
        .collect();
    Ok(CvResult {
        best: (scores[best_index].lambda1, scores[best_index].lambda2),
        best_index,
        scores,
        fold_assignments: assignments,
        best_fits,
    })
}
