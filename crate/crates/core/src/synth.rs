//! Synthetic multi-class Gaussian graphical models.
//!
//! Construction: a common Erdős–Rényi support shared by every class plus
//! private edges per class, magnitudes uniform in `±[lo, hi]`, a diagonal
//! shift to `|lambda_min| + margin`, then a congruence rescale so every
//! class covariance has unit diagonal. A class whose rescaled precision has
//! smallest eigenvalue below [`MIN_EIGENVALUE`] makes the spec infeasible.

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{JglError, Result};
use crate::matrix::{extreme_eigenvalues, invert_pd, CholeskyFactor, SymMatrix};
use crate::select::ClassDataset;
use crate::solver::PrecisionSet;

/// Smallest eigenvalue every generated precision matrix must keep.
pub const MIN_EIGENVALUE: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub p: usize,
    pub classes: usize,
    /// Total samples `N` across classes.
    pub n_total: usize,
    /// Relative class sizes; normalized internally.
    pub class_shares: Vec<f64>,
    /// Fraction of the `p (p - 1) / 2` possible edges present in each class.
    pub edge_density: f64,
    /// Fraction of each class's edges shared by all classes.
    pub common_fraction: f64,
    /// Off-diagonal magnitudes are drawn from `±[lo, hi]`.
    pub signal_range: (f64, f64),
    /// Added on top of `|lambda_min|` of the off-diagonal part.
    pub diagonal_margin: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            p: 50,
            classes: 2,
            n_total: 600,
            class_shares: vec![0.5, 0.5],
            edge_density: 0.1,
            common_fraction: 0.5,
            signal_range: (0.3, 0.6),
            diagonal_margin: 1.0,
            seed: 1,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(JglError::InvalidParameter(m));
        if self.p < 2 {
            return bad(format!("p must be at least 2, got {}", self.p));
        }
        if self.classes == 0 {
            return bad("at least one class is required".into());
        }
        if self.class_shares.len() != self.classes {
            return bad(format!(
                "{} class shares for {} classes",
                self.class_shares.len(),
                self.classes
            ));
        }
        if self.class_shares.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
            return bad("class shares must be positive".into());
        }
        if !(self.edge_density > 0.0 && self.edge_density < 1.0) {
            return bad(format!("edge density must lie in (0, 1), got {}", self.edge_density));
        }
        if !(0.0..=1.0).contains(&self.common_fraction) {
            return bad(format!(
                "common fraction must lie in [0, 1], got {}",
                self.common_fraction
            ));
        }
        let (lo, hi) = self.signal_range;
        if !(lo > 0.0 && hi >= lo && hi.is_finite()) {
            return bad(format!("signal range must satisfy 0 < lo <= hi, got ({lo}, {hi})"));
        }
        if !(self.diagonal_margin > 0.0) {
            return bad(format!(
                "diagonal margin must be positive, got {}",
                self.diagonal_margin
            ));
        }
        Ok(())
    }

    /// Per-class sample counts: floor of the share, remainder to the
    /// largest fractional parts.
    pub fn class_counts(&self) -> Result<Vec<usize>> {
        let total: f64 = self.class_shares.iter().sum();
        let exact: Vec<f64> = self
            .class_shares
            .iter()
            .map(|s| s / total * self.n_total as f64)
            .collect();
        let mut counts: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
        let mut rest = self.n_total - counts.iter().sum::<usize>();
        let mut order: Vec<usize> = (0..counts.len()).collect();
        order.sort_by(|&a, &b| (exact[b] - exact[b].floor()).total_cmp(&(exact[a] - exact[a].floor())));
        for &k in order.iter().cycle() {
            if rest == 0 {
                break;
            }
            counts[k] += 1;
            rest -= 1;
        }
        if let Some(k) = counts.iter().position(|&n| n == 0) {
            return Err(JglError::InvalidParameter(format!(
                "class {} receives no samples",
                k + 1
            )));
        }
        Ok(counts)
    }
}

/// Generated model: true precision matrices, their edge sets and samples.
#[derive(Debug, Clone)]
pub struct GroundTruth {
    pub spec: SyntheticSpec,
    pub theta: PrecisionSet,
    /// Per-class `(i, j)` pairs with `i < j`, 0-based, sorted.
    pub edges: Vec<Vec<(usize, usize)>>,
    pub samples: ClassDataset,
}

pub fn generate(spec: &SyntheticSpec) -> Result<GroundTruth> {
    spec.validate()?;
    let counts = spec.class_counts()?;
    let p = spec.p;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    let mut pairs: Vec<(usize, usize)> = Vec::with_capacity(p * (p - 1) / 2);
    for j in 0..p {
        for i in 0..j {
            pairs.push((i, j));
        }
    }
    let per_class = ((spec.edge_density * pairs.len() as f64).round() as usize).min(pairs.len());
    let n_common = (spec.common_fraction * per_class as f64).round() as usize;
    pairs.shuffle(&mut rng);
    let (common, others) = pairs.split_at(n_common);
    let (lo, hi) = spec.signal_range;
    let draw = |rng: &mut ChaCha8Rng| -> f64 {
        let magnitude = rng.random_range(lo..=hi);
        if rng.random_bool(0.5) {
            magnitude
        } else {
            -magnitude
        }
    };
    let common_values: Vec<f64> = common.iter().map(|_| draw(&mut rng)).collect();

    let mut thetas = Vec::with_capacity(spec.classes);
    let mut edges = Vec::with_capacity(spec.classes);
    for k in 0..spec.classes {
        let mut off = DMatrix::zeros(p, p);
        for (&(i, j), &v) in common.iter().zip(&common_values) {
            off[(i, j)] = v;
            off[(j, i)] = v;
        }
        let mut private = others.to_vec();
        private.shuffle(&mut rng);
        for &(i, j) in private.iter().take(per_class - n_common) {
            let v = draw(&mut rng);
            off[(i, j)] = v;
            off[(j, i)] = v;
        }
        let off = SymMatrix::symmetrize(off);
        let (lam_min, _) = extreme_eigenvalues(&off);
        let shift = lam_min.min(0.0).abs() + spec.diagonal_margin;
        let shifted = off.add_scaled(shift, &SymMatrix::identity(p));
        let theta = rescale_to_unit_variance(&shifted)?;
        let (lam_min, _) = extreme_eigenvalues(&theta);
        if lam_min < MIN_EIGENVALUE {
            return Err(JglError::Infeasible(format!(
                "class {}: smallest eigenvalue {lam_min:.4} after rescaling is below {MIN_EIGENVALUE}; \
                 lower the edge density or signal, or raise the diagonal margin",
                k + 1
            )));
        }
        let mut class_edges: Vec<(usize, usize)> = (0..p)
            .flat_map(|j| (0..j).map(move |i| (i, j)))
            .filter(|&(i, j)| theta.get(i, j) != 0.0)
            .collect();
        class_edges.sort();
        edges.push(class_edges);
        thetas.push(theta);
    }

    let mut samples = Vec::with_capacity(spec.classes);
    for (theta, &n) in thetas.iter().zip(&counts) {
        samples.push(draw_samples(theta, n, &mut rng)?);
    }

    Ok(GroundTruth {
        spec: spec.clone(),
        theta: PrecisionSet::new(thetas)?,
        edges,
        samples: ClassDataset::new(samples)?,
    })
}

/// `D^{1/2} Theta D^{1/2}` with `D = diag(Theta^-1)`, so the implied
/// covariance has unit diagonal.
fn rescale_to_unit_variance(theta: &SymMatrix) -> Result<SymMatrix> {
    let sigma = invert_pd(theta)?;
    let scale: Vec<f64> = sigma.diagonal().iter().map(|v| v.sqrt()).collect();
    Ok(SymMatrix::from_upper_fn(theta.dim(), |i, j| {
        theta.get(i, j) * scale[i] * scale[j]
    }))
}

/// Rows `x = L^{-T} z` with `Theta = L L^T` and `z` standard normal, so
/// `cov(x) = Theta^-1`.
fn draw_samples(theta: &SymMatrix, n: usize, rng: &mut ChaCha8Rng) -> Result<DMatrix<f64>> {
    let p = theta.dim();
    let factor = CholeskyFactor::new(theta).ok_or_else(|| JglError::not_pd("sampling"))?;
    let z = DMatrix::from_fn(p, n, |_, _| rng.sample::<f64, _>(StandardNormal));
    let x = factor
        .lower()
        .transpose()
        .solve_upper_triangular(&z)
        .expect("Cholesky factor has a positive diagonal");
    Ok(x.transpose())
}
