//! Dense symmetric matrix kernels.
//!
//! Everything the solvers touch is symmetric: covariances, precision
//! iterates, gradients and prox inputs. [`SymMatrix`] enforces that on
//! construction by averaging a matrix with its transpose, so rounding drift
//! from repeated updates never accumulates into asymmetry.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::Serialize;

use crate::error::{JglError, Result};

/// Relative pivot threshold below which a Cholesky factorization is
/// declared to have failed.
pub const PIVOT_TOLERANCE: f64 = 1e-12;

/// A dense, exactly symmetric `p x p` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix(DMatrix<f64>);

impl SymMatrix {
    /// Builds a symmetric matrix from `(a + a^T) / 2`.
    pub fn new(a: DMatrix<f64>) -> Result<Self> {
        if a.nrows() != a.ncols() {
            return Err(JglError::Dimension(format!(
                "expected a square matrix, got {}x{}",
                a.nrows(),
                a.ncols()
            )));
        }
        if a.nrows() == 0 {
            return Err(JglError::Dimension("matrix must be at least 1x1".into()));
        }
        Ok(Self::symmetrize(a))
    }

    /// Symmetrizes a square matrix the caller already knows to be non-empty.
    pub(crate) fn symmetrize(mut a: DMatrix<f64>) -> Self {
        let p = a.nrows();
        for j in 0..p {
            for i in (j + 1)..p {
                let avg = 0.5 * (a[(i, j)] + a[(j, i)]);
                a[(i, j)] = avg;
                a[(j, i)] = avg;
            }
        }
        SymMatrix(a)
    }

    /// Builds a matrix from an entry function; only `i <= j` entries are
    /// queried and mirrored.
    pub fn from_upper_fn(p: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        assert!(p > 0, "dimension must be positive");
        let mut a = DMatrix::zeros(p, p);
        for j in 0..p {
            for i in 0..=j {
                let v = f(i, j);
                a[(i, j)] = v;
                a[(j, i)] = v;
            }
        }
        SymMatrix(a)
    }

    pub fn identity(p: usize) -> Self {
        assert!(p > 0, "dimension must be positive");
        SymMatrix(DMatrix::identity(p, p))
    }

    pub fn zeros(p: usize) -> Self {
        assert!(p > 0, "dimension must be positive");
        SymMatrix(DMatrix::zeros(p, p))
    }

    pub fn from_diagonal(diag: &[f64]) -> Self {
        assert!(!diag.is_empty(), "dimension must be positive");
        let mut a = DMatrix::zeros(diag.len(), diag.len());
        for (i, &d) in diag.iter().enumerate() {
            a[(i, i)] = d;
        }
        SymMatrix(a)
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.0[(i, j)]
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.0
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.dim()).map(|i| self.0[(i, i)]).collect()
    }

    /// `self + alpha * other`.
    pub fn add_scaled(&self, alpha: f64, other: &SymMatrix) -> SymMatrix {
        SymMatrix(&self.0 + &other.0 * alpha)
    }

    pub fn sub(&self, other: &SymMatrix) -> SymMatrix {
        SymMatrix(&self.0 - &other.0)
    }

    pub fn scale(&self, alpha: f64) -> SymMatrix {
        SymMatrix(&self.0 * alpha)
    }

    /// Frobenius inner product `<A, B> = trace(A B)` for symmetric operands.
    pub fn dot(&self, other: &SymMatrix) -> f64 {
        self.0.dot(&other.0)
    }

    pub fn frobenius(&self) -> f64 {
        self.0.norm()
    }

    pub fn max_abs(&self) -> f64 {
        self.0.amax()
    }

    /// Sum of absolute off-diagonal entries (both triangles).
    pub fn off_diagonal_l1(&self) -> f64 {
        let p = self.dim();
        let mut total = 0.0;
        for j in 0..p {
            for i in 0..p {
                if i != j {
                    total += self.0[(i, j)].abs();
                }
            }
        }
        total
    }

    /// Number of nonzero entries strictly above the diagonal.
    pub fn upper_nonzeros(&self, threshold: f64) -> usize {
        let p = self.dim();
        let mut count = 0;
        for j in 0..p {
            for i in 0..j {
                if self.0[(i, j)].abs() > threshold {
                    count += 1;
                }
            }
        }
        count
    }
}

/// Lower Cholesky factor of a positive definite matrix.
#[derive(Debug, Clone)]
pub struct CholeskyFactor {
    lower: DMatrix<f64>,
}

impl CholeskyFactor {
    /// Factors `a`, returning `None` when a pivot is non-positive or below
    /// `PIVOT_TOLERANCE * max(diag(a))`.
    pub fn new(a: &SymMatrix) -> Option<Self> {
        let max_diag = a.diagonal().into_iter().fold(f64::NEG_INFINITY, f64::max);
        if !(max_diag > 0.0) || !max_diag.is_finite() {
            return None;
        }
        let floor = PIVOT_TOLERANCE * max_diag;
        let chol = nalgebra::Cholesky::new(a.0.clone())?;
        let lower = chol.unpack();
        let p = lower.nrows();
        for j in 0..p {
            let l = lower[(j, j)];
            if !l.is_finite() || l * l <= floor {
                return None;
            }
        }
        Some(CholeskyFactor { lower })
    }

    pub fn lower(&self) -> &DMatrix<f64> {
        &self.lower
    }

    pub fn log_det(&self) -> f64 {
        2.0 * self.lower.diagonal().iter().map(|l| l.ln()).sum::<f64>()
    }

    pub fn inverse(&self) -> SymMatrix {
        let p = self.lower.nrows();
        let linv = self
            .lower
            .solve_lower_triangular(&DMatrix::identity(p, p))
            .expect("Cholesky factor has a positive diagonal");
        SymMatrix::symmetrize(linv.tr_mul(&linv))
    }
}

/// Outcome of a Cholesky-based log-determinant probe.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogDet {
    /// `log det A`; NaN when `is_pd` is false.
    pub value: f64,
    pub is_pd: bool,
}

/// Log-determinant via Cholesky. Failure to factor is reported through
/// `is_pd = false`, not as an error: backtracking probes indefinite
/// candidates routinely.
pub fn cholesky_logdet(a: &SymMatrix) -> LogDet {
    match CholeskyFactor::new(a) {
        Some(f) => LogDet {
            value: f.log_det(),
            is_pd: true,
        },
        None => LogDet {
            value: f64::NAN,
            is_pd: false,
        },
    }
}

pub fn invert_pd(a: &SymMatrix) -> Result<SymMatrix> {
    CholeskyFactor::new(a)
        .map(|f| f.inverse())
        .ok_or_else(|| JglError::not_pd("invert_pd"))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Norms {
    pub frobenius: f64,
    pub spectral: f64,
    pub max_abs: f64,
}

pub fn norms(a: &SymMatrix) -> Norms {
    let (lo, hi) = extreme_eigenvalues(a);
    Norms {
        frobenius: a.frobenius(),
        spectral: lo.abs().max(hi.abs()),
        max_abs: a.max_abs(),
    }
}

/// Smallest and largest eigenvalues from a dense symmetric eigensolve.
pub fn extreme_eigenvalues(a: &SymMatrix) -> (f64, f64) {
    let eig = SymmetricEigen::new(a.0.clone());
    eig.eigenvalues
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        })
}

/// `(1/n) * sum_i x_i^T x_i` over the rows of `samples`, which are assumed
/// to be centered already.
pub fn empirical_covariance(samples: &DMatrix<f64>) -> Result<SymMatrix> {
    let n = samples.nrows();
    if n == 0 || samples.ncols() == 0 {
        return Err(JglError::Dimension(format!(
            "empirical covariance needs at least one sample and one variable, got {}x{}",
            n,
            samples.ncols()
        )));
    }
    let gram = samples.tr_mul(samples) / n as f64;
    Ok(SymMatrix::symmetrize(gram))
}

/// Subtracts the column means of `samples`.
pub fn center_columns(samples: &DMatrix<f64>) -> DMatrix<f64> {
    let n = samples.nrows();
    let mut out = samples.clone();
    if n == 0 {
        return out;
    }
    for j in 0..samples.ncols() {
        let mean = samples.column(j).sum() / n as f64;
        out.column_mut(j).add_scalar_mut(-mean);
    }
    out
}

/// Empirical covariance matrices of `K` classes together with their sample
/// counts.
#[derive(Debug, Clone)]
pub struct CovarianceSet {
    covs: Vec<SymMatrix>,
    counts: Vec<usize>,
    diag_defined: bool,
}

impl CovarianceSet {
    pub fn new(covs: Vec<SymMatrix>, counts: Vec<usize>) -> Result<Self> {
        if covs.is_empty() {
            return Err(JglError::Dimension("at least one class is required".into()));
        }
        if covs.len() != counts.len() {
            return Err(JglError::Dimension(format!(
                "{} covariance matrices but {} sample counts",
                covs.len(),
                counts.len()
            )));
        }
        let p = covs[0].dim();
        if let Some((k, c)) = covs.iter().enumerate().find(|(_, c)| c.dim() != p) {
            return Err(JglError::Dimension(format!(
                "class {} has dimension {}, expected {}",
                k + 1,
                c.dim(),
                p
            )));
        }
        if let Some(k) = counts.iter().position(|&n| n == 0) {
            return Err(JglError::InvalidParameter(format!(
                "class {} has zero samples",
                k + 1
            )));
        }
        let diag_defined = covs.iter().all(|s| s.diagonal().iter().all(|&d| d > 0.0));
        Ok(CovarianceSet {
            covs,
            counts,
            diag_defined,
        })
    }

    /// Covariances of each class's samples, centered first when requested.
    pub fn from_samples(classes: &[DMatrix<f64>], center: bool) -> Result<Self> {
        let covs = classes
            .iter()
            .map(|x| {
                if center {
                    empirical_covariance(&center_columns(x))
                } else {
                    empirical_covariance(x)
                }
            })
            .collect::<Result<Vec<_>>>()?;
        let counts = classes.iter().map(|x| x.nrows()).collect();
        CovarianceSet::new(covs, counts)
    }

    pub fn classes(&self) -> usize {
        self.covs.len()
    }

    pub fn dim(&self) -> usize {
        self.covs[0].dim()
    }

    pub fn covariances(&self) -> &[SymMatrix] {
        &self.covs
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    pub fn total_samples(&self) -> usize {
        self.counts.iter().sum()
    }

    /// True when every diagonal entry of every covariance is positive.
    pub fn diag_defined(&self) -> bool {
        self.diag_defined
    }

    pub(crate) fn require_positive_diagonal(&self) -> Result<()> {
        if self.diag_defined {
            Ok(())
        } else {
            Err(JglError::InvalidParameter(
                "every covariance matrix needs a strictly positive diagonal".into(),
            ))
        }
    }
}
