//! Exact proximal operators for the joint penalties.
//!
//! The prox of `eta * g` separates over matrix positions `(i, j)`: each
//! position couples only the `K` values `theta_{1,i,j} .. theta_{K,i,j}`.
//! Those scalar groups are solved in closed form (group penalty) or exactly
//! by an order-preserving reduction to isotonic regression (fused penalty).

use serde::{Deserialize, Serialize};

use crate::error::{JglError, Result};
use crate::matrix::SymMatrix;

/// Which cross-class coupling penalty to apply.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PenaltyKind {
    /// `lambda2 * sum_{k != l} sum_{i,j} |theta_{k,i,j} - theta_{l,i,j}|`
    Fused,
    /// `lambda2 * sum_{i != j} sqrt(sum_k theta_{k,i,j}^2)`
    Group,
}

impl std::str::FromStr for PenaltyKind {
    type Err = JglError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fused" => Ok(PenaltyKind::Fused),
            "group" => Ok(PenaltyKind::Group),
            other => Err(JglError::InvalidParameter(format!(
                "unknown penalty kind '{other}' (expected fused or group)"
            ))),
        }
    }
}

impl std::fmt::Display for PenaltyKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            PenaltyKind::Fused => "fused",
            PenaltyKind::Group => "group",
        })
    }
}

/// Penalty weights and kind. Both weights are strictly positive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PenaltySpec {
    pub lambda1: f64,
    pub lambda2: f64,
    pub kind: PenaltyKind,
}

impl PenaltySpec {
    pub fn new(lambda1: f64, lambda2: f64, kind: PenaltyKind) -> Result<Self> {
        if !(lambda1 > 0.0 && lambda1.is_finite()) {
            return Err(JglError::InvalidParameter(format!(
                "lambda1 must be positive and finite, got {lambda1}"
            )));
        }
        if !(lambda2 > 0.0 && lambda2.is_finite()) {
            return Err(JglError::InvalidParameter(format!(
                "lambda2 must be positive and finite, got {lambda2}"
            )));
        }
        Ok(PenaltySpec {
            lambda1,
            lambda2,
            kind,
        })
    }

    pub fn fused(lambda1: f64, lambda2: f64) -> Result<Self> {
        Self::new(lambda1, lambda2, PenaltyKind::Fused)
    }

    pub fn group(lambda1: f64, lambda2: f64) -> Result<Self> {
        Self::new(lambda1, lambda2, PenaltyKind::Group)
    }

    /// Value of the non-smooth part `g(Theta)`.
    pub fn value(&self, thetas: &[SymMatrix]) -> f64 {
        let sparsity: f64 = thetas.iter().map(SymMatrix::off_diagonal_l1).sum();
        self.lambda1 * sparsity + self.coupling_value(thetas)
    }

    /// The cross-class term `P(Theta)` alone.
    pub fn coupling_value(&self, thetas: &[SymMatrix]) -> f64 {
        let k = thetas.len();
        if k == 0 {
            return 0.0;
        }
        let p = thetas[0].dim();
        let mut total = 0.0;
        match self.kind {
            PenaltyKind::Fused => {
                // ordered pairs: each unordered pair counted twice
                for a in 0..k {
                    for b in (a + 1)..k {
                        total += 2.0 * thetas[a].sub(&thetas[b]).as_matrix().abs().sum();
                    }
                }
            }
            PenaltyKind::Group => {
                for j in 0..p {
                    for i in 0..p {
                        if i != j {
                            let sq: f64 = thetas.iter().map(|t| t.get(i, j).powi(2)).sum();
                            total += sq.sqrt();
                        }
                    }
                }
            }
        }
        self.lambda2 * total
    }
}

/// One scalar group of the separable prox problem.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarGroup {
    pub a: Vec<f64>,
    pub alpha1: f64,
    pub alpha2: f64,
}

impl ScalarGroup {
    pub fn new(a: Vec<f64>, alpha1: f64, alpha2: f64) -> Result<Self> {
        if a.is_empty() {
            return Err(JglError::Dimension("scalar group needs K >= 1".into()));
        }
        if !(alpha1 >= 0.0) || !(alpha2 >= 0.0) {
            return Err(JglError::InvalidParameter(format!(
                "thresholds must be nonnegative, got alpha1={alpha1}, alpha2={alpha2}"
            )));
        }
        Ok(ScalarGroup { a, alpha1, alpha2 })
    }
}

#[inline]
pub fn soft_threshold(x: f64, lambda: f64) -> f64 {
    if x > lambda {
        x - lambda
    } else if x < -lambda {
        x + lambda
    } else {
        0.0
    }
}

/// Exact minimizer of
/// `1/2 sum_k (theta_k - a_k)^2 + alpha1 sum_k |theta_k| + alpha2 sum_{k != l} |theta_k - theta_l|`.
pub fn flsa_group(g: &ScalarGroup) -> Vec<f64> {
    flsa(&g.a, g.alpha1, g.alpha2)
}

pub(crate) fn flsa(a: &[f64], alpha1: f64, alpha2: f64) -> Vec<f64> {
    let mut theta = fuse_all_pairs(a, alpha2);
    if alpha1 > 0.0 {
        for t in &mut theta {
            *t = soft_threshold(*t, alpha1);
        }
    }
    theta
}

/// Solves the `alpha1 = 0` all-pairs fusion problem.
///
/// The minimizer preserves the order of `a`, and on that ordered cone the
/// penalty is linear: the gap between the `i`-th and `(i+1)`-th sorted
/// values is crossed by `i * (K - i)` unordered pairs, each weighted
/// `2 * alpha2`. Folding that linear term into the data turns the problem
/// into isotonic regression, solved exactly by pool-adjacent-violators.
fn fuse_all_pairs(a: &[f64], alpha2: f64) -> Vec<f64> {
    let k = a.len();
    if k <= 1 || alpha2 == 0.0 {
        return a.to_vec();
    }
    let mut order: Vec<usize> = (0..k).collect();
    // stable: ties keep class order
    order.sort_by(|&x, &y| a[x].total_cmp(&a[y]));

    let gap_weight = |i: usize| -> f64 {
        if i == 0 || i == k {
            0.0
        } else {
            (i * (k - i)) as f64 * 2.0 * alpha2
        }
    };
    let shifted: Vec<f64> = (0..k)
        .map(|pos| a[order[pos]] + gap_weight(pos + 1) - gap_weight(pos))
        .collect();
    let fitted = isotonic_increasing(&shifted);

    let mut out = vec![0.0; k];
    for (pos, &idx) in order.iter().enumerate() {
        out[idx] = fitted[pos];
    }
    out
}

/// Unit-weight least-squares fit constrained to be nondecreasing.
fn isotonic_increasing(y: &[f64]) -> Vec<f64> {
    // blocks of (sum, count)
    let mut blocks: Vec<(f64, usize)> = Vec::with_capacity(y.len());
    for &v in y {
        blocks.push((v, 1));
        while blocks.len() >= 2 {
            let (s1, c1) = blocks[blocks.len() - 1];
            let (s0, c0) = blocks[blocks.len() - 2];
            if s0 / c0 as f64 > s1 / c1 as f64 {
                blocks.pop();
                let last = blocks.len() - 1;
                blocks[last] = (s0 + s1, c0 + c1);
            } else {
                break;
            }
        }
    }
    let mut out = Vec::with_capacity(y.len());
    for (s, c) in blocks {
        let mean = s / c as f64;
        out.extend(std::iter::repeat_n(mean, c));
    }
    out
}

/// Closed-form minimizer of
/// `1/2 sum_k (theta_k - a_k)^2 + alpha1 sum_k |theta_k| + alpha2 ||theta||_2`.
pub fn group_shrink(g: &ScalarGroup) -> Vec<f64> {
    group(&g.a, g.alpha1, g.alpha2)
}

pub(crate) fn group(a: &[f64], alpha1: f64, alpha2: f64) -> Vec<f64> {
    let mut s: Vec<f64> = a.iter().map(|&x| soft_threshold(x, alpha1)).collect();
    if alpha2 == 0.0 {
        return s;
    }
    let norm = s.iter().map(|x| x * x).sum::<f64>().sqrt();
    let factor = if norm > alpha2 { 1.0 - alpha2 / norm } else { 0.0 };
    for x in &mut s {
        *x *= factor;
    }
    s
}

/// `prox_{eta g}` applied to `K` stacked symmetric matrices.
pub fn prox_penalty(a: &[SymMatrix], eta: f64, spec: &PenaltySpec) -> Vec<SymMatrix> {
    let l1 = eta * spec.lambda1;
    let l2 = eta * spec.lambda2;
    match spec.kind {
        PenaltyKind::Fused => prox_elementwise(a, |buf, diagonal| {
            flsa(buf, if diagonal { 0.0 } else { l1 }, l2)
        }),
        PenaltyKind::Group => prox_elementwise(a, |buf, diagonal| {
            if diagonal {
                buf.to_vec()
            } else {
                group(buf, l1, l2)
            }
        }),
    }
}

/// Soft-thresholds off-diagonal entries of a single matrix.
pub fn soft_threshold_offdiag(a: &SymMatrix, lambda: f64) -> SymMatrix {
    SymMatrix::from_upper_fn(a.dim(), |i, j| {
        let v = a.get(i, j);
        if i == j {
            v
        } else {
            soft_threshold(v, lambda)
        }
    })
}

fn prox_elementwise(
    a: &[SymMatrix],
    mut solve: impl FnMut(&[f64], bool) -> Vec<f64>,
) -> Vec<SymMatrix> {
    let k = a.len();
    let p = a[0].dim();
    let mut out: Vec<nalgebra::DMatrix<f64>> = vec![nalgebra::DMatrix::zeros(p, p); k];
    let mut buf = vec![0.0; k];
    for j in 0..p {
        for i in 0..=j {
            for (b, m) in buf.iter_mut().zip(a) {
                *b = m.get(i, j);
            }
            let theta = solve(&buf, i == j);
            for (m, v) in out.iter_mut().zip(theta) {
                m[(i, j)] = v;
                m[(j, i)] = v;
            }
        }
    }
    out.into_iter().map(SymMatrix::symmetrize).collect()
}
