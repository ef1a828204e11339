//! Edge-recovery and convergence metrics against a known truth.

use serde::{Deserialize, Serialize};

use crate::error::{JglError, Result};
use crate::solver::{PrecisionSet, SolverReport};

/// Confusion counts over the upper triangles of all classes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct RocCounts {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub tn: usize,
}

impl RocCounts {
    pub fn total(&self) -> usize {
        self.tp + self.fp + self.fn_ + self.tn
    }

    pub fn selected(&self) -> usize {
        self.tp + self.fp
    }
}

fn check_dims(truth: &PrecisionSet, estimate: &PrecisionSet) -> Result<()> {
    if truth.classes() != estimate.classes() || truth.dim() != estimate.dim() {
        return Err(JglError::Dimension(format!(
            "truth is {} x {}x{}, estimate is {} x {}x{}",
            truth.classes(),
            truth.dim(),
            truth.dim(),
            estimate.classes(),
            estimate.dim(),
            estimate.dim()
        )));
    }
    Ok(())
}

/// An estimated edge is selected when `|theta_hat_ij| > threshold`; a true
/// edge is any nonzero off-diagonal entry of the truth.
pub fn roc_counts(truth: &PrecisionSet, estimate: &PrecisionSet, threshold: f64) -> Result<RocCounts> {
    check_dims(truth, estimate)?;
    if !(threshold >= 0.0) {
        return Err(JglError::InvalidParameter(format!(
            "threshold must be nonnegative, got {threshold}"
        )));
    }
    let p = truth.dim();
    let mut c = RocCounts::default();
    for (t, e) in truth.blocks().iter().zip(estimate.blocks()) {
        for j in 1..p {
            for i in 0..j {
                let edge = t.get(i, j) != 0.0;
                let picked = e.get(i, j).abs() > threshold;
                match (edge, picked) {
                    (true, true) => c.tp += 1,
                    (false, true) => c.fp += 1,
                    (true, false) => c.fn_ += 1,
                    (false, false) => c.tn += 1,
                }
            }
        }
    }
    Ok(c)
}

/// `(FP, TP)` for each fit of a ladder, in the given order.
pub fn roc_curve(truth: &PrecisionSet, fits: &[PrecisionSet], threshold: f64) -> Result<Vec<(usize, usize)>> {
    fits.iter()
        .map(|f| roc_counts(truth, f, threshold).map(|c| (c.fp, c.tp)))
        .collect()
}

/// Mean squared off-diagonal error, `2 / (K p (p - 1)) sum_k sum_{i<j} (hat - true)^2`.
pub fn mse(truth: &PrecisionSet, estimate: &PrecisionSet) -> Result<f64> {
    check_dims(truth, estimate)?;
    let p = truth.dim();
    if p < 2 {
        return Ok(0.0);
    }
    let mut sum = 0.0;
    for (t, e) in truth.blocks().iter().zip(estimate.blocks()) {
        for j in 1..p {
            for i in 0..j {
                let d = e.get(i, j) - t.get(i, j);
                sum += d * d;
            }
        }
    }
    Ok(2.0 * sum / (truth.classes() * p * (p - 1)) as f64)
}

/// `(t, log10(F_t - F*))` for every iterate whose gap exceeds round-off
/// relative to `F*`.
pub fn convergence_trace(report: &SolverReport, fstar: f64) -> Vec<(usize, f64)> {
    log_gap_trace(&report.objective_trace, fstar)
}

/// [`convergence_trace`] over a bare objective sequence.
pub fn log_gap_trace(objectives: &[f64], fstar: f64) -> Vec<(usize, f64)> {
    let slack = 1e-12 * (1.0 + fstar.abs());
    objectives
        .iter()
        .enumerate()
        .filter_map(|(t, &f)| {
            let gap = f - fstar;
            (gap > slack).then(|| (t, gap.log10()))
        })
        .collect()
}

/// Least-squares `R^2` of a line through `(x, y)` points.
pub fn linear_fit_r2(points: &[(usize, f64)]) -> Option<f64> {
    let n = points.len();
    if n < 3 {
        return None;
    }
    let nf = n as f64;
    let mx = points.iter().map(|p| p.0 as f64).sum::<f64>() / nf;
    let my = points.iter().map(|p| p.1).sum::<f64>() / nf;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for &(x, y) in points {
        let (dx, dy) = (x as f64 - mx, y - my);
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some(sxy * sxy / (sxx * syy))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::SymMatrix;
    use crate::solver::SolverReport;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_sparse(rng: &mut ChaCha8Rng, k: usize, p: usize, density: f64) -> PrecisionSet {
        let blocks = (0..k)
            .map(|_| {
                SymMatrix::from_upper_fn(p, |i, j| {
                    if i == j {
                        1.0
                    } else if rng.random_bool(density) {
                        rng.random_range(-1.0..1.0)
                    } else {
                        0.0
                    }
                })
            })
            .collect();
        PrecisionSet::new(blocks).unwrap()
    }

    #[test]
    fn exact_support_has_no_errors() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let t = random_sparse(&mut rng, 2, 8, 0.3);
        let c = roc_counts(&t, &t, 0.0).unwrap();
        assert_eq!((c.fp, c.fn_), (0, 0));
        assert_eq!(c.total(), 2 * 8 * 7 / 2);
    }

    #[test]
    fn dense_estimate_selects_everything() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let t = random_sparse(&mut rng, 3, 6, 0.4);
        let dense = PrecisionSet::new(vec![SymMatrix::from_upper_fn(6, |_, _| 0.5); 3]).unwrap();
        let c = roc_counts(&t, &dense, 0.0).unwrap();
        let edges: usize = t.blocks().iter().map(|b| b.upper_nonzeros(0.0)).sum();
        assert_eq!(c.tp, edges);
        assert_eq!(c.fp, 3 * 15 - edges);
    }

    #[test]
    fn counts_match_loop_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let t = random_sparse(&mut rng, 2, 7, 0.3);
            let e = random_sparse(&mut rng, 2, 7, 0.5);
            let thr = rng.random_range(0.0..0.5);
            let (mut tp, mut fp, mut fnn, mut tn) = (0, 0, 0, 0);
            for k in 0..2 {
                for i in 0..7 {
                    for j in 0..7 {
                        if i >= j {
                            continue;
                        }
                        let truth_edge = t.blocks()[k].get(i, j) != 0.0;
                        let sel = e.blocks()[k].get(i, j).abs() > thr;
                        if truth_edge && sel {
                            tp += 1;
                        } else if sel {
                            fp += 1;
                        } else if truth_edge {
                            fnn += 1;
                        } else {
                            tn += 1;
                        }
                    }
                }
            }
            let c = roc_counts(&t, &e, thr).unwrap();
            assert_eq!((c.tp, c.fp, c.fn_, c.tn), (tp, fp, fnn, tn));
        }
    }

    #[test]
    fn empty_estimate_is_origin() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let t = random_sparse(&mut rng, 2, 5, 0.5);
        let id = PrecisionSet::identity(2, 5);
        assert_eq!(roc_curve(&t, &[id], 0.0).unwrap(), vec![(0, 0)]);
    }

    #[test]
    fn mse_plug_in() {
        let t = PrecisionSet::new(vec![SymMatrix::identity(2)]).unwrap();
        let e = PrecisionSet::new(vec![SymMatrix::from_upper_fn(2, |i, j| if i == j { 1.0 } else { 0.3 })])
            .unwrap();
        assert!((mse(&t, &e).unwrap() - 0.09).abs() < 1e-15);
        assert_eq!(mse(&t, &t).unwrap(), 0.0);
    }

    #[test]
    fn mse_matches_loop_oracle_and_relabeling() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let t = random_sparse(&mut rng, 3, 6, 0.5);
            let e = random_sparse(&mut rng, 3, 6, 0.5);
            let mut sum = 0.0;
            for k in 0..3 {
                for i in 0..6 {
                    for j in 0..6 {
                        if i != j {
                            sum += (e.blocks()[k].get(i, j) - t.blocks()[k].get(i, j)).powi(2);
                        }
                    }
                }
            }
            // both triangles counted, so halve
            let oracle = sum / 2.0 * 2.0 / (3.0 * 6.0 * 5.0);
            let m = mse(&t, &e).unwrap();
            assert!((m - oracle).abs() <= 1e-12);
            let perm = [2, 0, 1];
            let tp = PrecisionSet::new(perm.iter().map(|&k| t.blocks()[k].clone()).collect()).unwrap();
            let ep = PrecisionSet::new(perm.iter().map(|&k| e.blocks()[k].clone()).collect()).unwrap();
            assert!((mse(&tp, &ep).unwrap() - m).abs() <= 1e-15);
        }
    }

    #[test]
    fn mismatched_shapes_are_rejected() {
        let a = PrecisionSet::identity(2, 3);
        let b = PrecisionSet::identity(1, 3);
        assert!(roc_counts(&a, &b, 0.0).is_err());
        assert!(mse(&a, &PrecisionSet::identity(2, 4)).is_err());
    }

    #[test]
    fn trace_drops_converged_tail() {
        let mut r = SolverReport::new(5.0, None);
        r.objective_trace.extend([5.0, 5.0]);
        assert!(convergence_trace(&r, 5.0).is_empty());

        let mut r = SolverReport::new(4.0, None);
        r.objective_trace.extend([3.0, 2.5, 2.0]);
        let tr = convergence_trace(&r, 2.0);
        assert_eq!(tr.len(), 3);
        assert!(tr.windows(2).all(|w| w[1].1 < w[0].1));
        assert!((tr[0].1 - 2f64.log10()).abs() < 1e-15);
    }

    #[test]
    fn r2_of_exact_line_is_one() {
        let pts: Vec<(usize, f64)> = (0..10).map(|t| (t, 3.0 - 0.5 * t as f64)).collect();
        assert!((linear_fit_r2(&pts).unwrap() - 1.0).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn partition_identity(seed in 0u64..10_000, k in 1usize..4, p in 2usize..8, thr in 0.0f64..1.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let t = random_sparse(&mut rng, k, p, 0.3);
            let e = random_sparse(&mut rng, k, p, 0.6);
            let c = roc_counts(&t, &e, thr).unwrap();
            prop_assert_eq!(c.total(), k * p * (p - 1) / 2);
        }
    }
}
