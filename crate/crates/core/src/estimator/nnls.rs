//! Active-set non-negative least squares on the normal equations.
//!
//! Works on `G = XᵀX` and `c = Xᵀy` so that repeated solves over column
//! subsets (the sparse search does thousands) cost O(p³) each, independent
//! of the number of observations.

use nalgebra::{DMatrix, DVector};

/// Relative pivot floor for the passive-set Cholesky factor.
const PIVOT_FLOOR: f64 = 1e-10;
/// A column enters only if its descent exceeds this fraction of `‖c‖∞`.
const ENTER_TOL: f64 = 1e-12;

/// Minimises `‖y − Xw‖²` over `w ≥ 0` with `w_k = 0` wherever `allowed[k]` is false.
pub fn nnls_gram(gram: &DMatrix<f64>, xty: &DVector<f64>, allowed: &[bool]) -> Vec<f64> {
    let n = xty.len();
    debug_assert_eq!(gram.nrows(), n);
    debug_assert_eq!(allowed.len(), n);
    let mut w = vec![0.0; n];
    let scale = (0..n).filter(|&k| allowed[k]).map(|k| xty[k].abs()).fold(0.0, f64::max);
    if scale == 0.0 {
        return w;
    }
    let tol = ENTER_TOL * scale;
    let mut passive = vec![false; n];
    let mut blocked = vec![false; n];
    let max_outer = 10 * n + 50;

    for _ in 0..max_outer {
        let grad = descent(gram, xty, &w);
        let entering = (0..n).filter(|&k| allowed[k] && !passive[k] && !blocked[k] && grad[k] > tol).fold(
            None::<usize>,
            |best, k| match best {
                Some(b) if grad[b] >= grad[k] => Some(b),
                _ => Some(k),
            },
        );
        let Some(j) = entering else { break };
        passive[j] = true;

        let mut first = true;
        loop {
            let Some(s) = solve_passive(gram, xty, &passive) else {
                // column j is numerically dependent on the passive set
                passive[j] = false;
                blocked[j] = true;
                break;
            };
            if first && s[j] <= 0.0 {
                passive[j] = false;
                blocked[j] = true;
                break;
            }
            first = false;
            if (0..n).all(|k| !passive[k] || s[k] > 0.0) {
                for k in 0..n {
                    w[k] = if passive[k] { s[k] } else { 0.0 };
                }
                blocked.iter_mut().for_each(|b| *b = false);
                break;
            }
            // step towards s until the first passive coefficient hits zero
            let mut alpha = 1.0;
            let mut hit = None;
            for k in 0..n {
                if passive[k] && s[k] <= 0.0 {
                    let a = w[k] / (w[k] - s[k]);
                    if a < alpha {
                        alpha = a;
                        hit = Some(k);
                    }
                }
            }
            for k in 0..n {
                if passive[k] {
                    w[k] += alpha * (s[k] - w[k]);
                }
            }
            if let Some(k) = hit {
                w[k] = 0.0;
            }
            for k in 0..n {
                if passive[k] && w[k] <= 0.0 {
                    passive[k] = false;
                    w[k] = 0.0;
                }
            }
            if !passive.iter().any(|&p| p) {
                break;
            }
        }
    }
    w
}

/// Negative half-gradient `c − Gw`.
pub fn descent(gram: &DMatrix<f64>, xty: &DVector<f64>, w: &[f64]) -> Vec<f64> {
    let n = xty.len();
    let mut g: Vec<f64> = xty.iter().copied().collect();
    for (k, &wk) in w.iter().enumerate() {
        if wk != 0.0 {
            let col = gram.column(k);
            for i in 0..n {
                g[i] -= col[i] * wk;
            }
        }
    }
    g
}

/// Unconstrained least squares restricted to the passive columns, with one
/// step of iterative refinement. `None` when the factor is (nearly) singular.
fn solve_passive(gram: &DMatrix<f64>, xty: &DVector<f64>, passive: &[bool]) -> Option<Vec<f64>> {
    let idx: Vec<usize> = (0..passive.len()).filter(|&k| passive[k]).collect();
    let m = idx.len();
    let sub = DMatrix::from_fn(m, m, |a, b| gram[(idx[a], idx[b])]);
    let rhs = DVector::from_fn(m, |a, _| xty[idx[a]]);
    let chol = sub.clone().cholesky()?;
    let l = chol.l_dirty();
    for a in 0..m {
        let d = l[(a, a)];
        if d.is_nan() || d * d <= PIVOT_FLOOR * sub[(a, a)] {
            return None;
        }
    }
    let mut s = chol.solve(&rhs);
    let r = &rhs - &sub * &s;
    s += chol.solve(&r);
    let mut out = vec![0.0; passive.len()];
    for (a, &k) in idx.iter().enumerate() {
        if !s[a].is_finite() {
            return None;
        }
        out[k] = s[a];
    }
    Some(out)
}
