use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use super::nnls::{descent, nnls_gram};

/// Least-squares problem reduced to its normal equations, with a flag per
/// column saying whether the column pays the sparsity penalty.
#[derive(Debug, Clone)]
pub struct GramProblem {
    pub gram: DMatrix<f64>,
    pub xty: DVector<f64>,
    pub yty: f64,
    pub penalized: Vec<bool>,
}

/// A weight vector together with its penalised objective.
#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub w: Vec<f64>,
    pub objective: f64,
}

/// Objective reached after each stage of the heuristic search.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HeuristicTrace {
    pub thresholded: f64,
    pub greedy: f64,
    pub local: f64,
}

impl GramProblem {
    pub fn new(x: &DMatrix<f64>, y: &DVector<f64>, penalized: Vec<bool>) -> Self {
        assert_eq!(x.ncols(), penalized.len());
        GramProblem { gram: x.tr_mul(x), xty: x.tr_mul(y), yty: y.norm_squared(), penalized }
    }

    pub fn n_cols(&self) -> usize {
        self.xty.len()
    }

    pub fn penalized_columns(&self) -> Vec<usize> {
        (0..self.n_cols()).filter(|&k| self.penalized[k]).collect()
    }

    /// Residual sum of squares from the normal equations, floored at zero.
    pub fn rss(&self, w: &[f64]) -> f64 {
        let g = descent(&self.gram, &self.xty, w);
        // ‖y‖² − 2wᵀc + wᵀGw  ==  ‖y‖² − wᵀc − wᵀ(c − Gw)
        let mut v = self.yty;
        for k in 0..w.len() {
            if w[k] != 0.0 {
                v -= w[k] * (self.xty[k] + g[k]);
            }
        }
        v.max(0.0)
    }

    pub fn n_nonzero(&self, w: &[f64]) -> usize {
        (0..w.len()).filter(|&k| self.penalized[k] && w[k] > 0.0).count()
    }

    pub fn objective(&self, w: &[f64], lambda: f64) -> f64 {
        self.rss(w) + lambda * self.n_nonzero(w) as f64
    }

    /// NNLS restricted to the allowed columns.
    pub fn nnls(&self, allowed: &[bool]) -> Vec<f64> {
        nnls_gram(&self.gram, &self.xty, allowed)
    }

    /// Refit on `support` (penalised columns) plus every unpenalised column.
    pub fn eval_support(&self, support: &[bool], lambda: f64) -> Candidate {
        let allowed: Vec<bool> = (0..self.n_cols()).map(|k| support[k] || !self.penalized[k]).collect();
        let w = self.nnls(&allowed);
        let objective = self.objective(&w, lambda);
        Candidate { w, objective }
    }

    pub fn support_of(&self, w: &[f64]) -> Vec<bool> {
        (0..w.len()).map(|k| self.penalized[k] && w[k] > 0.0).collect()
    }

    pub fn descent(&self, w: &[f64]) -> Vec<f64> {
        descent(&self.gram, &self.xty, w)
    }

    /// Scale used for relative comparisons between objectives.
    pub fn tolerance(&self, reference: f64) -> f64 {
        1e-12 * reference.abs().max(self.yty).max(1.0)
    }
}
