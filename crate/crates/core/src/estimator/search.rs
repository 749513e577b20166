//! Strategies for the ℓ0-penalised non-negative fit.
//!
//! Every strategy minimises `‖y − Xw‖² + λ·|{k penalised : w_k > 0}|` over
//! `w ≥ 0`. Weights on a chosen support are always the plain NNLS refit, so
//! the penalty selects columns without shrinking the surviving weights.
//! Strategies are registered by name in a [`SearchRegistry`] and picked at
//! run time.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use super::problem::{Candidate, GramProblem, HeuristicTrace};
use super::EstimatorError;

pub const DEFAULT_EXACT_LIMIT: usize = 20;
pub const ORACLE_LIMIT: usize = 12;

#[derive(Debug, Clone, PartialEq)]
pub struct SearchOutcome {
    pub w: Vec<f64>,
    pub objective: f64,
    /// Certified global optimum.
    pub exact: bool,
    pub trace: Option<HeuristicTrace>,
}

impl SearchOutcome {
    fn from_candidate(c: Candidate, exact: bool, trace: Option<HeuristicTrace>) -> Self {
        SearchOutcome { w: c.w, objective: c.objective, exact, trace }
    }
}

pub trait SubsetSearch: Send + Sync {
    fn name(&self) -> &'static str;
    fn search(&self, problem: &GramProblem, lambda: f64) -> Result<SearchOutcome, EstimatorError>;
}

/// Named solve modes exposed on the command line.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SolveMode {
    Exact,
    Heuristic,
    #[default]
    Auto,
}

impl SolveMode {
    pub fn as_str(self) -> &'static str {
        match self {
            SolveMode::Exact => "exact",
            SolveMode::Heuristic => "heuristic",
            SolveMode::Auto => "auto",
        }
    }
}

impl FromStr for SolveMode {
    type Err = EstimatorError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "exact" => Ok(SolveMode::Exact),
            "heuristic" => Ok(SolveMode::Heuristic),
            "auto" => Ok(SolveMode::Auto),
            other => Err(EstimatorError::UnknownStrategy(other.to_string())),
        }
    }
}

impl fmt::Display for SolveMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

fn check_lambda(lambda: f64) -> Result<(), EstimatorError> {
    if lambda.is_finite() && lambda >= 0.0 {
        Ok(())
    } else {
        Err(EstimatorError::InvalidInput(format!("lambda must be finite and non-negative, got {lambda}")))
    }
}

fn plain_nnls(problem: &GramProblem, lambda: f64) -> Candidate {
    let w = problem.nnls(&vec![true; problem.n_cols()]);
    let objective = problem.objective(&w, lambda);
    Candidate { w, objective }
}

// --- heuristic ----------------------------------------------------------------

/// Thresholded NNLS path, forward selection, then 1-swap local search.
#[derive(Debug, Clone, Copy, Default)]
pub struct LocalSearch;

impl LocalSearch {
    /// Drops the weakest NNLS coefficients one at a time (weakest by
    /// `w_k²·G_kk`), refitting after each drop, and keeps the best prefix.
    pub fn thresholded(problem: &GramProblem, lambda: f64) -> Candidate {
        let full = plain_nnls(problem, lambda);
        let mut order: Vec<usize> =
            (0..problem.n_cols()).filter(|&k| problem.penalized[k] && full.w[k] > 0.0).collect();
        order.sort_by(|&a, &b| {
            let sa = full.w[a] * full.w[a] * problem.gram[(a, a)];
            let sb = full.w[b] * full.w[b] * problem.gram[(b, b)];
            sa.total_cmp(&sb).then(a.cmp(&b))
        });
        let mut support = problem.support_of(&full.w);
        let mut best = full;
        for &k in &order {
            support[k] = false;
            let c = problem.eval_support(&support, lambda);
            if c.objective < best.objective - problem.tolerance(best.objective) {
                best = c;
            }
        }
        best
    }

    /// Adds one column at a time while the objective strictly improves.
    pub fn forward(problem: &GramProblem, lambda: f64, start: &[bool]) -> Candidate {
        let mut current = problem.eval_support(start, lambda);
        loop {
            let support = problem.support_of(&current.w);
            let grad = problem.descent(&current.w);
            let mut best: Option<Candidate> = None;
            for k in 0..problem.n_cols() {
                // a column without descent direction cannot lower the residual
                if !problem.penalized[k] || support[k] || grad[k] <= 0.0 {
                    continue;
                }
                let mut trial = support.clone();
                trial[k] = true;
                let c = problem.eval_support(&trial, lambda);
                let bar = best.as_ref().map_or(current.objective, |b| b.objective);
                if c.objective < bar - problem.tolerance(bar) {
                    best = Some(c);
                }
            }
            match best {
                Some(c) => current = c,
                None => return current,
            }
        }
    }

    /// Best-improvement descent over drop, add and swap moves.
    pub fn swap_descent(problem: &GramProblem, lambda: f64, start: Candidate) -> Candidate {
        let pen = problem.penalized_columns();
        let mut current = start;
        let max_sweeps = 4 * pen.len() + 10;
        for _ in 0..max_sweeps {
            let support = problem.support_of(&current.w);
            let grad = problem.descent(&current.w);
            let inside: Vec<usize> = pen.iter().copied().filter(|&k| support[k]).collect();
            let outside: Vec<usize> = pen.iter().copied().filter(|&k| !support[k]).collect();
            let mut best: Option<Candidate> = None;
            let consider = |trial: &[bool], best: &mut Option<Candidate>| {
                let c = problem.eval_support(trial, lambda);
                let bar = best.as_ref().map_or(current.objective, |b| b.objective);
                if c.objective < bar - problem.tolerance(bar) {
                    *best = Some(c);
                }
            };
            for &k in &inside {
                let mut trial = support.clone();
                trial[k] = false;
                consider(&trial, &mut best);
            }
            for &l in &outside {
                if grad[l] > 0.0 {
                    let mut trial = support.clone();
                    trial[l] = true;
                    consider(&trial, &mut best);
                }
            }
            for &k in &inside {
                for &l in &outside {
                    let mut trial = support.clone();
                    trial[k] = false;
                    trial[l] = true;
                    consider(&trial, &mut best);
                }
            }
            match best {
                Some(c) => current = c,
                None => break,
            }
        }
        current
    }

    pub fn run(problem: &GramProblem, lambda: f64) -> (Candidate, HeuristicTrace) {
        let thresholded = Self::thresholded(problem, lambda);
        let from_empty = Self::forward(problem, lambda, &vec![false; problem.n_cols()]);
        let from_threshold = Self::forward(problem, lambda, &problem.support_of(&thresholded.w));
        let greedy = [from_threshold, from_empty].into_iter().fold(thresholded.clone(), |best, c| {
            if c.objective < best.objective {
                c
            } else {
                best
            }
        });
        let local = Self::swap_descent(problem, lambda, greedy.clone());
        let trace =
            HeuristicTrace { thresholded: thresholded.objective, greedy: greedy.objective, local: local.objective };
        (local, trace)
    }
}

impl SubsetSearch for LocalSearch {
    fn name(&self) -> &'static str {
        "heuristic"
    }

    fn search(&self, problem: &GramProblem, lambda: f64) -> Result<SearchOutcome, EstimatorError> {
        check_lambda(lambda)?;
        if lambda == 0.0 {
            return Ok(SearchOutcome::from_candidate(plain_nnls(problem, 0.0), true, None));
        }
        let (best, trace) = Self::run(problem, lambda);
        Ok(SearchOutcome::from_candidate(best, false, Some(trace)))
    }
}

// --- exact --------------------------------------------------------------------

/// Depth-first branch-and-bound over supports with NNLS relaxations.
///
/// A node fixes some penalised columns in (paying λ) or out; its relaxation
/// is NNLS over every column not fixed out. `rss(relaxation) + λ·|fixed in|`
/// bounds every support below the node from beneath.
#[derive(Debug, Clone, Copy)]
pub struct BranchAndBound {
    pub max_penalized: usize,
}

impl Default for BranchAndBound {
    fn default() -> Self {
        BranchAndBound { max_penalized: DEFAULT_EXACT_LIMIT }
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Fix {
    Free,
    In,
    Out,
}

impl BranchAndBound {
    pub fn solve(&self, problem: &GramProblem, lambda: f64) -> Result<Candidate, EstimatorError> {
        let n_pen = problem.penalized_columns().len();
        if n_pen > self.max_penalized {
            return Err(EstimatorError::TooLarge {
                columns: n_pen,
                limit: self.max_penalized,
                hint: "use the heuristic or auto mode",
            });
        }
        let n = problem.n_cols();
        let (mut best, _) = LocalSearch::run(problem, lambda);

        // a node fixing a column in shares its parent's relaxation
        let mut stack: Vec<(Vec<Fix>, usize, Option<Vec<f64>>)> = vec![(vec![Fix::Free; n], 0, None)];
        while let Some((fix, n_in, relaxed)) = stack.pop() {
            let w = relaxed.unwrap_or_else(|| {
                let allowed: Vec<bool> = fix.iter().map(|f| *f != Fix::Out).collect();
                problem.nnls(&allowed)
            });
            let rss = problem.rss(&w);
            let objective = rss + lambda * problem.n_nonzero(&w) as f64;
            if objective < best.objective - problem.tolerance(best.objective) {
                best = Candidate { w: w.clone(), objective };
            }
            let bound = rss + lambda * n_in as f64;
            if bound >= best.objective - problem.tolerance(best.objective) {
                continue;
            }
            // branch on the free column carrying the most weight; if every free
            // column is already zero the relaxation is optimal for this subtree
            let branch = (0..n).filter(|&k| problem.penalized[k] && fix[k] == Fix::Free && w[k] > 0.0).fold(
                None::<usize>,
                |acc, k| match acc {
                    Some(a) if w[a] >= w[k] => Some(a),
                    _ => Some(k),
                },
            );
            let Some(k) = branch else { continue };
            let mut out = fix.clone();
            out[k] = Fix::Out;
            let mut inn = fix;
            inn[k] = Fix::In;
            stack.push((out, n_in, None));
            stack.push((inn, n_in + 1, Some(w)));
        }
        Ok(best)
    }
}

impl SubsetSearch for BranchAndBound {
    fn name(&self) -> &'static str {
        "exact"
    }

    fn search(&self, problem: &GramProblem, lambda: f64) -> Result<SearchOutcome, EstimatorError> {
        check_lambda(lambda)?;
        if lambda == 0.0 {
            return Ok(SearchOutcome::from_candidate(plain_nnls(problem, 0.0), true, None));
        }
        let best = self.solve(problem, lambda)?;
        Ok(SearchOutcome::from_candidate(best, true, None))
    }
}

/// Exact below the column limit, heuristic above it.
#[derive(Debug, Clone, Copy)]
pub struct Auto {
    pub exact_limit: usize,
}

impl Default for Auto {
    fn default() -> Self {
        Auto { exact_limit: DEFAULT_EXACT_LIMIT }
    }
}

impl SubsetSearch for Auto {
    fn name(&self) -> &'static str {
        "auto"
    }

    fn search(&self, problem: &GramProblem, lambda: f64) -> Result<SearchOutcome, EstimatorError> {
        if problem.penalized_columns().len() <= self.exact_limit {
            BranchAndBound { max_penalized: self.exact_limit }.search(problem, lambda)
        } else {
            LocalSearch.search(problem, lambda)
        }
    }
}

/// Full enumeration of the 2^n supports. Verification oracle for small problems.
#[derive(Debug, Clone, Copy, Default)]
pub struct Enumeration;

impl Enumeration {
    pub fn solve(problem: &GramProblem, lambda: f64) -> Result<Candidate, EstimatorError> {
        check_lambda(lambda)?;
        let pen = problem.penalized_columns();
        if pen.len() > ORACLE_LIMIT {
            return Err(EstimatorError::TooLarge {
                columns: pen.len(),
                limit: ORACLE_LIMIT,
                hint: "enumeration is limited to small problems",
            });
        }
        let n = problem.n_cols();
        let mut best: Option<Candidate> = None;
        for mask in 0u32..(1u32 << pen.len()) {
            let mut support = vec![false; n];
            for (bit, &k) in pen.iter().enumerate() {
                support[k] = mask & (1 << bit) != 0;
            }
            let c = problem.eval_support(&support, lambda);
            if best.as_ref().is_none_or(|b| c.objective < b.objective) {
                best = Some(c);
            }
        }
        Ok(best.expect("at least the empty support is enumerated"))
    }
}

impl SubsetSearch for Enumeration {
    fn name(&self) -> &'static str {
        "enumerate"
    }

    fn search(&self, problem: &GramProblem, lambda: f64) -> Result<SearchOutcome, EstimatorError> {
        Ok(SearchOutcome::from_candidate(Self::solve(problem, lambda)?, true, None))
    }
}

/// Strategies by name.
#[derive(Clone)]
pub struct SearchRegistry {
    entries: BTreeMap<&'static str, Arc<dyn SubsetSearch>>,
}

impl SearchRegistry {
    pub fn empty() -> Self {
        SearchRegistry { entries: BTreeMap::new() }
    }

    /// Registry with `exact`, `heuristic`, `auto` and `enumerate`, using the given exact-mode column limit.
    pub fn with_exact_limit(exact_limit: usize) -> Self {
        let mut r = Self::empty();
        r.register(Arc::new(BranchAndBound { max_penalized: exact_limit }));
        r.register(Arc::new(LocalSearch));
        r.register(Arc::new(Auto { exact_limit }));
        r.register(Arc::new(Enumeration));
        r
    }

    pub fn register(&mut self, strategy: Arc<dyn SubsetSearch>) {
        self.entries.insert(strategy.name(), strategy);
    }

    pub fn get(&self, name: &str) -> Result<Arc<dyn SubsetSearch>, EstimatorError> {
        self.entries.get(name).cloned().ok_or_else(|| EstimatorError::UnknownStrategy(name.to_string()))
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.entries.keys().copied().collect()
    }
}

impl Default for SearchRegistry {
    fn default() -> Self {
        Self::with_exact_limit(DEFAULT_EXACT_LIMIT)
    }
}

impl fmt::Debug for SearchRegistry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.entries.keys()).finish()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{DMatrix, DVector};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_problem(rng: &mut ChaCha8Rng, rows: usize, n_pen: usize, demand: bool) -> GramProblem {
        let cols = n_pen + demand as usize;
        let x = DMatrix::from_fn(rows, cols, |_, k| {
            if k < n_pen {
                (rng.random::<f64>() < 0.5) as u8 as f64
            } else {
                20.0 + 10.0 * rng.random::<f64>()
            }
        });
        let truth: Vec<f64> = (0..cols)
            .map(|k| if k < n_pen && rng.random::<f64>() < 0.4 { 0.0 } else { rng.random::<f64>() * 3.0 })
            .collect();
        let y = DVector::from_fn(rows, |i, _| {
            (0..cols).map(|k| x[(i, k)] * truth[k]).sum::<f64>() + rng.random::<f64>() - 0.5
        });
        let mut penalized = vec![true; cols];
        if demand {
            penalized[n_pen] = false;
        }
        GramProblem::new(&x, &y, penalized)
    }

    #[test]
    fn hand_enumerated_single_column() {
        // support {} → 8, support {0} → 0 + 3
        let x = DMatrix::from_row_slice(2, 1, &[1.0, 1.0]);
        let y = DVector::from_vec(vec![2.0, 2.0]);
        let p = GramProblem::new(&x, &y, vec![true]);
        for s in [&BranchAndBound::default() as &dyn SubsetSearch, &LocalSearch, &Enumeration] {
            let out = s.search(&p, 3.0).unwrap();
            assert!((out.w[0] - 2.0).abs() < 1e-12, "{}", s.name());
            assert!((out.objective - 3.0).abs() < 1e-9);
        }
        // λ above the rss saving flips the choice
        let out = BranchAndBound::default().search(&p, 9.0).unwrap();
        assert_eq!(out.w, vec![0.0]);
    }

    #[test]
    fn exact_matches_enumeration() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for case in 0..10 {
            let p = random_problem(&mut rng, 40, 8, case % 2 == 0);
            for lambda in [0.0, 0.5, 5.0] {
                let e = BranchAndBound::default().search(&p, lambda).unwrap();
                let o = Enumeration::solve(&p, lambda).unwrap();
                assert!((e.objective - o.objective).abs() <= 1e-9 * o.objective.max(1.0), "case {case} λ={lambda}");
            }
        }
    }

    #[test]
    fn heuristic_stages_are_monotone() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..10 {
            let p = random_problem(&mut rng, 60, 14, true);
            let (_, t) = LocalSearch::run(&p, 1.0);
            assert!(t.local <= t.greedy && t.greedy <= t.thresholded, "{t:?}");
        }
    }

    #[test]
    fn exact_mode_enforces_limit() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = random_problem(&mut rng, 30, 6, false);
        let err = BranchAndBound { max_penalized: 5 }.search(&p, 1.0).unwrap_err();
        assert!(matches!(err, EstimatorError::TooLarge { .. }));
        // auto falls back instead
        assert!(!Auto { exact_limit: 5 }.search(&p, 1.0).unwrap().exact);
        assert!(Enumeration.search(&random_problem(&mut rng, 30, 13, false), 1.0).is_err());
    }

    #[test]
    fn demand_only_problem() {
        let x = DMatrix::from_row_slice(3, 1, &[1.0, 2.0, 3.0]);
        let y = DVector::from_vec(vec![2.0, 4.0, 6.0]);
        let p = GramProblem::new(&x, &y, vec![false]);
        let o = Enumeration::solve(&p, 1.0).unwrap();
        assert!((o.w[0] - 2.0).abs() < 1e-12);
        assert!(o.objective.abs() < 1e-9);
    }

    #[test]
    fn registry_lookup() {
        let r = SearchRegistry::default();
        assert_eq!(r.names(), vec!["auto", "enumerate", "exact", "heuristic"]);
        for m in [SolveMode::Exact, SolveMode::Heuristic, SolveMode::Auto] {
            assert_eq!(r.get(m.as_str()).unwrap().name(), m.as_str());
        }
        assert!(r.get("gurobi").is_err());
        assert!("bogus".parse::<SolveMode>().is_err());
    }
}
