//! Recovery of per-plant inertia from aggregate inertia.
//!
//! Each settlement period contributes a market row
//! `a_market ≈ w_dem·demand + Σ_j w_j·on_j`, and periods with TSO actions
//! contribute a second row `a_tso ≈ Σ_j w_j·action_j` (action ∈ {−1, 0, 1}).
//! Plants constrained to share one value are merged into a single column.
//! The fit minimises the squared residual plus λ per nonzero plant column,
//! subject to every weight being non-negative.

mod model;
mod nnls;
mod problem;
mod search;

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;
use thiserror::Error;

use crate::domain::PlantId;
use crate::ingest::{AggregateSeries, ColinearityGroups, IndicatorMatrix};

pub use model::{FittedModel, ModelDiagnostics, ModelError, ModelPlant, SCHEMA_VERSION};
pub use nnls::nnls_gram;
pub use problem::{Candidate, GramProblem, HeuristicTrace};
pub use search::{
    Auto, BranchAndBound, Enumeration, LocalSearch, SearchOutcome, SearchRegistry, SolveMode, SubsetSearch,
    DEFAULT_EXACT_LIMIT, ORACLE_LIMIT,
};

pub const DEFAULT_LAMBDA_GRID: [f64; 10] = [0.0, 0.01, 0.03, 0.1, 0.3, 1.0, 3.0, 10.0, 30.0, 100.0];
pub const DEFAULT_VALIDATION_FRACTION: f64 = 0.2;

#[derive(Debug, Error)]
pub enum EstimatorError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("cannot assemble design: {0}")]
    Assembly(String),
    #[error("{columns} penalised columns exceeds the limit of {limit}; {hint}")]
    TooLarge { columns: usize, limit: usize, hint: &'static str },
    #[error("unknown search strategy `{0}`")]
    UnknownStrategy(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RowKind {
    Market,
    Tso,
}

/// Stacked observations: columns are plant groups followed by one demand column.
#[derive(Debug, Clone)]
pub struct DesignSystem {
    pub x: DMatrix<f64>,
    pub y: DVector<f64>,
    pub row_kind: Vec<RowKind>,
    /// Period index of each row.
    pub row_period: Vec<usize>,
    pub plants: Vec<PlantId>,
    /// Plant indices behind each group column.
    pub col_map: Vec<Vec<usize>>,
    pub demand_col: Option<usize>,
}

impl DesignSystem {
    /// Wraps a raw matrix. Columns other than `demand_col` are treated as
    /// single-plant groups named `c0`, `c1`, ...
    pub fn from_matrix(x: DMatrix<f64>, y: DVector<f64>, demand_col: Option<usize>) -> Result<Self, EstimatorError> {
        if x.nrows() != y.len() {
            return Err(EstimatorError::InvalidInput("row count of X and y differ".into()));
        }
        if demand_col.is_some_and(|d| d >= x.ncols()) {
            return Err(EstimatorError::InvalidInput("demand column out of range".into()));
        }
        let plant_cols: Vec<usize> = (0..x.ncols()).filter(|&k| Some(k) != demand_col).collect();
        let plants = plant_cols
            .iter()
            .map(|k| PlantId::new(format!("c{k}")).expect("generated ids are valid"))
            .collect::<Vec<_>>();
        let mut col_map = vec![Vec::new(); x.ncols()];
        for (i, &k) in plant_cols.iter().enumerate() {
            col_map[k] = vec![i];
        }
        let n = x.nrows();
        Ok(DesignSystem {
            x,
            y,
            row_kind: vec![RowKind::Market; n],
            row_period: (0..n).collect(),
            plants,
            col_map,
            demand_col,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.x.nrows()
    }

    pub fn n_cols(&self) -> usize {
        self.x.ncols()
    }

    pub fn penalized(&self) -> Vec<bool> {
        (0..self.n_cols()).map(|k| Some(k) != self.demand_col).collect()
    }

    fn validate(&self) -> Result<(), EstimatorError> {
        if self.n_rows() == 0 {
            return Err(EstimatorError::InvalidInput("design has no rows".into()));
        }
        if self.x.iter().chain(self.y.iter()).any(|v| !v.is_finite()) {
            return Err(EstimatorError::InvalidInput("design contains non-finite entries".into()));
        }
        Ok(())
    }

    pub fn gram_problem(&self) -> GramProblem {
        GramProblem::new(&self.x, &self.y, self.penalized())
    }

    /// Exact residual sum of squares for column weights `w`.
    pub fn rss(&self, w: &[f64]) -> f64 {
        (&self.y - &self.x * DVector::from_column_slice(w)).norm_squared()
    }

    /// Penalised columns that are entirely zero.
    pub fn degenerate_columns(&self) -> Vec<usize> {
        (0..self.n_cols())
            .filter(|&k| Some(k) != self.demand_col && self.x.column(k).iter().all(|&v| v == 0.0))
            .collect()
    }

    /// Sets of two or more nonzero penalised columns that are exactly equal.
    pub fn identical_columns(&self) -> Vec<Vec<usize>> {
        let mut by_bits: HashMap<Vec<u64>, Vec<usize>> = HashMap::new();
        for k in 0..self.n_cols() {
            if Some(k) == self.demand_col {
                continue;
            }
            let bits: Vec<u64> = self.x.column(k).iter().map(|v| v.to_bits()).collect();
            if bits.iter().all(|&b| f64::from_bits(b) == 0.0) {
                continue;
            }
            by_bits.entry(bits).or_default().push(k);
        }
        let mut sets: Vec<Vec<usize>> = by_bits.into_values().filter(|v| v.len() > 1).collect();
        sets.sort();
        sets
    }
}

/// Builds the stacked market/TSO design for the given grouping.
pub fn assemble(
    ind: &IndicatorMatrix,
    series: &AggregateSeries,
    groups: &ColinearityGroups,
    use_tso_rows: bool,
) -> Result<DesignSystem, EstimatorError> {
    if ind.periods != series.periods() {
        return Err(EstimatorError::Assembly("indicator periods do not match the aggregate series".into()));
    }
    if groups.n_members() != ind.n_plants() {
        return Err(EstimatorError::Assembly("grouping does not cover the indicator plants".into()));
    }
    let membership = groups.membership();
    let n_groups = groups.len();
    let n_cols = n_groups + 1;
    let demand_col = n_groups;

    let mut data: Vec<f64> = Vec::new();
    let mut y = Vec::new();
    let mut row_kind = Vec::new();
    let mut row_period = Vec::new();
    let mut row = vec![0.0; n_cols];
    for (t, point) in series.points().iter().enumerate() {
        row.iter_mut().for_each(|v| *v = 0.0);
        for &j in ind.market_row(t) {
            row[membership[j as usize]] += 1.0;
        }
        row[demand_col] = point.demand.gw();
        if row.iter().any(|&v| v != 0.0) {
            data.extend_from_slice(&row);
            y.push(point.a_market.gvas());
            row_kind.push(RowKind::Market);
            row_period.push(t);
        }
        if use_tso_rows && !ind.tso_row(t).is_empty() {
            row.iter_mut().for_each(|v| *v = 0.0);
            for &(j, v) in ind.tso_row(t) {
                row[membership[j as usize]] += v as f64;
            }
            if row.iter().any(|&v| v != 0.0) {
                data.extend_from_slice(&row);
                y.push(point.a_tso());
                row_kind.push(RowKind::Tso);
                row_period.push(t);
            }
        }
    }
    if y.is_empty() {
        return Err(EstimatorError::Assembly("no usable rows".into()));
    }
    let x = DMatrix::from_row_slice(y.len(), n_cols, &data);
    let mut col_map: Vec<Vec<usize>> = groups.groups().to_vec();
    col_map.push(Vec::new());
    Ok(DesignSystem {
        x,
        y: DVector::from_vec(y),
        row_kind,
        row_period,
        plants: ind.plants.clone(),
        col_map,
        demand_col: Some(demand_col),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Diagnostics {
    pub rmse: f64,
    pub mae: f64,
    pub n_nonzero: usize,
    pub exact: bool,
    /// Plants whose column is identically zero (never on); their weight is 0 and unidentifiable.
    pub degenerate: Vec<PlantId>,
    /// Groups of plants whose columns are exactly equal; only their sum is identifiable.
    pub collinear: Vec<Vec<PlantId>>,
    pub heuristic: Option<HeuristicTrace>,
}

impl Diagnostics {
    pub fn is_unstable(&self) -> bool {
        !self.collinear.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InertiaSolution {
    pub plants: Vec<PlantId>,
    /// Per-plant weight in GVAs, aligned with `plants`.
    pub w: Vec<f64>,
    /// Plant indices per group column.
    pub groups: Vec<Vec<usize>>,
    pub group_w: Vec<f64>,
    /// GVAs per GW of demand.
    pub w_dem: f64,
    /// Group columns with nonzero weight.
    pub support: Vec<usize>,
    pub lambda: f64,
    pub objective: f64,
    pub diagnostics: Diagnostics,
}

impl InertiaSolution {
    fn from_columns(
        sys: &DesignSystem,
        column_w: &[f64],
        lambda: f64,
        exact: bool,
        trace: Option<HeuristicTrace>,
    ) -> Self {
        let mut w = vec![0.0; sys.plants.len()];
        let mut groups = Vec::new();
        let mut group_w = Vec::new();
        let mut support = Vec::new();
        for (k, members) in sys.col_map.iter().enumerate() {
            if Some(k) == sys.demand_col {
                continue;
            }
            let g = groups.len();
            for &j in members {
                w[j] = column_w[k];
            }
            if column_w[k] > 0.0 {
                support.push(g);
            }
            groups.push(members.clone());
            group_w.push(column_w[k]);
        }
        let w_dem = sys.demand_col.map_or(0.0, |d| column_w[d]);
        let residual = &sys.y - &sys.x * DVector::from_column_slice(column_w);
        let rss = residual.norm_squared();
        let n = sys.n_rows() as f64;
        let names = |cols: &[usize]| -> Vec<PlantId> {
            cols.iter().flat_map(|&k| sys.col_map[k].iter().map(|&j| sys.plants[j].clone())).collect()
        };
        let diagnostics = Diagnostics {
            rmse: (rss / n).sqrt(),
            mae: residual.iter().map(|r| r.abs()).sum::<f64>() / n,
            n_nonzero: support.len(),
            exact,
            degenerate: names(&sys.degenerate_columns()),
            collinear: sys.identical_columns().iter().map(|set| names(set)).collect(),
            heuristic: trace,
        };
        InertiaSolution {
            plants: sys.plants.clone(),
            w,
            groups,
            group_w,
            w_dem,
            objective: rss + lambda * support.len() as f64,
            support,
            lambda,
            diagnostics,
        }
    }

    pub fn weight(&self, id: &PlantId) -> Option<f64> {
        self.plants.iter().position(|p| p == id).map(|j| self.w[j])
    }

    /// Group weights in design-column order, demand last.
    pub fn column_weights(&self) -> Vec<f64> {
        let mut v = self.group_w.clone();
        v.push(self.w_dem);
        v
    }

    /// Predicted market inertia for period `t` of `ind`.
    pub fn predict_market(&self, ind: &IndicatorMatrix, t: usize, demand_gw: f64) -> f64 {
        ind.market_row(t).iter().fold(self.w_dem * demand_gw, |acc, &j| acc + self.w[j as usize])
    }
}

/// Read access to fitted weights, whether fresh from a solve or loaded from JSON.
pub trait PlantWeights {
    fn w_dem(&self) -> f64;
    fn weight(&self, id: &PlantId) -> Option<f64>;
}

impl PlantWeights for InertiaSolution {
    fn w_dem(&self) -> f64 {
        self.w_dem
    }

    fn weight(&self, id: &PlantId) -> Option<f64> {
        InertiaSolution::weight(self, id)
    }
}

impl PlantWeights for FittedModel {
    fn w_dem(&self) -> f64 {
        self.w_dem_gvas_per_gw
    }

    fn weight(&self, id: &PlantId) -> Option<f64> {
        FittedModel::weight(self, id)
    }
}

/// Global minimiser of `‖y − Xw‖²` over `w ≥ 0`.
pub fn solve_nnls(sys: &DesignSystem) -> Result<InertiaSolution, EstimatorError> {
    sys.validate()?;
    let problem = sys.gram_problem();
    let w = problem.nnls(&vec![true; sys.n_cols()]);
    Ok(InertiaSolution::from_columns(sys, &w, 0.0, true, None))
}

/// ℓ0-penalised fit using the strategy registered under `mode`.
pub fn solve_l0(sys: &DesignSystem, lambda: f64, mode: SolveMode) -> Result<InertiaSolution, EstimatorError> {
    solve_l0_with(sys, lambda, mode.as_str(), &SearchRegistry::default())
}

pub fn solve_l0_with(
    sys: &DesignSystem,
    lambda: f64,
    strategy: &str,
    registry: &SearchRegistry,
) -> Result<InertiaSolution, EstimatorError> {
    sys.validate()?;
    let search = registry.get(strategy)?;
    let out = search.search(&sys.gram_problem(), lambda)?;
    Ok(InertiaSolution::from_columns(sys, &out.w, lambda, out.exact, out.trace))
}

/// Exhaustive minimum over all supports; at most [`ORACLE_LIMIT`] penalised columns.
pub fn brute_force_oracle(sys: &DesignSystem, lambda: f64) -> Result<InertiaSolution, EstimatorError> {
    solve_l0_with(sys, lambda, "enumerate", &SearchRegistry::default())
}

#[derive(Debug, Clone)]
pub struct FitOptions {
    pub lambda: f64,
    pub mode: SolveMode,
    pub use_tso_rows: bool,
    pub exact_limit: usize,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions { lambda: 0.0, mode: SolveMode::Auto, use_tso_rows: true, exact_limit: DEFAULT_EXACT_LIMIT }
    }
}

pub fn fit(
    ind: &IndicatorMatrix,
    series: &AggregateSeries,
    groups: &ColinearityGroups,
    opts: &FitOptions,
) -> Result<InertiaSolution, EstimatorError> {
    let sys = assemble(ind, series, groups, opts.use_tso_rows)?;
    solve_l0_with(&sys, opts.lambda, opts.mode.as_str(), &SearchRegistry::with_exact_limit(opts.exact_limit))
}

#[derive(Debug, Clone, Serialize)]
pub struct LambdaScore {
    pub lambda: f64,
    pub validation_mae: f64,
    pub n_nonzero: usize,
}

#[derive(Debug, Clone)]
pub struct LambdaSelection {
    pub lambda: f64,
    /// Refit on all supplied periods at the selected λ.
    pub solution: InertiaSolution,
    pub scores: Vec<LambdaScore>,
}

/// Chooses λ on a chronological train/validation split.
///
/// Each λ is fitted on the leading `1 − validation_fraction` of the periods
/// and scored by the MAE of predicted market inertia on the rest. Scores
/// within one standard error of the best count as tied, and ties go to the
/// largest λ. The returned solution is refitted on every period.
pub fn select_lambda(
    ind: &IndicatorMatrix,
    series: &AggregateSeries,
    groups: &ColinearityGroups,
    grid: &[f64],
    validation_fraction: f64,
    opts: &FitOptions,
) -> Result<LambdaSelection, EstimatorError> {
    if grid.is_empty() {
        return Err(EstimatorError::InvalidInput("lambda grid is empty".into()));
    }
    if !(validation_fraction > 0.0 && validation_fraction < 1.0) {
        return Err(EstimatorError::InvalidInput(format!(
            "validation fraction must be in (0, 1), got {validation_fraction}"
        )));
    }
    let mut grid: Vec<f64> = grid.to_vec();
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    let t = ind.n_periods();
    let n_train = ((t as f64) * (1.0 - validation_fraction)).floor() as usize;
    if n_train == 0 || n_train == t {
        return Err(EstimatorError::InvalidInput(format!("cannot split {t} periods for validation")));
    }
    let train_ind = ind.slice(0..n_train);
    let train_series = series.slice(0..n_train);
    let sys = assemble(&train_ind, &train_series, groups, opts.use_tso_rows)?;
    let registry = SearchRegistry::with_exact_limit(opts.exact_limit);
    let val = &series.points()[n_train..];

    let mut scores = Vec::with_capacity(grid.len());
    let mut errors: Vec<Vec<f64>> = Vec::with_capacity(grid.len());
    for &lambda in &grid {
        let sol = solve_l0_with(&sys, lambda, opts.mode.as_str(), &registry)?;
        let errs: Vec<f64> = val
            .iter()
            .enumerate()
            .map(|(i, p)| (sol.predict_market(ind, n_train + i, p.demand.gw()) - p.a_market.gvas()).abs())
            .collect();
        let mae = errs.iter().sum::<f64>() / errs.len() as f64;
        scores.push(LambdaScore { lambda, validation_mae: mae, n_nonzero: sol.diagnostics.n_nonzero });
        errors.push(errs);
    }
    let best = (0..grid.len())
        .min_by(|&a, &b| scores[a].validation_mae.total_cmp(&scores[b].validation_mae))
        .expect("grid is non-empty");
    let errs = &errors[best];
    let m = errs.len() as f64;
    let mean = scores[best].validation_mae;
    let sd =
        if errs.len() > 1 { (errs.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (m - 1.0)).sqrt() } else { 0.0 };
    let level = val.iter().map(|p| p.a_market.gvas()).sum::<f64>() / m;
    let threshold = mean + sd / m.sqrt() + 1e-9 * level.max(1.0);
    let chosen = (0..grid.len()).rev().find(|&i| scores[i].validation_mae <= threshold).unwrap_or(best);
    let lambda = grid[chosen];
    let solution = fit(ind, series, groups, &FitOptions { lambda, ..opts.clone() })?;
    Ok(LambdaSelection { lambda, solution, scores })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{DemandValue, InertiaValue, SettlementPeriod};
    use crate::ingest::AggregatePoint;
    use chrono::NaiveDate;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn periods(n: usize) -> Vec<SettlementPeriod> {
        let mut p = SettlementPeriod::new(NaiveDate::from_ymd_opt(2022, 1, 1).unwrap(), 1).unwrap();
        (0..n)
            .map(|_| {
                let cur = p;
                p = p.next();
                cur
            })
            .collect()
    }

    fn series(periods: &[SettlementPeriod], market: &[f64], outturn: &[f64], demand: &[f64]) -> AggregateSeries {
        AggregateSeries::new(
            periods
                .iter()
                .enumerate()
                .map(|(t, &period)| AggregatePoint {
                    period,
                    a_market: InertiaValue::new(market[t]).unwrap(),
                    a_outturn: InertiaValue::new(outturn[t]).unwrap(),
                    demand: DemandValue::new(demand[t]).unwrap(),
                })
                .collect(),
        )
        .unwrap()
    }

    fn ids(n: usize) -> Vec<PlantId> {
        (0..n).map(|j| PlantId::new(format!("P{j}")).unwrap()).collect()
    }

    #[test]
    fn assemble_shapes() {
        let ps = periods(3);
        let ind = IndicatorMatrix::from_rows(ps.clone(), ids(2), vec![vec![0], vec![0, 1], vec![1]], vec![vec![]; 3])
            .unwrap();
        let s = series(&ps, &[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0], &[0.0; 3]);
        let sys = assemble(&ind, &s, &ColinearityGroups::singletons(2), true).unwrap();
        assert_eq!((sys.n_rows(), sys.n_cols()), (3, 3));

        let ind = IndicatorMatrix::from_rows(
            ps.clone(),
            ids(2),
            vec![vec![0], vec![0, 1], vec![1]],
            vec![vec![], vec![], vec![(0, 1)]],
        )
        .unwrap();
        let s = series(&ps, &[1.0, 2.0, 3.0], &[1.0, 2.0, 4.5], &[0.0; 3]);
        let sys = assemble(&ind, &s, &ColinearityGroups::singletons(2), true).unwrap();
        assert_eq!((sys.n_rows(), sys.n_cols()), (4, 3));
        assert_eq!(sys.row_kind[3], RowKind::Tso);
        assert_eq!(sys.y[3], 1.5);
        assert_eq!(sys.x[(3, 2)], 0.0);
        let sys = assemble(&ind, &s, &ColinearityGroups::singletons(2), false).unwrap();
        assert_eq!(sys.n_rows(), 3);

        // tied pair both on: coefficient 2
        let grouped = ColinearityGroups::from_groups(2, vec![vec![0, 1]]).unwrap();
        let sys = assemble(&ind, &s, &grouped, false).unwrap();
        assert_eq!(sys.n_cols(), 2);
        assert_eq!(sys.x[(1, 0)], 2.0);
    }

    #[test]
    fn assemble_drops_empty_rows_and_rejects_nothing() {
        let ps = periods(2);
        let ind = IndicatorMatrix::from_rows(ps.clone(), ids(1), vec![vec![], vec![0]], vec![vec![]; 2]).unwrap();
        let s = series(&ps, &[0.0, 2.0], &[0.0, 2.0], &[0.0, 0.0]);
        let sys = assemble(&ind, &s, &ColinearityGroups::singletons(1), true).unwrap();
        assert_eq!(sys.n_rows(), 1);
        let ind = IndicatorMatrix::from_rows(ps.clone(), ids(1), vec![vec![]; 2], vec![vec![]; 2]).unwrap();
        assert!(matches!(
            assemble(&ind, &s, &ColinearityGroups::singletons(1), true),
            Err(EstimatorError::Assembly(_))
        ));
    }

    #[test]
    fn nnls_examples() {
        let sys = DesignSystem::from_matrix(DMatrix::from_row_slice(1, 1, &[1.0]), DVector::from_vec(vec![3.4]), None)
            .unwrap();
        let sol = solve_nnls(&sys).unwrap();
        assert!((sol.w[0] - 3.4).abs() < 1e-12);
        let sys = DesignSystem::from_matrix(DMatrix::from_row_slice(1, 1, &[1.0]), DVector::from_vec(vec![-2.0]), None)
            .unwrap();
        assert_eq!(solve_nnls(&sys).unwrap().w, vec![0.0]);
        let bad =
            DesignSystem::from_matrix(DMatrix::from_row_slice(1, 1, &[f64::NAN]), DVector::from_vec(vec![1.0]), None)
                .unwrap();
        assert!(matches!(solve_nnls(&bad), Err(EstimatorError::InvalidInput(_))));
    }

    fn random_system(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DesignSystem {
        let x = DMatrix::from_fn(rows, cols + 1, |_, k| {
            if k < cols {
                (rng.random::<f64>() < 0.5) as u8 as f64
            } else {
                25.0 + 5.0 * rng.random::<f64>()
            }
        });
        let y = DVector::from_fn(rows, |i, _| {
            (0..cols).map(|k| x[(i, k)] * if k % 3 == 0 { 0.0 } else { 1.0 + k as f64 * 0.3 }).sum::<f64>()
                + 0.5 * x[(i, cols)]
                + rng.random::<f64>()
                - 0.5
        });
        DesignSystem::from_matrix(x, y, Some(cols)).unwrap()
    }

    #[test]
    fn l0_with_zero_lambda_is_nnls() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let sys = random_system(&mut rng, 50, 7);
        let a = solve_nnls(&sys).unwrap();
        for mode in [SolveMode::Exact, SolveMode::Heuristic, SolveMode::Auto] {
            let b = solve_l0(&sys, 0.0, mode).unwrap();
            assert_eq!(a.w, b.w);
            assert_eq!(a.support, b.support);
            assert!(b.diagnostics.exact);
        }
    }

    #[test]
    fn objective_is_recomputable() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let sys = random_system(&mut rng, 80, 9);
        for lambda in [0.0, 0.3, 3.0] {
            let sol = solve_l0(&sys, lambda, SolveMode::Exact).unwrap();
            let recomputed = sys.rss(&sol.column_weights()) + lambda * sol.diagnostics.n_nonzero as f64;
            assert!((recomputed - sol.objective).abs() <= 1e-9 * recomputed.max(1e-300));
            assert!(sol.w.iter().all(|&w| w >= 0.0) && sol.w_dem >= 0.0);
        }
    }

    #[test]
    fn exact_support_shrinks_with_lambda() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..5 {
            let sys = random_system(&mut rng, 40, 8);
            let mut last = usize::MAX;
            for lambda in [0.0, 0.1, 1.0, 3.0, 10.0, 30.0, 100.0] {
                let n = solve_l0(&sys, lambda, SolveMode::Exact).unwrap().diagnostics.n_nonzero;
                assert!(n <= last, "support grew at λ={lambda}");
                last = n;
            }
        }
    }

    #[test]
    fn column_permutation_is_equivariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let sys = random_system(&mut rng, 60, 6);
        let perm = [3usize, 0, 5, 1, 4, 2, 6];
        let x = DMatrix::from_fn(sys.n_rows(), 7, |i, k| sys.x[(i, perm[k])]);
        let permuted = DesignSystem::from_matrix(x, sys.y.clone(), Some(6)).unwrap();
        for lambda in [0.0, 1.0] {
            let a = solve_l0(&sys, lambda, SolveMode::Exact).unwrap().column_weights();
            let b = solve_l0(&permuted, lambda, SolveMode::Exact).unwrap().column_weights();
            for k in 0..7 {
                assert!((b[k] - a[perm[k]]).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn degenerate_and_identical_columns_are_flagged() {
        let x = DMatrix::from_row_slice(
            4,
            4,
            &[1.0, 1.0, 0.0, 2.0, 0.0, 0.0, 0.0, 1.0, 1.0, 1.0, 0.0, 3.0, 0.0, 0.0, 0.0, 1.5],
        );
        let y = DVector::from_vec(vec![5.0, 1.0, 7.0, 1.5]);
        let sys = DesignSystem::from_matrix(x, y, Some(3)).unwrap();
        let sol = solve_nnls(&sys).unwrap();
        assert_eq!(sol.w[2], 0.0);
        assert_eq!(sol.diagnostics.degenerate, vec![PlantId::new("c2").unwrap()]);
        assert_eq!(sol.diagnostics.collinear.len(), 1);
        assert!(sol.diagnostics.is_unstable());
    }

    #[test]
    fn select_lambda_single_point_grid_is_nnls() {
        let ps = periods(50);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let market: Vec<Vec<u32>> = (0..50).map(|_| (0..3).filter(|_| rng.random::<f64>() < 0.5).collect()).collect();
        let w = [1.0, 2.0, 0.5];
        let a: Vec<f64> = market.iter().map(|r| r.iter().map(|&j| w[j as usize]).sum::<f64>() + 0.3 * 20.0).collect();
        let ind = IndicatorMatrix::from_rows(ps.clone(), ids(3), market, vec![vec![]; 50]).unwrap();
        let s = series(&ps, &a, &a, &[20.0; 50]);
        let g = ColinearityGroups::singletons(3);
        let sel = select_lambda(&ind, &s, &g, &[0.0], 0.2, &FitOptions::default()).unwrap();
        assert_eq!(sel.lambda, 0.0);
        let direct = fit(&ind, &s, &g, &FitOptions::default()).unwrap();
        assert_eq!(sel.solution, direct);
        assert!(select_lambda(&ind, &s, &g, &[], 0.2, &FitOptions::default()).is_err());
    }
}
