//! Minimum-cost keep-running / start decisions that lift system inertia to
//! the trigger level in a single settlement period.
//!
//! This is a covering knapsack: choose candidates whose inertia covers the
//! shortfall at least cost. Sums of inertia and cost are always taken in
//! plant-id order so that every code path agrees to the last bit.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::PlantId;

pub const ENUMERATION_LIMIT: usize = 24;

#[derive(Debug, Error)]
pub enum AnticipateError {
    #[error("cannot read {path}: {message}")]
    Read { path: String, message: String },
    #[error("{path}:{line}: {message}")]
    Parse { path: String, line: u64, message: String },
    #[error("invalid candidate {plant}: {message}")]
    InvalidCandidate { plant: String, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActionKind {
    KeepRunning,
    Start,
}

impl fmt::Display for ActionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ActionKind::KeepRunning => "keep_running",
            ActionKind::Start => "start",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionCandidate {
    pub plant_id: PlantId,
    pub kind: ActionKind,
    pub w_gvas: f64,
    pub cost: f64,
    pub notice_minutes: f64,
    pub ramp_mw_per_min: f64,
    pub stable_export_mw: f64,
    pub currently_on: bool,
}

impl ActionCandidate {
    pub fn validate(&self) -> Result<(), AnticipateError> {
        let fail = |m: &str| {
            Err(AnticipateError::InvalidCandidate { plant: self.plant_id.to_string(), message: m.to_string() })
        };
        let ok = |v: f64| v.is_finite() && v >= 0.0;
        if !ok(self.w_gvas) {
            return fail("w_gvas must be finite and non-negative");
        }
        if !ok(self.cost) {
            return fail("cost must be finite and non-negative");
        }
        if !ok(self.notice_minutes) {
            return fail("notice_minutes must be finite and non-negative");
        }
        if !(self.ramp_mw_per_min.is_finite() && self.ramp_mw_per_min > 0.0) {
            return fail("ramp_mw_per_min must be positive");
        }
        if !(self.stable_export_mw.is_finite() && self.stable_export_mw > 0.0) {
            return fail("stable_export_mw must be positive");
        }
        match (self.kind, self.currently_on) {
            (ActionKind::KeepRunning, false) => fail("keep_running requires currently_on"),
            (ActionKind::Start, true) => fail("start requires the plant to be off"),
            _ => Ok(()),
        }
    }

    /// Minutes from instruction until the plant is exporting at its stable level.
    pub fn minutes_to_stable(&self) -> f64 {
        self.notice_minutes + self.stable_export_mw / self.ramp_mw_per_min
    }
}

/// Reads `plant_id,kind,w_gvas,cost,notice_minutes,ramp_mw_per_min,stable_export_mw,currently_on`.
pub fn load_candidates(path: impl AsRef<Path>) -> Result<Vec<ActionCandidate>, AnticipateError> {
    let path = path.as_ref();
    let shown = path.display().to_string();
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| AnticipateError::Read { path: shown.clone(), message: e.to_string() })?;
    let mut out = Vec::new();
    for record in reader.deserialize::<ActionCandidate>() {
        let c = record.map_err(|e| AnticipateError::Parse {
            path: shown.clone(),
            line: e.position().map(|p| p.line()).unwrap_or(0),
            message: e.to_string(),
        })?;
        c.validate()?;
        out.push(c);
    }
    Ok(out)
}

/// Keep-running candidates always pass; starts must reach stable export within the lead time.
pub fn filter_feasible(cands: &[ActionCandidate], lead_time_minutes: f64) -> Vec<ActionCandidate> {
    cands
        .iter()
        .filter(|c| c.kind == ActionKind::KeepRunning || c.minutes_to_stable() <= lead_time_minutes)
        .cloned()
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Selection {
    pub plant_id: PlantId,
    pub kind: ActionKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionPlan {
    pub baseline_gvas: f64,
    pub trigger_gvas: f64,
    /// In plant-id order.
    pub selected: Vec<Selection>,
    pub achieved_gvas: f64,
    pub total_cost: f64,
    pub feasible: bool,
}

impl ActionPlan {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("plan serialises");
        s.push('\n');
        s
    }
}

/// Candidates sorted by (plant id, kind), the canonical summation order.
fn canonical(cands: &[ActionCandidate]) -> Vec<&ActionCandidate> {
    let mut v: Vec<&ActionCandidate> = cands.iter().collect();
    v.sort_by(|a, b| a.plant_id.cmp(&b.plant_id).then(a.kind.cmp(&b.kind)));
    v
}

fn totals(items: &[&ActionCandidate], chosen: impl Iterator<Item = usize>, baseline: f64) -> (f64, f64) {
    let mut achieved = baseline;
    let mut cost = 0.0;
    for i in chosen {
        achieved += items[i].w_gvas;
        cost += items[i].cost;
    }
    (achieved, cost)
}

fn build_plan(items: &[&ActionCandidate], chosen: &[usize], baseline: f64, trigger: f64) -> ActionPlan {
    let (achieved, cost) = totals(items, chosen.iter().copied(), baseline);
    ActionPlan {
        baseline_gvas: baseline,
        trigger_gvas: trigger,
        selected: chosen
            .iter()
            .map(|&i| Selection { plant_id: items[i].plant_id.clone(), kind: items[i].kind })
            .collect(),
        achieved_gvas: achieved,
        total_cost: cost,
        feasible: achieved >= trigger,
    }
}

/// Result when the trigger is out of reach: every candidate that adds inertia.
fn best_effort(items: &[&ActionCandidate], baseline: f64, trigger: f64) -> ActionPlan {
    let all: Vec<usize> = (0..items.len()).filter(|&i| items[i].w_gvas > 0.0).collect();
    build_plan(items, &all, baseline, trigger)
}

/// `(cost, chosen)` is preferred over `(best_cost, best)`: cheaper, or equal cost
/// and lexicographically smaller plant-id list.
fn better(cost: f64, chosen: &[usize], best: &Option<(f64, Vec<usize>)>) -> bool {
    match best {
        None => true,
        Some((bc, bset)) => cost < *bc || (cost == *bc && chosen < bset.as_slice()),
    }
}

struct Search<'a> {
    items: Vec<&'a ActionCandidate>,
    /// Item indices with positive inertia, by ascending cost per GVAs.
    order: Vec<usize>,
    baseline: f64,
    trigger: f64,
    best: Option<(f64, Vec<usize>)>,
    chosen: Vec<bool>,
}

impl Search<'_> {
    fn covered(&self) -> Option<f64> {
        let (achieved, cost) = totals(&self.items, (0..self.items.len()).filter(|&i| self.chosen[i]), self.baseline);
        (achieved >= self.trigger).then_some(cost)
    }

    /// Fractional cover of the remaining shortfall with items from `pos` on.
    /// `None` if even taking all of them cannot reach the trigger.
    fn bound(&self, pos: usize, cost: f64, achieved: f64) -> Option<f64> {
        let mut short = self.trigger - achieved;
        let mut lb = cost;
        let slack = 1e-9 * self.trigger.abs().max(1.0);
        for &i in &self.order[pos..] {
            if short <= 0.0 {
                break;
            }
            let it = self.items[i];
            let take = (short / it.w_gvas).min(1.0);
            lb += take * it.cost;
            short -= it.w_gvas;
        }
        (short <= slack).then_some(lb)
    }

    fn dfs(&mut self, pos: usize, cost: f64, achieved: f64) {
        let Some(lb) = self.bound(pos, cost, achieved) else { return };
        if let Some((best, _)) = &self.best {
            if lb > best + 1e-9 * best.abs().max(1.0) {
                return;
            }
        }
        if let Some(exact_cost) = self.covered() {
            let set: Vec<usize> = (0..self.items.len()).filter(|&i| self.chosen[i]).collect();
            if better(exact_cost, &set, &self.best) {
                self.best = Some((exact_cost, set));
            }
        }
        if pos == self.order.len() {
            return;
        }
        let i = self.order[pos];
        self.chosen[i] = true;
        self.dfs(pos + 1, cost + self.items[i].cost, achieved + self.items[i].w_gvas);
        self.chosen[i] = false;
        self.dfs(pos + 1, cost, achieved);
    }
}

/// Cheapest feasible set of actions reaching `trigger`; exact branch-and-bound.
///
/// Returns an empty plan when the baseline already meets the trigger, and a
/// best-effort plan flagged infeasible when no subset can reach it.
pub fn plan(cands: &[ActionCandidate], baseline: f64, trigger: f64, lead_time_minutes: f64) -> ActionPlan {
    let feasible = filter_feasible(cands, lead_time_minutes);
    let items = canonical(&feasible);
    if baseline >= trigger {
        return build_plan(&items, &[], baseline, trigger);
    }
    let reach = best_effort(&items, baseline, trigger);
    if !reach.feasible {
        return reach;
    }
    let mut order: Vec<usize> = (0..items.len()).filter(|&i| items[i].w_gvas > 0.0).collect();
    order.sort_by(|&a, &b| {
        let ra = items[a].cost / items[a].w_gvas;
        let rb = items[b].cost / items[b].w_gvas;
        ra.total_cmp(&rb).then(a.cmp(&b))
    });
    let n = items.len();
    let mut search = Search { items, order, baseline, trigger, best: None, chosen: vec![false; n] };
    search.dfs(0, 0.0, baseline);
    let (_, chosen) = search.best.expect("the full set reaches the trigger");
    build_plan(&search.items, &chosen, baseline, trigger)
}

/// Full 2^n enumeration with the same tie-breaking as [`plan`].
pub fn enumerate_plan(
    cands: &[ActionCandidate],
    baseline: f64,
    trigger: f64,
    lead_time_minutes: f64,
) -> Option<ActionPlan> {
    let feasible = filter_feasible(cands, lead_time_minutes);
    let items = canonical(&feasible);
    if items.len() > ENUMERATION_LIMIT {
        return None;
    }
    let n = items.len();
    let mut best: Option<(f64, Vec<usize>)> = None;
    for mask in 0u64..(1u64 << n) {
        let members = || (0..n).filter(move |&i| mask & (1 << i) != 0);
        let (achieved, cost) = totals(&items, members(), baseline);
        if achieved < trigger || best.as_ref().is_some_and(|(b, _)| cost > *b) {
            continue;
        }
        let set: Vec<usize> = members().collect();
        if better(cost, &set, &best) {
            best = Some((cost, set));
        }
    }
    Some(match best {
        Some((_, set)) => build_plan(&items, &set, baseline, trigger),
        None => best_effort(&items, baseline, trigger),
    })
}

/// Recomputes achieved inertia and cost from the candidates and checks them against the plan.
pub fn verify_plan(plan: &ActionPlan, cands: &[ActionCandidate], baseline: f64, trigger: f64) -> bool {
    let items = canonical(cands);
    let mut chosen = Vec::with_capacity(plan.selected.len());
    for s in &plan.selected {
        match items.iter().position(|c| c.plant_id == s.plant_id && c.kind == s.kind) {
            Some(i) if !chosen.contains(&i) => chosen.push(i),
            _ => return false,
        }
    }
    chosen.sort_unstable();
    let (achieved, cost) = totals(&items, chosen.iter().copied(), baseline);
    let close = |a: f64, b: f64| (a - b).abs() <= 1e-9 * a.abs().max(b.abs()).max(1.0);
    close(achieved, plan.achieved_gvas)
        && close(cost, plan.total_cost)
        && plan.baseline_gvas == baseline
        && plan.trigger_gvas == trigger
        && plan.feasible == (achieved >= trigger)
}
