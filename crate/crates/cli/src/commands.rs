use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use inertia_core::anticipate::{enumerate_plan, load_candidates, plan, ActionCandidate, ActionKind};
use inertia_core::domain::{PlantId, SettlementPeriod};
use inertia_core::estimator::{
    brute_force_oracle, fit, select_lambda, solve_l0, DesignSystem, FitOptions, FittedModel, ModelError, SolveMode,
    DEFAULT_LAMBDA_GRID, DEFAULT_VALIDATION_FRACTION,
};
use inertia_core::forecast::{detect_low, evaluate, predict, DEFAULT_TRIGGER_GVAS};
use inertia_core::ingest::{
    build_indicators, group_colinear, load_actions, load_demand_series, load_inertia_series, load_plants,
    load_positions, ActionsTable, AggregateSeries, ColinearityGroups, IngestError, IngestWarning, PlantRegistry,
    ACTIONS_FILE, DEFAULT_AGREEMENT, DEFAULT_ON_THRESHOLD_MW, DEMAND_FILE, MARKET_FILE, OUTTURN_FILE, PLANTS_FILE,
    POSITIONS_FILE,
};
use inertia_core::synth::{generate, ScenarioConfig, SynthError};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use crate::config::RunConfig;
use crate::{CliError, SynthArgs, EXIT_INFEASIBLE, EXIT_MISMATCH, EXIT_OK};

pub const MODEL_FILE: &str = "model.json";
pub const PLANT_REPORT_FILE: &str = "plant_report.csv";
pub const FORECAST_FILE: &str = "forecast.csv";
pub const PLAN_FILE: &str = "plan.json";
pub const SCENARIO_FILE: &str = "scenario.json";

impl From<IngestError> for CliError {
    fn from(e: IngestError) -> Self {
        CliError::input(e.to_string())
    }
}

impl From<inertia_core::estimator::EstimatorError> for CliError {
    fn from(e: inertia_core::estimator::EstimatorError) -> Self {
        CliError::model(e.to_string())
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::Io { .. } => CliError::input(e.to_string()),
            _ => CliError::model(e.to_string()),
        }
    }
}

impl From<SynthError> for CliError {
    fn from(e: SynthError) -> Self {
        CliError::input(e.to_string())
    }
}

fn required(cfg: &RunConfig, explicit: &Option<PathBuf>, name: &str, flag: &str) -> Result<PathBuf, CliError> {
    let path = cfg
        .input(explicit, name)
        .ok_or_else(|| CliError::input(format!("no {name} given; pass --data or --{flag}")))?;
    if !path.is_file() {
        return Err(CliError::input(format!("required input {} not found", path.display())));
    }
    Ok(path)
}

/// Explicitly named files must exist; files implied by `--data` may be absent.
fn optional(cfg: &RunConfig, explicit: &Option<PathBuf>, name: &str) -> Result<Option<PathBuf>, CliError> {
    match explicit {
        Some(p) if !p.is_file() => Err(CliError::input(format!("input {} not found", p.display()))),
        Some(p) => Ok(Some(p.clone())),
        None => Ok(cfg.data.as_ref().map(|d| d.join(name)).filter(|p| p.is_file())),
    }
}

fn in_window(cfg: &RunConfig, p: SettlementPeriod) -> bool {
    cfg.from.is_none_or(|d| p.date() >= d) && cfg.to.is_none_or(|d| p.date() <= d)
}

fn warn(warnings: &[IngestWarning]) {
    for w in warnings {
        eprintln!("warning: {w}");
    }
}

fn write_output(dir: &Path, name: &str, contents: &str) -> Result<PathBuf, CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::input(format!("cannot create {}: {e}", dir.display())))?;
    let path = dir.join(name);
    std::fs::write(&path, contents).map_err(|e| CliError::input(format!("cannot write {}: {e}", path.display())))?;
    Ok(path)
}

/// Writes to stdout, ignoring a closed pipe.
fn emit(text: &str) {
    let _ = std::io::stdout().lock().write_all(text.as_bytes());
}

fn print_json(value: &serde_json::Value) {
    emit(&format!("{}\n", serde_json::to_string_pretty(value).expect("json values serialise")));
}

struct TrainingData {
    series: AggregateSeries,
    positions: inertia_core::ingest::PositionsTable,
    actions: ActionsTable,
    registry: PlantRegistry,
}

fn load_training(cfg: &RunConfig) -> Result<TrainingData, CliError> {
    let positions_path = required(cfg, &cfg.positions, POSITIONS_FILE, "positions")?;
    let market_path = required(cfg, &cfg.market, MARKET_FILE, "market")?;
    let demand_path = required(cfg, &cfg.demand, DEMAND_FILE, "demand")?;
    let outturn_path = optional(cfg, &cfg.outturn, OUTTURN_FILE)?;
    let actions_path = optional(cfg, &cfg.actions, ACTIONS_FILE)?;
    let plants_path = optional(cfg, &cfg.plants, PLANTS_FILE)?;

    let window = |m: BTreeMap<SettlementPeriod, f64>| -> BTreeMap<SettlementPeriod, f64> {
        m.into_iter().filter(|(p, _)| in_window(cfg, *p)).collect()
    };
    let market = window(load_inertia_series(&market_path)?);
    let demand = window(load_demand_series(&demand_path)?);
    let outturn = match &outturn_path {
        Some(p) => window(load_inertia_series(p)?),
        None => market.clone(),
    };
    let (series, dropped) = AggregateSeries::join(&market, &outturn, &demand)?;
    if dropped > 0 {
        eprintln!("warning: {dropped} periods dropped for lacking market, outturn or demand values");
    }
    if series.is_empty() {
        return Err(CliError::input("no periods with market, outturn and demand values in range"));
    }
    Ok(TrainingData {
        series,
        positions: load_positions(&positions_path)?,
        actions: match &actions_path {
            Some(p) => load_actions(p)?,
            None => ActionsTable::default(),
        },
        registry: match &plants_path {
            Some(p) => load_plants(p)?,
            None => PlantRegistry::default(),
        },
    })
}

fn plant_report(model: &FittedModel) -> String {
    let mut rows: Vec<_> = model.plants.iter().collect();
    rows.sort_by(|a, b| a.fuel.cmp(&b.fuel).then(a.plant_id.cmp(&b.plant_id)));
    let mut out = String::from("plant_id,fuel,w_gvas,h_seconds\n");
    for p in rows {
        let h = p.h_seconds.map(|h| h.to_string()).unwrap_or_default();
        let _ = writeln!(out, "{},{},{},{}", p.plant_id, p.fuel, p.w_gvas, h);
    }
    out
}

pub fn cmd_fit(cfg: &RunConfig) -> Result<u8, CliError> {
    let data = load_training(cfg)?;
    let threshold = cfg.on_threshold_mw.unwrap_or(DEFAULT_ON_THRESHOLD_MW);
    let (ind, warnings) = build_indicators(&data.positions, &data.actions, &data.series.periods(), threshold)?;
    warn(&warnings);
    let groups = if cfg.group.unwrap_or(true) {
        let fuels = data.registry.fuels_for(&ind.plants);
        group_colinear(&ind, &fuels, cfg.agreement.unwrap_or(DEFAULT_AGREEMENT))?
    } else {
        ColinearityGroups::singletons(ind.n_plants())
    };
    let mode: SolveMode = match &cfg.mode {
        Some(m) => m.parse().map_err(|e: inertia_core::estimator::EstimatorError| CliError::input(e.to_string()))?,
        None => SolveMode::default(),
    };
    let opts = FitOptions { mode, ..FitOptions::default() };

    let (solution, scores) = match cfg.lambda {
        Some(lambda) => (fit(&ind, &data.series, &groups, &FitOptions { lambda, ..opts })?, Vec::new()),
        None => {
            let grid = cfg.lambda_grid.clone().unwrap_or_else(|| DEFAULT_LAMBDA_GRID.to_vec());
            let fraction = cfg.validation_fraction.unwrap_or(DEFAULT_VALIDATION_FRACTION);
            let sel = select_lambda(&ind, &data.series, &groups, &grid, fraction, &opts)?;
            (sel.solution, sel.scores)
        }
    };
    for set in &solution.diagnostics.collinear {
        let names: Vec<&str> = set.iter().map(PlantId::as_str).collect();
        eprintln!("warning: identical schedules, only the sum is identifiable: {}", names.join(", "));
    }
    let model = FittedModel::from_solution(&solution, &data.registry);
    let out = cfg.out_dir();
    write_output(&out, MODEL_FILE, &model.to_json())?;
    write_output(&out, PLANT_REPORT_FILE, &plant_report(&model))?;
    print_json(&json!({
        "lambda": model.lambda,
        "n_periods": data.series.len(),
        "n_plants": model.plants.len(),
        "n_groups": solution.groups.len(),
        "diagnostics": model.diagnostics,
        "collinear": solution.diagnostics.collinear,
        "lambda_scores": scores,
    }));
    Ok(EXIT_OK)
}

pub fn cmd_predict(cfg: &RunConfig, model_path: &Path) -> Result<u8, CliError> {
    let model = FittedModel::load(model_path)?;
    let positions = load_positions(required(cfg, &cfg.positions, POSITIONS_FILE, "positions")?)?;
    let demand: Vec<(SettlementPeriod, f64)> = load_demand_series(required(cfg, &cfg.demand, DEMAND_FILE, "demand")?)?
        .into_iter()
        .filter(|(p, _)| in_window(cfg, *p))
        .collect();
    if demand.is_empty() {
        return Err(CliError::input("no demand values in range"));
    }
    let periods: Vec<SettlementPeriod> = demand.iter().map(|(p, _)| *p).collect();
    let threshold = cfg.on_threshold_mw.unwrap_or(DEFAULT_ON_THRESHOLD_MW);
    let (ind, warnings) = build_indicators(&positions, &ActionsTable::default(), &periods, threshold)?;
    warn(&warnings);

    let trigger = cfg.trigger_gvas.unwrap_or(DEFAULT_TRIGGER_GVAS);
    let mut forecast = predict(&model, &ind, &demand, trigger).map_err(|e| CliError::input(e.to_string()))?;
    for id in &forecast.missing_plants {
        eprintln!("warning: plant {id} is not in the model; predicted as zero");
    }
    if let Some(path) = optional(cfg, &cfg.market, MARKET_FILE)? {
        forecast.attach_actuals(&load_inertia_series(path)?);
    }
    write_output(&cfg.out_dir(), FORECAST_FILE, &forecast.to_csv())?;

    let low: Vec<_> = detect_low(&forecast, trigger)
        .into_iter()
        .map(|p| json!({"date": p.date().to_string(), "period": p.period()}))
        .collect();
    let mut summary = json!({
        "n_periods": forecast.points.len(),
        "trigger_gvas": trigger,
        "low_inertia_periods": low,
    });
    if forecast.has_actuals() {
        let report = evaluate(&forecast).map_err(|e| CliError::input(e.to_string()))?;
        summary["evaluation"] = serde_json::to_value(report).expect("report serialises");
    }
    print_json(&summary);
    Ok(EXIT_OK)
}

pub fn cmd_anticipate(cfg: &RunConfig, candidates: &Path, baseline: f64) -> Result<u8, CliError> {
    if !(baseline.is_finite() && baseline >= 0.0) {
        return Err(CliError::input("--baseline must be non-negative"));
    }
    let cands = load_candidates(candidates).map_err(|e| CliError::input(e.to_string()))?;
    let trigger = cfg.trigger_gvas.unwrap_or(DEFAULT_TRIGGER_GVAS);
    let lead = cfg.lead_minutes.unwrap_or(f64::INFINITY);
    let p = plan(&cands, baseline, trigger, lead);
    let json = p.to_json();
    write_output(&cfg.out_dir(), PLAN_FILE, &json)?;
    emit(&json);
    if p.feasible {
        Ok(EXIT_OK)
    } else {
        eprintln!("warning: trigger {trigger} GVAs is unreachable; best effort reaches {} GVAs", p.achieved_gvas);
        Ok(EXIT_INFEASIBLE)
    }
}

pub fn cmd_synth(cfg: &RunConfig, flags: &SynthArgs) -> Result<u8, CliError> {
    let mut sc: ScenarioConfig = cfg.synth.clone().unwrap_or_default();
    if let Some(seed) = cfg.seed {
        sc.seed = seed;
    }
    macro_rules! set {
        ($($flag:ident => $field:ident),*) => { $( if let Some(v) = flags.$flag { sc.$field = v; } )* };
    }
    set!(n_plants => n_plants, n_periods => n_periods, zero_fraction => zero_fraction, noise_sigma => noise_sigma,
        w_dem => w_dem_true, duty_cycle => duty_cycle, tso_action_rate => tso_action_rate, start_date => start_date);
    if flags.colinear_pair {
        sc.colinear_pair = true;
    }
    let scenario = generate(&sc)?;
    let out = cfg.out_dir();
    scenario.write_fixtures(&out)?;
    let mut config = serde_json::to_string_pretty(&sc).expect("config serialises");
    config.push('\n');
    write_output(&out, SCENARIO_FILE, &config)?;
    print_json(&json!({
        "n_plants": scenario.plants.len(),
        "n_nonzero": scenario.n_nonzero(),
        "n_periods": scenario.series.len(),
        "seed": sc.seed,
    }));
    Ok(EXIT_OK)
}

fn random_design(rng: &mut ChaCha8Rng) -> DesignSystem {
    let rows = rng.random_range(10..=50);
    let cols = rng.random_range(2..=10);
    let truth: Vec<f64> =
        (0..cols).map(|_| if rng.random_bool(0.5) { rng.random_range(0.5..5.0) } else { 0.0 }).collect();
    let x = DMatrix::from_fn(rows, cols, |_, _| if rng.random_bool(0.5) { 1.0 } else { 0.0 });
    let clean = &x * DVector::from_column_slice(&truth);
    let y = clean.map(|v| v + rng.random_range(-1.0..1.0));
    DesignSystem::from_matrix(x, y, None).expect("shapes agree")
}

fn random_candidates(rng: &mut ChaCha8Rng) -> Vec<ActionCandidate> {
    let n = rng.random_range(1..=16);
    (0..n)
        .map(|i| {
            let start = rng.random_bool(0.3);
            ActionCandidate {
                plant_id: PlantId::new(format!("U{i:02}")).expect("valid id"),
                kind: if start { ActionKind::Start } else { ActionKind::KeepRunning },
                w_gvas: rng.random_range(0.5..10.0),
                cost: rng.random_range(100.0..5000.0),
                notice_minutes: if start { rng.random_range(0.0..180.0) } else { 0.0 },
                ramp_mw_per_min: rng.random_range(2.0..20.0),
                stable_export_mw: rng.random_range(50.0..400.0),
                currently_on: !start,
            }
        })
        .collect()
}

pub fn cmd_oracle_check(cfg: &RunConfig, instances: usize) -> Result<u8, CliError> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.unwrap_or(0));
    let mut l0_pass = 0;
    let mut l0_total = 0;
    for _ in 0..instances {
        let sys = random_design(&mut rng);
        for lambda in [0.0, 0.1, 1.0] {
            let exact = solve_l0(&sys, lambda, SolveMode::Exact)?;
            let oracle = brute_force_oracle(&sys, lambda)?;
            l0_total += 1;
            if (exact.objective - oracle.objective).abs() <= 1e-6 * oracle.objective.abs().max(1.0) {
                l0_pass += 1;
            }
        }
    }
    let mut plan_pass = 0;
    for _ in 0..instances {
        let cands = random_candidates(&mut rng);
        let baseline = rng.random_range(100.0..140.0);
        let lead = rng.random_range(30.0..240.0);
        let p = plan(&cands, baseline, DEFAULT_TRIGGER_GVAS, lead);
        let e = enumerate_plan(&cands, baseline, DEFAULT_TRIGGER_GVAS, lead).expect("small instance");
        if p.total_cost == e.total_cost && p.feasible == e.feasible {
            plan_pass += 1;
        }
    }
    let line = |name: &str, pass: usize, total: usize| {
        emit(&format!("{} {name}: {pass}/{total}\n", if pass == total { "PASS" } else { "FAIL" }));
    };
    line("l0 exact vs enumeration", l0_pass, l0_total);
    line("plan vs enumeration", plan_pass, instances);
    Ok(if l0_pass == l0_total && plan_pass == instances { EXIT_OK } else { EXIT_MISMATCH })
}
