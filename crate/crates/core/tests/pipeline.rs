use inertia_core::estimator::{fit, select_lambda, FitOptions, SolveMode, DEFAULT_LAMBDA_GRID};
use inertia_core::forecast::{evaluate, predict, DEFAULT_TRIGGER_GVAS};
use inertia_core::ingest::{
    build_indicators, group_colinear, load_actions, load_aggregate, load_plants, load_positions, ColinearityGroups,
    ACTIONS_FILE, DEFAULT_AGREEMENT, DEMAND_FILE, MARKET_FILE, OUTTURN_FILE, PLANTS_FILE, POSITIONS_FILE,
};
use inertia_core::synth::{generate, recovery_report, ScenarioConfig};

fn noiseless(seed: u64) -> ScenarioConfig {
    ScenarioConfig {
        n_plants: 12,
        n_periods: 480,
        noise_sigma: 0.0,
        tso_action_rate: 0.01,
        seed,
        ..ScenarioConfig::default()
    }
}

#[test]
fn fixtures_round_trip_through_ingest() {
    let scenario = generate(&ScenarioConfig { n_periods: 200, ..ScenarioConfig::default() }).unwrap();
    let dir = tempfile::tempdir().unwrap();
    scenario.write_fixtures(dir.path()).unwrap();

    let positions = load_positions(dir.path().join(POSITIONS_FILE)).unwrap();
    let actions = load_actions(dir.path().join(ACTIONS_FILE)).unwrap();
    let registry = load_plants(dir.path().join(PLANTS_FILE)).unwrap();
    let agg = load_aggregate(dir.path().join(MARKET_FILE), dir.path().join(OUTTURN_FILE), dir.path().join(DEMAND_FILE))
        .unwrap();
    assert_eq!(agg.dropped_periods, 0);
    assert_eq!(agg.series, scenario.series);
    assert_eq!(registry.plants().len(), scenario.plants.len());

    let (ind, warnings) = build_indicators(&positions, &actions, &agg.series.periods(), 0.0).unwrap();
    assert!(warnings.is_empty(), "{warnings:?}");
    assert_eq!(ind, scenario.indicators);
}

#[test]
fn same_seed_writes_identical_bytes() {
    let cfg = ScenarioConfig { n_periods: 96, ..ScenarioConfig::default() };
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    generate(&cfg).unwrap().write_fixtures(a.path()).unwrap();
    generate(&cfg).unwrap().write_fixtures(b.path()).unwrap();
    for f in [PLANTS_FILE, POSITIONS_FILE, ACTIONS_FILE, MARKET_FILE, OUTTURN_FILE, DEMAND_FILE] {
        assert_eq!(std::fs::read(a.path().join(f)).unwrap(), std::fs::read(b.path().join(f)).unwrap(), "{f}");
    }
}

#[test]
fn noiseless_fit_recovers_truth_and_predicts_exactly() {
    for seed in [1, 2, 3] {
        let s = generate(&noiseless(seed)).unwrap();
        let groups = ColinearityGroups::singletons(s.plants.len());
        let sol = fit(&s.indicators, &s.series, &groups, &FitOptions { lambda: 0.0, ..FitOptions::default() }).unwrap();
        assert!(sol.diagnostics.exact);
        let report = recovery_report(&sol, &s);
        assert!(report.max_error < 1e-6, "seed {seed}: {}", report.max_error);
        assert!((sol.w_dem - s.config.w_dem_true).abs() < 1e-6);

        let demand: Vec<_> = s.series.points().iter().map(|p| (p.period, p.demand.gw())).collect();
        let truth = TruthWeights(s.config.w_dem_true, s.w_true(), s.ids());
        let f = predict(&truth, &s.indicators, &demand, DEFAULT_TRIGGER_GVAS).unwrap();
        for (t, p) in f.points.iter().enumerate() {
            assert_eq!(p.predicted, s.clean_market(t));
            assert_eq!(p.predicted, s.series.points()[t].a_market.gvas());
        }
    }
}

struct TruthWeights(f64, Vec<f64>, Vec<inertia_core::domain::PlantId>);

impl inertia_core::estimator::PlantWeights for TruthWeights {
    fn w_dem(&self) -> f64 {
        self.0
    }
    fn weight(&self, id: &inertia_core::domain::PlantId) -> Option<f64> {
        self.2.iter().position(|p| p == id).map(|j| self.1[j])
    }
}

#[test]
fn penalised_fit_zeroes_absent_plants() {
    let s = generate(&noiseless(7)).unwrap();
    let groups = ColinearityGroups::singletons(s.plants.len());
    let sol = fit(
        &s.indicators,
        &s.series,
        &groups,
        &FitOptions { lambda: 0.1, mode: SolveMode::Exact, ..FitOptions::default() },
    )
    .unwrap();
    let report = recovery_report(&sol, &s);
    assert_eq!(report.false_positives, 0);
    assert_eq!(report.false_negatives, 0);
    assert!(report.max_error < 1e-6);
}

#[test]
fn colinear_pair_is_flagged_then_grouped() {
    let s = generate(&ScenarioConfig { colinear_pair: true, ..noiseless(4) }).unwrap();
    let single = ColinearityGroups::singletons(s.plants.len());
    let loose = fit(&s.indicators, &s.series, &single, &FitOptions::default()).unwrap();
    assert!(loose.diagnostics.is_unstable());
    let truth = s.w_true();
    assert!((loose.w[0] + loose.w[1] - truth[0] - truth[1]).abs() < 1e-6);

    let grouped = group_colinear(&s.indicators, &s.fuels(), DEFAULT_AGREEMENT).unwrap();
    assert_eq!(grouped.len(), s.plants.len() - 1);
    let tied = fit(&s.indicators, &s.series, &grouped, &FitOptions::default()).unwrap();
    assert_eq!(tied.w[0], tied.w[1]);
    assert!((tied.w[0] - truth[0]).abs() < 1e-6);
}

#[test]
fn held_out_forecast_is_evaluated() {
    let s = generate(&ScenarioConfig {
        n_plants: 10,
        n_periods: 960,
        noise_sigma: 0.5,
        seed: 5,
        ..ScenarioConfig::default()
    })
    .unwrap();
    let split = 720;
    let groups = ColinearityGroups::singletons(s.plants.len());
    let sol = fit(&s.indicators.slice(0..split), &s.series.slice(0..split), &groups, &FitOptions::default()).unwrap();
    let test_ind = s.indicators.slice(split..s.series.len());
    let test = s.series.slice(split..s.series.len());
    let demand: Vec<_> = test.points().iter().map(|p| (p.period, p.demand.gw())).collect();
    let mut f = predict(&sol, &test_ind, &demand, DEFAULT_TRIGGER_GVAS).unwrap();
    f.attach_actuals(&test.points().iter().map(|p| (p.period, p.a_market.gvas())).collect());
    let r = evaluate(&f).unwrap();
    assert_eq!(r.n_periods, 240);
    assert!(r.mae_gvas < 0.6, "{}", r.mae_gvas);
}

#[test]
fn noiseless_ties_pick_the_largest_lambda() {
    let s = generate(&noiseless(8)).unwrap();
    let groups = ColinearityGroups::singletons(s.plants.len());
    let sel = select_lambda(&s.indicators, &s.series, &groups, &[0.0, 0.1, 1.0], 0.2, &FitOptions::default()).unwrap();
    assert!(sel.scores.iter().all(|sc| sc.validation_mae < 1e-9));
    assert_eq!(sel.lambda, 1.0);
}

#[test]
fn all_wind_fleet_fits_demand_alone() {
    let s = generate(&ScenarioConfig { zero_fraction: 1.0, ..noiseless(9) }).unwrap();
    let groups = ColinearityGroups::singletons(s.plants.len());
    let sol = fit(&s.indicators, &s.series, &groups, &FitOptions { lambda: 0.1, ..FitOptions::default() }).unwrap();
    assert!(sol.w.iter().all(|&w| w == 0.0));
    assert!((sol.w_dem - s.config.w_dem_true).abs() < 1e-9);
}

#[test]
fn selected_lambda_zeroes_thirty_absent_plants() {
    let cfg = ScenarioConfig {
        n_plants: 40,
        zero_fraction: 0.75,
        n_periods: 6000,
        noise_sigma: 1.0,
        seed: 12,
        ..ScenarioConfig::default()
    };
    let s = generate(&cfg).unwrap();
    assert_eq!(s.plants.len() - s.n_nonzero(), 30);
    let groups = ColinearityGroups::singletons(s.plants.len());
    let sel =
        select_lambda(&s.indicators, &s.series, &groups, &DEFAULT_LAMBDA_GRID, 0.2, &FitOptions::default()).unwrap();
    let report = recovery_report(&sel.solution, &s);
    assert_eq!(report.false_positives, 0, "lambda {}", sel.lambda);
}
