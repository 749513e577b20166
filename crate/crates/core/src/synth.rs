//! Synthetic fleets with known per-plant inertia.
//!
//! All randomness comes from a ChaCha8 stream seeded with `ScenarioConfig::seed`,
//! consumed in a fixed order, so a config always yields the same scenario.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use chrono::{Datelike, NaiveDate, Weekday};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{inertia_from_h, DemandValue, FuelType, InertiaValue, Plant, PlantId, SettlementPeriod};
use crate::estimator::PlantWeights;
use crate::ingest::{
    build_indicators, ActionRow, ActionsTable, AggregatePoint, AggregateSeries, ColinearityGroups, IndicatorMatrix,
    PlantRegistry, PositionRow, PositionsTable, ACTIONS_FILE, DEFAULT_ON_THRESHOLD_MW, DEMAND_FILE, GROUND_TRUTH_FILE,
    MARKET_FILE, OUTTURN_FILE, PLANTS_FILE, POSITIONS_FILE,
};

pub const H_RANGE_SECONDS: (f64, f64) = (2.0, 10.0);
pub const NAMEPLATE_RANGE_MVA: (f64, f64) = (20.0, 800.0);

const ZERO_FUELS: [FuelType; 3] = [FuelType::Wind, FuelType::Solar, FuelType::Battery];
const SYNCHRONOUS_FUELS: [FuelType; 7] = [
    FuelType::Ccgt,
    FuelType::Coal,
    FuelType::Biomass,
    FuelType::Gas,
    FuelType::Hydro,
    FuelType::PumpedStorage,
    FuelType::Nuclear,
];

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid scenario config: {0}")]
    InvalidConfig(String),
    #[error("cannot write {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub n_plants: usize,
    pub zero_fraction: f64,
    pub n_periods: usize,
    pub noise_sigma: f64,
    pub w_dem_true: f64,
    pub duty_cycle: f64,
    pub tso_action_rate: f64,
    pub seed: u64,
    /// Give the first two plants one shared schedule and one shared inertia.
    pub colinear_pair: bool,
    pub start_date: NaiveDate,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            n_plants: 30,
            zero_fraction: 0.3,
            n_periods: 2880,
            noise_sigma: 0.5,
            w_dem_true: 1.0,
            duty_cycle: 0.6,
            tso_action_rate: 0.002,
            seed: 42,
            colinear_pair: false,
            start_date: NaiveDate::from_ymd_opt(2020, 1, 1).expect("valid date"),
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: String| Err(SynthError::InvalidConfig(m));
        let unit = |v: f64| (0.0..=1.0).contains(&v);
        if self.n_plants == 0 {
            return bad("n_plants must be positive".into());
        }
        if self.n_periods == 0 {
            return bad("n_periods must be positive".into());
        }
        if !unit(self.zero_fraction) {
            return bad(format!("zero_fraction must lie in [0, 1], got {}", self.zero_fraction));
        }
        if !unit(self.duty_cycle) {
            return bad(format!("duty_cycle must lie in [0, 1], got {}", self.duty_cycle));
        }
        if !unit(self.tso_action_rate) {
            return bad(format!("tso_action_rate must lie in [0, 1], got {}", self.tso_action_rate));
        }
        if !(self.noise_sigma.is_finite() && self.noise_sigma >= 0.0) {
            return bad(format!("noise_sigma must be non-negative, got {}", self.noise_sigma));
        }
        if !(self.w_dem_true.is_finite() && self.w_dem_true >= 0.0) {
            return bad(format!("w_dem_true must be non-negative, got {}", self.w_dem_true));
        }
        if self.colinear_pair && self.n_plants < 2 {
            return bad("colinear_pair needs at least two plants".into());
        }
        Ok(())
    }

    fn n_zero(&self) -> usize {
        let eligible = if self.colinear_pair { self.n_plants - 2 } else { self.n_plants };
        ((self.zero_fraction * self.n_plants as f64).round() as usize).min(eligible)
    }
}

#[derive(Debug, Clone)]
pub struct Scenario {
    pub config: ScenarioConfig,
    /// Sorted by id, so index `j` is indicator column `j`.
    pub plants: Vec<Plant>,
    pub positions: PositionsTable,
    pub actions: ActionsTable,
    pub indicators: IndicatorMatrix,
    pub series: AggregateSeries,
    /// Plant indices forced to share a schedule and inertia.
    pub tied: Vec<Vec<usize>>,
}

/// Smooth daily cycle with a weekend dip and a winter peak, in GW.
pub fn demand_profile(period: SettlementPeriod) -> f64 {
    let hour = (period.period() as f64 - 1.0) / 2.0;
    let daily = 28.0 + 8.0 * (std::f64::consts::TAU * hour / 24.0 - std::f64::consts::FRAC_PI_2).sin();
    let weekend = matches!(period.date().weekday(), Weekday::Sat | Weekday::Sun);
    let seasonal = 1.0 + 0.15 * (std::f64::consts::TAU * period.date().ordinal0() as f64 / 365.25).cos();
    daily * seasonal * if weekend { 0.9 } else { 1.0 }
}

fn tenth(x: f64) -> f64 {
    (x * 10.0).round() / 10.0
}

pub fn generate(cfg: &ScenarioConfig) -> Result<Scenario, SynthError> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let n = cfg.n_plants;
    let width = n.to_string().len().max(3);
    let ids: Vec<PlantId> =
        (0..n).map(|j| PlantId::new(format!("SYN-{:0width$}", j + 1)).expect("generated ids are valid")).collect();

    let first_free = if cfg.colinear_pair { 2 } else { 0 };
    let mut is_zero = vec![false; n];
    for k in sample(&mut rng, n - first_free, cfg.n_zero()) {
        is_zero[k + first_free] = true;
    }

    let mut plants = Vec::with_capacity(n);
    let mut w_true = Vec::with_capacity(n);
    for &zero in &is_zero {
        let nameplate = tenth(rng.random_range(NAMEPLATE_RANGE_MVA.0..=NAMEPLATE_RANGE_MVA.1));
        let h = rng.random_range(H_RANGE_SECONDS.0..=H_RANGE_SECONDS.1);
        let (fuel, w) = if zero {
            (ZERO_FUELS[rng.random_range(0..ZERO_FUELS.len())], 0.0)
        } else {
            (SYNCHRONOUS_FUELS[rng.random_range(0..SYNCHRONOUS_FUELS.len())], inertia_from_h(h, nameplate))
        };
        plants.push((fuel, nameplate));
        w_true.push(w);
    }
    if cfg.colinear_pair {
        plants[1] = plants[0];
        w_true[1] = w_true[0];
    }
    let plants: Vec<Plant> = ids
        .iter()
        .zip(&plants)
        .zip(&w_true)
        .map(|((id, &(fuel, s)), &w)| {
            Plant::new(id.clone(), fuel, Some(s))
                .expect("nameplate in range")
                .with_true_inertia(InertiaValue::new(w).expect("non-negative"))
        })
        .collect();

    let mut periods = Vec::with_capacity(cfg.n_periods);
    let mut p = SettlementPeriod::new(cfg.start_date, 1).expect("period 1 exists");
    for _ in 0..cfg.n_periods {
        periods.push(p);
        p = p.next();
    }

    let noise = (cfg.noise_sigma > 0.0).then(|| Normal::new(0.0, cfg.noise_sigma).expect("finite sigma"));
    let mut positions = Vec::with_capacity(n * cfg.n_periods);
    let mut acceptances = Vec::new();
    let mut points = Vec::with_capacity(cfg.n_periods);
    let mut levels = vec![0.0; n];
    let mut started = vec![0.0; n];
    for &period in &periods {
        for j in 0..n {
            let s = plants[j].nameplate_mva.expect("synthetic plants carry a rating");
            if cfg.colinear_pair && j == 1 {
                levels[1] = levels[0];
                started[1] = started[0];
                continue;
            }
            levels[j] = 0.0;
            started[j] = 0.0;
            if rng.random_bool(cfg.duty_cycle) {
                levels[j] = tenth(s * rng.random_range(0.4..=1.0));
            } else if rng.random_bool(cfg.tso_action_rate) {
                started[j] = tenth(s * rng.random_range(0.4..=1.0));
            }
        }
        let demand = demand_profile(period);
        let mut market = cfg.w_dem_true * demand;
        let mut tso = 0.0;
        for j in 0..n {
            positions.push(PositionRow { plant: ids[j].clone(), period, level_mw: levels[j] });
            if levels[j] > 0.0 {
                market += w_true[j];
            }
            if started[j] > 0.0 {
                tso += w_true[j];
                acceptances.push(ActionRow { plant: ids[j].clone(), period, accepted_delta_mw: started[j] });
            }
        }
        if let Some(dist) = &noise {
            market = (market + dist.sample(&mut rng)).max(0.0);
        }
        let mut outturn = market;
        if tso > 0.0 {
            if let Some(dist) = &noise {
                tso = (tso + dist.sample(&mut rng)).max(0.0);
            }
            outturn = market + tso;
        }
        points.push(AggregatePoint {
            period,
            a_market: InertiaValue::new(market).expect("non-negative"),
            a_outturn: InertiaValue::new(outturn).expect("non-negative"),
            demand: DemandValue::new(demand).expect("positive demand"),
        });
    }

    let positions = PositionsTable { rows: positions };
    let actions = ActionsTable::from_acceptances(acceptances);
    let (indicators, _) = build_indicators(&positions, &actions, &periods, DEFAULT_ON_THRESHOLD_MW)
        .expect("generated tables are consistent");
    let series = AggregateSeries::new(points).expect("periods are increasing");
    let tied = if cfg.colinear_pair { vec![vec![0, 1]] } else { Vec::new() };
    Ok(Scenario { config: cfg.clone(), plants, positions, actions, indicators, series, tied })
}

impl Scenario {
    pub fn w_true(&self) -> Vec<f64> {
        self.plants.iter().map(|p| p.true_inertia.map_or(0.0, |w| w.gvas())).collect()
    }

    pub fn ids(&self) -> Vec<PlantId> {
        self.plants.iter().map(|p| p.id.clone()).collect()
    }

    pub fn registry(&self) -> PlantRegistry {
        PlantRegistry::new(self.plants.clone())
    }

    pub fn fuels(&self) -> Vec<FuelType> {
        self.plants.iter().map(|p| p.fuel).collect()
    }

    /// The injected ties as a grouping over all plants.
    pub fn tied_groups(&self) -> ColinearityGroups {
        let mut groups: Vec<Vec<usize>> = self.tied.clone();
        let tied: Vec<usize> = groups.iter().flatten().copied().collect();
        groups.extend((0..self.plants.len()).filter(|j| !tied.contains(j)).map(|j| vec![j]));
        ColinearityGroups::from_groups(self.plants.len(), groups).expect("ties partition the plants")
    }

    pub fn n_nonzero(&self) -> usize {
        self.w_true().iter().filter(|&&w| w > 0.0).count()
    }

    /// Noise-free market aggregate for period index `t`.
    pub fn clean_market(&self, t: usize) -> f64 {
        let w = self.w_true();
        let d = self.series.points()[t].demand.gw();
        self.indicators.market_row(t).iter().fold(self.config.w_dem_true * d, |acc, &j| acc + w[j as usize])
    }

    /// Writes the ingest CSVs plus `ground_truth.csv` into `dir`.
    pub fn write_fixtures(&self, dir: impl AsRef<Path>) -> Result<(), SynthError> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|source| SynthError::Io { path: dir.to_path_buf(), source })?;

        write_file(&dir.join(PLANTS_FILE), |out| {
            writeln!(out, "plant_id,fuel,nameplate_mva")?;
            for p in &self.plants {
                writeln!(out, "{},{},{}", p.id, p.fuel, p.nameplate_mva.unwrap_or_default())?;
            }
            Ok(())
        })?;
        write_file(&dir.join(GROUND_TRUTH_FILE), |out| {
            writeln!(out, "plant_id,w_true_gvas")?;
            for (p, w) in self.plants.iter().zip(self.w_true()) {
                writeln!(out, "{},{}", p.id, w)?;
            }
            Ok(())
        })?;
        write_file(&dir.join(POSITIONS_FILE), |out| {
            writeln!(out, "plant_id,date,period,level_mw")?;
            for r in &self.positions.rows {
                writeln!(out, "{},{},{},{}", r.plant, r.period.date(), r.period.period(), r.level_mw)?;
            }
            Ok(())
        })?;
        write_file(&dir.join(ACTIONS_FILE), |out| {
            writeln!(out, "plant_id,date,period,accepted_delta_mw")?;
            for r in &self.actions.rows {
                writeln!(out, "{},{},{},{}", r.plant, r.period.date(), r.period.period(), r.accepted_delta_mw)?;
            }
            Ok(())
        })?;
        let series = |file: &str, header: &str, value: fn(&AggregatePoint) -> f64| {
            write_file(&dir.join(file), |out| {
                writeln!(out, "date,period,{header}")?;
                for p in self.series.points() {
                    writeln!(out, "{},{},{}", p.period.date(), p.period.period(), value(p))?;
                }
                Ok(())
            })
        };
        series(MARKET_FILE, "inertia_gvas", |p| p.a_market.gvas())?;
        series(OUTTURN_FILE, "inertia_gvas", |p| p.a_outturn.gvas())?;
        series(DEMAND_FILE, "demand_gw", |p| p.demand.gw())?;
        Ok(())
    }
}

fn write_file(path: &Path, body: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>) -> Result<(), SynthError> {
    let io = |source| SynthError::Io { path: path.to_path_buf(), source };
    let mut out = BufWriter::new(File::create(path).map_err(io)?);
    body(&mut out).map_err(io)?;
    out.flush().map_err(io)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PlantRecovery {
    pub plant_id: PlantId,
    pub w_true: f64,
    pub w_recovered: f64,
    pub abs_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RecoveryReport {
    pub plants: Vec<PlantRecovery>,
    pub max_error: f64,
    pub mean_abs_error: f64,
    /// True zero, recovered positive.
    pub false_positives: usize,
    /// True positive, recovered zero.
    pub false_negatives: usize,
}

impl RecoveryReport {
    pub fn from_pairs(pairs: impl IntoIterator<Item = (PlantId, f64, f64)>) -> Self {
        let plants: Vec<PlantRecovery> = pairs
            .into_iter()
            .map(|(plant_id, w_true, w_recovered)| PlantRecovery {
                plant_id,
                w_true,
                w_recovered,
                abs_error: (w_recovered - w_true).abs(),
            })
            .collect();
        let max_error = plants.iter().map(|p| p.abs_error).fold(0.0, f64::max);
        let mean_abs_error =
            if plants.is_empty() { 0.0 } else { plants.iter().map(|p| p.abs_error).sum::<f64>() / plants.len() as f64 };
        RecoveryReport {
            max_error,
            mean_abs_error,
            false_positives: plants.iter().filter(|p| p.w_true == 0.0 && p.w_recovered > 0.0).count(),
            false_negatives: plants.iter().filter(|p| p.w_true > 0.0 && p.w_recovered == 0.0).count(),
            plants,
        }
    }
}

/// Compares fitted weights with the scenario's truth; plants the fit lacks count as zero.
pub fn recovery_report(sol: &impl PlantWeights, scenario: &Scenario) -> RecoveryReport {
    RecoveryReport::from_pairs(
        scenario.plants.iter().zip(scenario.w_true()).map(|(p, w)| (p.id.clone(), w, sol.weight(&p.id).unwrap_or(0.0))),
    )
}
