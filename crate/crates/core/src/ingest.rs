//! CSV adapters for the published datasets, period alignment, indicator
//! matrices and colinear-plant grouping.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs::File;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::Serialize;
use thiserror::Error;

use crate::domain::{DemandValue, DomainError, FuelType, InertiaValue, Plant, PlantId, SettlementPeriod};

pub const POSITIONS_FILE: &str = "positions.csv";
pub const MARKET_FILE: &str = "market_inertia.csv";
pub const OUTTURN_FILE: &str = "outturn_inertia.csv";
pub const DEMAND_FILE: &str = "demand.csv";
pub const ACTIONS_FILE: &str = "actions.csv";
pub const PLANTS_FILE: &str = "plants.csv";
pub const GROUND_TRUTH_FILE: &str = "ground_truth.csv";

pub const DEFAULT_ON_THRESHOLD_MW: f64 = 0.0;
pub const DEFAULT_AGREEMENT: f64 = 0.995;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}:{line}: {message}")]
    Parse { path: PathBuf, line: u64, message: String },
    #[error("{path}: {message}")]
    Schema { path: PathBuf, message: String },
    #[error("alignment failed: {0}")]
    Alignment(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

impl IngestError {
    /// File the error refers to, when there is one.
    pub fn path(&self) -> Option<&Path> {
        match self {
            IngestError::Io { path, .. } | IngestError::Parse { path, .. } | IngestError::Schema { path, .. } => {
                Some(path)
            }
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum IngestWarning {
    /// Action rows for a plant that has no positions.
    UnknownActionPlant(PlantId),
    /// Plant whose positions never fall inside the aligned periods.
    PlantExcluded(PlantId),
    /// Rows (positions or actions) dated outside the aligned periods.
    RowsOutsidePeriods { table: &'static str, count: usize },
}

impl std::fmt::Display for IngestWarning {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            IngestWarning::UnknownActionPlant(p) => write!(f, "actions for {p} ignored: plant has no positions"),
            IngestWarning::PlantExcluded(p) => write!(f, "plant {p} has no positions in the selected periods"),
            IngestWarning::RowsOutsidePeriods { table, count } => {
                write!(f, "{count} {table} rows fall outside the selected periods")
            }
        }
    }
}

// --- csv plumbing -----------------------------------------------------------

struct CsvFile {
    path: PathBuf,
    reader: csv::Reader<File>,
    columns: Vec<usize>,
}

impl CsvFile {
    fn open(path: &Path, required: &[&str]) -> Result<Self, IngestError> {
        let file = File::open(path).map_err(|source| IngestError::Io { path: path.to_path_buf(), source })?;
        let mut reader = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(file);
        let headers = reader
            .headers()
            .map_err(|e| IngestError::Schema { path: path.to_path_buf(), message: e.to_string() })?
            .clone();
        let mut columns = Vec::with_capacity(required.len());
        for name in required {
            match headers.iter().position(|h| h.trim_start_matches('\u{feff}') == *name) {
                Some(i) => columns.push(i),
                None => {
                    return Err(IngestError::Schema {
                        path: path.to_path_buf(),
                        message: format!("missing column `{name}` (expected header {})", required.join(",")),
                    })
                }
            }
        }
        Ok(CsvFile { path: path.to_path_buf(), reader, columns })
    }

    /// Visits each record as its required fields in declaration order.
    fn for_each<F>(mut self, mut f: F) -> Result<(), IngestError>
    where
        F: FnMut(u64, &[&str]) -> Result<(), String>,
    {
        let mut record = csv::StringRecord::new();
        loop {
            let more = self.reader.read_record(&mut record).map_err(|e| IngestError::Parse {
                path: self.path.clone(),
                line: e.position().map(|p| p.line()).unwrap_or(0),
                message: e.to_string(),
            })?;
            if !more {
                return Ok(());
            }
            let line = record.position().map(|p| p.line()).unwrap_or(0);
            let fields: Vec<&str> = self.columns.iter().map(|&c| record.get(c).unwrap_or("")).collect();
            f(line, &fields).map_err(|message| IngestError::Parse { path: self.path.clone(), line, message })?;
        }
    }
}

fn parse_period(date: &str, period: &str) -> Result<SettlementPeriod, String> {
    let date = NaiveDate::parse_from_str(date, "%Y-%m-%d").map_err(|e| format!("bad date {date:?}: {e}"))?;
    let period: u32 = period.parse().map_err(|_| format!("bad period {period:?}"))?;
    SettlementPeriod::new(date, period).map_err(|e| e.to_string())
}

fn parse_f64(field: &str, what: &str) -> Result<f64, String> {
    let v: f64 = field.parse().map_err(|_| format!("bad {what} {field:?}"))?;
    if !v.is_finite() {
        return Err(format!("{what} must be finite, got {field}"));
    }
    Ok(v)
}

fn parse_plant(field: &str) -> Result<PlantId, String> {
    PlantId::new(field).map_err(|e: DomainError| e.to_string())
}

// --- tables -------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
pub struct PositionRow {
    pub plant: PlantId,
    pub period: SettlementPeriod,
    pub level_mw: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PositionsTable {
    pub rows: Vec<PositionRow>,
}

impl PositionsTable {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

pub fn load_positions(path: impl AsRef<Path>) -> Result<PositionsTable, IngestError> {
    let path = path.as_ref();
    let csv = CsvFile::open(path, &["plant_id", "date", "period", "level_mw"])?;
    let mut seen: HashMap<(PlantId, SettlementPeriod), u64> = HashMap::new();
    let mut rows = Vec::new();
    let mut duplicate = None;
    csv.for_each(|line, f| {
        let plant = parse_plant(f[0])?;
        let period = parse_period(f[1], f[2])?;
        let level_mw = parse_f64(f[3], "level_mw")?;
        if level_mw < 0.0 {
            return Err(format!("level_mw must be non-negative, got {level_mw}"));
        }
        if let Some(first) = seen.insert((plant.clone(), period), line) {
            duplicate.get_or_insert((plant.clone(), period, first, line));
        }
        rows.push(PositionRow { plant, period, level_mw });
        Ok(())
    })?;
    if let Some((plant, period, first, line)) = duplicate {
        return Err(IngestError::Schema {
            path: path.to_path_buf(),
            message: format!("duplicate position for {plant} at {period} (lines {first} and {line})"),
        });
    }
    Ok(PositionsTable { rows })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ActionDirection {
    On,
    Off,
    None,
}

impl ActionDirection {
    /// Whether a net accepted volume moves a plant across the on/off threshold.
    pub fn classify(level_mw: f64, accepted_delta_mw: f64, on_threshold_mw: f64) -> ActionDirection {
        let before = level_mw > on_threshold_mw;
        let after = level_mw + accepted_delta_mw > on_threshold_mw;
        match (before, after) {
            (false, true) => ActionDirection::On,
            (true, false) => ActionDirection::Off,
            _ => ActionDirection::None,
        }
    }

    pub fn indicator(self) -> i8 {
        match self {
            ActionDirection::On => 1,
            ActionDirection::Off => -1,
            ActionDirection::None => 0,
        }
    }
}

/// Net accepted balancing volume per (plant, period).
#[derive(Debug, Clone, PartialEq)]
pub struct ActionRow {
    pub plant: PlantId,
    pub period: SettlementPeriod,
    pub accepted_delta_mw: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ActionsTable {
    pub rows: Vec<ActionRow>,
}

impl ActionsTable {
    /// Nets multiple acceptances for the same (plant, period) into one row.
    pub fn from_acceptances(rows: impl IntoIterator<Item = ActionRow>) -> Self {
        let mut net: BTreeMap<(PlantId, SettlementPeriod), f64> = BTreeMap::new();
        for r in rows {
            *net.entry((r.plant, r.period)).or_insert(0.0) += r.accepted_delta_mw;
        }
        ActionsTable {
            rows: net
                .into_iter()
                .map(|((plant, period), accepted_delta_mw)| ActionRow { plant, period, accepted_delta_mw })
                .collect(),
        }
    }
}

pub fn load_actions(path: impl AsRef<Path>) -> Result<ActionsTable, IngestError> {
    let csv = CsvFile::open(path.as_ref(), &["plant_id", "date", "period", "accepted_delta_mw"])?;
    let mut rows = Vec::new();
    csv.for_each(|_, f| {
        rows.push(ActionRow {
            plant: parse_plant(f[0])?,
            period: parse_period(f[1], f[2])?,
            accepted_delta_mw: parse_f64(f[3], "accepted_delta_mw")?,
        });
        Ok(())
    })?;
    Ok(ActionsTable::from_acceptances(rows))
}

/// Plant metadata keyed by id, in file order.
#[derive(Debug, Clone, Default)]
pub struct PlantRegistry {
    plants: Vec<Plant>,
    index: HashMap<PlantId, usize>,
}

impl PlantRegistry {
    pub fn new(plants: Vec<Plant>) -> Self {
        let index = plants.iter().enumerate().map(|(i, p)| (p.id.clone(), i)).collect();
        PlantRegistry { plants, index }
    }

    pub fn get(&self, id: &PlantId) -> Option<&Plant> {
        self.index.get(id).map(|&i| &self.plants[i])
    }

    pub fn plants(&self) -> &[Plant] {
        &self.plants
    }

    pub fn fuel(&self, id: &PlantId) -> FuelType {
        self.get(id).map(|p| p.fuel).unwrap_or(FuelType::Other)
    }

    pub fn fuels_for(&self, ids: &[PlantId]) -> Vec<FuelType> {
        ids.iter().map(|id| self.fuel(id)).collect()
    }
}

pub fn load_plants(path: impl AsRef<Path>) -> Result<PlantRegistry, IngestError> {
    let path = path.as_ref();
    let csv = CsvFile::open(path, &["plant_id", "fuel", "nameplate_mva"])?;
    let mut plants: Vec<Plant> = Vec::new();
    let mut ids = BTreeSet::new();
    csv.for_each(|_, f| {
        let id = parse_plant(f[0])?;
        if !ids.insert(id.clone()) {
            return Err(format!("duplicate plant {id}"));
        }
        let nameplate = if f[2].is_empty() { None } else { Some(parse_f64(f[2], "nameplate_mva")?) };
        plants.push(Plant::new(id, FuelType::parse_lenient(f[1]), nameplate).map_err(|e| e.to_string())?);
        Ok(())
    })?;
    Ok(PlantRegistry::new(plants))
}

fn load_period_values(path: &Path, column: &'static str) -> Result<BTreeMap<SettlementPeriod, f64>, IngestError> {
    let csv = CsvFile::open(path, &["date", "period", column])?;
    let mut values = BTreeMap::new();
    csv.for_each(|_, f| {
        let period = parse_period(f[0], f[1])?;
        let v = parse_f64(f[2], column)?;
        if v < 0.0 {
            return Err(format!("{column} must be non-negative, got {v}"));
        }
        if values.insert(period, v).is_some() {
            return Err(format!("duplicate row for {period}"));
        }
        Ok(())
    })?;
    Ok(values)
}

/// Loads a `date,period,inertia_gvas` file.
pub fn load_inertia_series(path: impl AsRef<Path>) -> Result<BTreeMap<SettlementPeriod, f64>, IngestError> {
    load_period_values(path.as_ref(), "inertia_gvas")
}

/// Loads a `date,period,demand_gw` file.
pub fn load_demand_series(path: impl AsRef<Path>) -> Result<BTreeMap<SettlementPeriod, f64>, IngestError> {
    load_period_values(path.as_ref(), "demand_gw")
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AggregatePoint {
    #[serde(skip)]
    pub period: SettlementPeriod,
    pub a_market: InertiaValue,
    pub a_outturn: InertiaValue,
    pub demand: DemandValue,
}

impl AggregatePoint {
    /// Contribution of TSO actions: outturn minus market, floored at zero.
    pub fn a_tso(&self) -> f64 {
        (self.a_outturn.gvas() - self.a_market.gvas()).max(0.0)
    }
}

/// Per-period market inertia, outturn inertia and demand, strictly increasing in time.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AggregateSeries {
    points: Vec<AggregatePoint>,
}

impl AggregateSeries {
    pub fn new(mut points: Vec<AggregatePoint>) -> Result<Self, IngestError> {
        points.sort_by_key(|p| p.period);
        if points.windows(2).any(|w| w[0].period == w[1].period) {
            return Err(IngestError::Alignment("duplicate period in aggregate series".into()));
        }
        Ok(AggregateSeries { points })
    }

    pub fn points(&self) -> &[AggregatePoint] {
        &self.points
    }

    pub fn periods(&self) -> Vec<SettlementPeriod> {
        self.points.iter().map(|p| p.period).collect()
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn slice(&self, range: std::ops::Range<usize>) -> AggregateSeries {
        AggregateSeries { points: self.points[range].to_vec() }
    }

    /// Inner join of the three per-period inputs. Returns the joined series and
    /// the number of periods present in at least one input but not all three.
    pub fn join(
        market: &BTreeMap<SettlementPeriod, f64>,
        outturn: &BTreeMap<SettlementPeriod, f64>,
        demand: &BTreeMap<SettlementPeriod, f64>,
    ) -> Result<(AggregateSeries, usize), IngestError> {
        let union: BTreeSet<_> = market.keys().chain(outturn.keys()).chain(demand.keys()).copied().collect();
        let mut points = Vec::new();
        for period in &union {
            if let (Some(&m), Some(&o), Some(&d)) = (market.get(period), outturn.get(period), demand.get(period)) {
                points.push(AggregatePoint {
                    period: *period,
                    a_market: InertiaValue::new(m).map_err(|e| IngestError::Alignment(e.to_string()))?,
                    a_outturn: InertiaValue::new(o).map_err(|e| IngestError::Alignment(e.to_string()))?,
                    demand: DemandValue::new(d).map_err(|e| IngestError::Alignment(e.to_string()))?,
                });
            }
        }
        if points.is_empty() {
            return Err(IngestError::Alignment("market, outturn and demand inputs share no periods".into()));
        }
        let dropped = union.len() - points.len();
        Ok((AggregateSeries { points }, dropped))
    }
}

#[derive(Debug, Clone)]
pub struct AggregateLoad {
    pub series: AggregateSeries,
    pub dropped_periods: usize,
}

pub fn load_aggregate(
    market: impl AsRef<Path>,
    outturn: impl AsRef<Path>,
    demand: impl AsRef<Path>,
) -> Result<AggregateLoad, IngestError> {
    let m = load_inertia_series(market)?;
    let o = load_inertia_series(outturn)?;
    let d = load_demand_series(demand)?;
    let (series, dropped_periods) = AggregateSeries::join(&m, &o, &d)?;
    Ok(AggregateLoad { series, dropped_periods })
}

// --- indicators ---------------------------------------------------------------

/// Per-period on/off and TSO-action indicators, stored sparsely by row.
#[derive(Debug, Clone, PartialEq)]
pub struct IndicatorMatrix {
    pub periods: Vec<SettlementPeriod>,
    pub plants: Vec<PlantId>,
    /// Sorted column indices of plants ON in each period.
    market: Vec<Vec<u32>>,
    /// Sorted (column, ±1) entries of TSO actions in each period.
    tso: Vec<Vec<(u32, i8)>>,
}

impl IndicatorMatrix {
    /// Builds a matrix from per-period row entries. Entries are sorted and validated.
    pub fn from_rows(
        periods: Vec<SettlementPeriod>,
        plants: Vec<PlantId>,
        mut market: Vec<Vec<u32>>,
        mut tso: Vec<Vec<(u32, i8)>>,
    ) -> Result<Self, IngestError> {
        let bad = |m: &str| Err(IngestError::InvalidArgument(m.to_string()));
        if market.len() != periods.len() || tso.len() != periods.len() {
            return bad("indicator rows do not match period count");
        }
        let n = plants.len() as u32;
        for row in market.iter_mut() {
            row.sort_unstable();
            row.dedup();
            if row.last().is_some_and(|&j| j >= n) {
                return bad("market indicator column out of range");
            }
        }
        for row in tso.iter_mut() {
            row.sort_unstable();
            if row.windows(2).any(|w| w[0].0 == w[1].0) {
                return bad("duplicate TSO indicator entry");
            }
            row.retain(|&(_, v)| v != 0);
            if row.iter().any(|&(j, v)| j >= n || !(v == 1 || v == -1)) {
                return bad("TSO indicator entries must be -1, 0 or 1 within range");
            }
        }
        Ok(IndicatorMatrix { periods, plants, market, tso })
    }

    pub fn n_periods(&self) -> usize {
        self.periods.len()
    }

    pub fn n_plants(&self) -> usize {
        self.plants.len()
    }

    pub fn market(&self, t: usize, j: usize) -> u8 {
        self.market[t].binary_search(&(j as u32)).is_ok() as u8
    }

    pub fn tso(&self, t: usize, j: usize) -> i8 {
        self.tso[t].binary_search_by_key(&(j as u32), |&(c, _)| c).map(|i| self.tso[t][i].1).unwrap_or(0)
    }

    pub fn market_row(&self, t: usize) -> &[u32] {
        &self.market[t]
    }

    pub fn tso_row(&self, t: usize) -> &[(u32, i8)] {
        &self.tso[t]
    }

    pub fn plant_index(&self, id: &PlantId) -> Option<usize> {
        self.plants.iter().position(|p| p == id)
    }

    /// Market column of plant `j` as a packed bitset over periods.
    pub fn market_column_bits(&self, j: usize) -> Vec<u64> {
        let mut bits = vec![0u64; self.n_periods().div_ceil(64)];
        for (t, row) in self.market.iter().enumerate() {
            if row.binary_search(&(j as u32)).is_ok() {
                bits[t / 64] |= 1 << (t % 64);
            }
        }
        bits
    }

    /// Rows `range` of the matrix, same plant columns.
    pub fn slice(&self, range: std::ops::Range<usize>) -> IndicatorMatrix {
        IndicatorMatrix {
            periods: self.periods[range.clone()].to_vec(),
            plants: self.plants.clone(),
            market: self.market[range.clone()].to_vec(),
            tso: self.tso[range].to_vec(),
        }
    }
}

/// Derives indicator matrices over `periods`. Plants are ordered by id so that
/// row order in the inputs does not matter.
pub fn build_indicators(
    positions: &PositionsTable,
    actions: &ActionsTable,
    periods: &[SettlementPeriod],
    on_threshold_mw: f64,
) -> Result<(IndicatorMatrix, Vec<IngestWarning>), IngestError> {
    if !on_threshold_mw.is_finite() {
        return Err(IngestError::InvalidArgument(format!("on_threshold must be finite, got {on_threshold_mw}")));
    }
    let period_index: HashMap<SettlementPeriod, usize> = periods.iter().enumerate().map(|(i, p)| (*p, i)).collect();
    if period_index.len() != periods.len() {
        return Err(IngestError::InvalidArgument("duplicate periods".into()));
    }
    let mut warnings = Vec::new();

    let all_plants: BTreeSet<&PlantId> = positions.rows.iter().map(|r| &r.plant).collect();
    let mut levels: BTreeMap<&PlantId, HashMap<usize, f64>> = BTreeMap::new();
    let mut outside = 0;
    for row in &positions.rows {
        match period_index.get(&row.period) {
            Some(&t) => {
                levels.entry(&row.plant).or_default().insert(t, row.level_mw);
            }
            None => outside += 1,
        }
    }
    if outside > 0 {
        warnings.push(IngestWarning::RowsOutsidePeriods { table: "positions", count: outside });
    }
    for p in &all_plants {
        if !levels.contains_key(*p) {
            warnings.push(IngestWarning::PlantExcluded((*p).clone()));
        }
    }
    let plants: Vec<PlantId> = levels.keys().map(|p| (*p).clone()).collect();
    let col: HashMap<&PlantId, u32> = levels.keys().enumerate().map(|(j, p)| (*p, j as u32)).collect();

    let mut market = vec![Vec::new(); periods.len()];
    for (p, by_t) in &levels {
        let j = col[p];
        for (&t, &lvl) in by_t {
            if lvl > on_threshold_mw {
                market[t].push(j);
            }
        }
    }

    let mut tso = vec![Vec::new(); periods.len()];
    let mut unknown = BTreeSet::new();
    let mut outside = 0;
    for a in &actions.rows {
        let Some(&j) = col.get(&a.plant) else {
            if !all_plants.contains(&a.plant) {
                unknown.insert(a.plant.clone());
            }
            continue;
        };
        let Some(&t) = period_index.get(&a.period) else {
            outside += 1;
            continue;
        };
        let level = levels[&a.plant].get(&t).copied().unwrap_or(0.0);
        let v = ActionDirection::classify(level, a.accepted_delta_mw, on_threshold_mw).indicator();
        if v != 0 {
            tso[t].push((j, v));
        }
    }
    if outside > 0 {
        warnings.push(IngestWarning::RowsOutsidePeriods { table: "actions", count: outside });
    }
    warnings.extend(unknown.into_iter().map(IngestWarning::UnknownActionPlant));

    let matrix = IndicatorMatrix::from_rows(periods.to_vec(), plants, market, tso)?;
    Ok((matrix, warnings))
}

// --- colinearity ----------------------------------------------------------------

/// Partition of plant columns into groups constrained to share one inertia value.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ColinearityGroups {
    /// Each group sorted ascending; groups ordered by their first (representative) member.
    groups: Vec<Vec<usize>>,
}

impl ColinearityGroups {
    pub fn singletons(n: usize) -> Self {
        ColinearityGroups { groups: (0..n).map(|j| vec![j]).collect() }
    }

    /// Builds a partition from explicit groups. Every index below `n` must appear exactly once.
    pub fn from_groups(n: usize, groups: Vec<Vec<usize>>) -> Result<Self, IngestError> {
        let mut seen = vec![false; n];
        let mut out = Vec::with_capacity(groups.len());
        for mut g in groups {
            if g.is_empty() {
                continue;
            }
            g.sort_unstable();
            for &j in &g {
                if j >= n || std::mem::replace(&mut seen[j], true) {
                    return Err(IngestError::InvalidArgument(format!("plant index {j} missing or repeated in groups")));
                }
            }
            out.push(g);
        }
        if let Some(j) = seen.iter().position(|s| !s) {
            return Err(IngestError::InvalidArgument(format!("plant index {j} not in any group")));
        }
        out.sort_by_key(|g| g[0]);
        Ok(ColinearityGroups { groups: out })
    }

    pub fn groups(&self) -> &[Vec<usize>] {
        &self.groups
    }

    pub fn len(&self) -> usize {
        self.groups.len()
    }

    pub fn is_empty(&self) -> bool {
        self.groups.is_empty()
    }

    pub fn representative(&self, g: usize) -> usize {
        self.groups[g][0]
    }

    pub fn n_members(&self) -> usize {
        self.groups.iter().map(Vec::len).sum()
    }

    /// Group index per plant column.
    pub fn membership(&self) -> Vec<usize> {
        let mut m = vec![0; self.n_members()];
        for (g, members) in self.groups.iter().enumerate() {
            for &j in members {
                m[j] = g;
            }
        }
        m
    }
}

struct DisjointSet(Vec<usize>);

impl DisjointSet {
    fn find(&mut self, mut x: usize) -> usize {
        while self.0[x] != x {
            self.0[x] = self.0[self.0[x]];
            x = self.0[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
            self.0[hi] = lo;
        }
    }
}

/// Groups plants of the same fuel whose market on/off columns agree on at
/// least `agreement` of the periods, closed transitively.
pub fn group_colinear(
    ind: &IndicatorMatrix,
    fuels: &[FuelType],
    agreement: f64,
) -> Result<ColinearityGroups, IngestError> {
    if !(agreement > 0.5 && agreement <= 1.0) {
        return Err(IngestError::InvalidArgument(format!("agreement must be in (0.5, 1], got {agreement}")));
    }
    if fuels.len() != ind.n_plants() {
        return Err(IngestError::InvalidArgument("fuel list does not match plant columns".into()));
    }
    let n = ind.n_plants();
    let total = ind.n_periods();
    // largest number of disagreeing periods still counted as agreement
    let max_diff = ((1.0 - agreement) * total as f64 + 1e-9).floor() as u32;
    let columns: Vec<Vec<u64>> = (0..n).map(|j| ind.market_column_bits(j)).collect();
    let mut sets = DisjointSet((0..n).collect());
    for i in 0..n {
        for k in (i + 1)..n {
            if fuels[i] != fuels[k] {
                continue;
            }
            let mut diff = 0u32;
            for (a, b) in columns[i].iter().zip(&columns[k]) {
                diff += (a ^ b).count_ones();
                if diff > max_diff {
                    break;
                }
            }
            if diff <= max_diff {
                sets.union(i, k);
            }
        }
    }
    let mut by_root: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for j in 0..n {
        let r = sets.find(j);
        by_root.entry(r).or_default().push(j);
    }
    ColinearityGroups::from_groups(n, by_root.into_values().collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write(dir: &Path, name: &str, body: &str) -> PathBuf {
        let p = dir.join(name);
        std::fs::File::create(&p).unwrap().write_all(body.as_bytes()).unwrap();
        p
    }

    fn sp(day: u32, period: u32) -> SettlementPeriod {
        SettlementPeriod::new(NaiveDate::from_ymd_opt(2022, 1, day).unwrap(), period).unwrap()
    }

    fn pid(s: &str) -> PlantId {
        PlantId::new(s).unwrap()
    }

    #[test]
    fn positions_parse_and_validate() {
        let dir = tempfile::tempdir().unwrap();
        let ok = write(
            dir.path(),
            "p.csv",
            "plant_id,date,period,level_mw\nA,2022-01-09,1,50\nA,2022-01-09,2,0\nB,2022-01-09,1,400.5\n",
        );
        assert_eq!(load_positions(&ok).unwrap().len(), 3);

        let empty = write(dir.path(), "e.csv", "plant_id,date,period,level_mw\n");
        assert!(load_positions(&empty).unwrap().is_empty());

        let neg = write(dir.path(), "n.csv", "plant_id,date,period,level_mw\nA,2022-01-09,1,50\nA,2022-01-09,2,-3\n");
        match load_positions(&neg) {
            Err(IngestError::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected parse error, got {other:?}"),
        }

        let dup = write(dir.path(), "d.csv", "plant_id,date,period,level_mw\nA,2022-01-09,1,50\nA,2022-01-09,1,60\n");
        assert!(matches!(load_positions(&dup), Err(IngestError::Schema { .. })));

        let bad_period = write(dir.path(), "b.csv", "plant_id,date,period,level_mw\nA,2022-01-09,49,50\n");
        assert!(matches!(load_positions(&bad_period), Err(IngestError::Parse { .. })));
    }

    fn series_csv(col: &str, periods: impl Iterator<Item = u32>, value: f64) -> String {
        let mut s = format!("date,period,{col}\n");
        for p in periods {
            s.push_str(&format!("2022-01-09,{p},{value}\n"));
        }
        s
    }

    #[test]
    fn aggregate_join() {
        let dir = tempfile::tempdir().unwrap();
        let m = write(dir.path(), "m.csv", &series_csv("inertia_gvas", 1..=48, 150.0));
        let o = write(dir.path(), "o.csv", &series_csv("inertia_gvas", 1..=48, 160.0));
        let d = write(dir.path(), "d.csv", &series_csv("demand_gw", 1..=48, 30.0));
        let load = load_aggregate(&m, &o, &d).unwrap();
        assert_eq!(load.series.len(), 48);
        assert_eq!(load.dropped_periods, 0);

        let m2 =
            write(dir.path(), "m2.csv", &series_csv("inertia_gvas", (1..=48).filter(|p| *p != 5 && *p != 6), 150.0));
        let load = load_aggregate(&m2, &o, &d).unwrap();
        assert_eq!(load.series.len(), 46);
        assert_eq!(load.dropped_periods, 2);
        assert!((load.series.points()[0].a_tso() - 10.0).abs() < 1e-12);

        let no_gw = write(dir.path(), "bad.csv", &series_csv("demand_mw", 1..=48, 30.0));
        assert!(matches!(load_aggregate(&m, &o, &no_gw), Err(IngestError::Schema { .. })));

        let other_day = write(dir.path(), "x.csv", "date,period,inertia_gvas\n2021-01-01,1,100\n");
        assert!(matches!(load_aggregate(&other_day, &o, &d), Err(IngestError::Alignment(_))));
    }

    #[test]
    fn actions_net_out() {
        let dir = tempfile::tempdir().unwrap();
        let a = write(
            dir.path(),
            "a.csv",
            "plant_id,date,period,accepted_delta_mw\nA,2022-01-09,1,30\nA,2022-01-09,1,-10\nB,2022-01-09,1,5\n",
        );
        let t = load_actions(&a).unwrap();
        assert_eq!(t.rows.len(), 2);
        assert_eq!(t.rows[0].accepted_delta_mw, 20.0);
    }

    fn positions(rows: &[(&str, SettlementPeriod, f64)]) -> PositionsTable {
        PositionsTable {
            rows: rows.iter().map(|(p, t, l)| PositionRow { plant: pid(p), period: *t, level_mw: *l }).collect(),
        }
    }

    fn actions(rows: &[(&str, SettlementPeriod, f64)]) -> ActionsTable {
        ActionsTable::from_acceptances(rows.iter().map(|(p, t, d)| ActionRow {
            plant: pid(p),
            period: *t,
            accepted_delta_mw: *d,
        }))
    }

    #[test]
    fn indicator_examples() {
        let periods = vec![sp(9, 1)];
        let pos = positions(&[("A", sp(9, 1), 50.0), ("B", sp(9, 1), 0.0), ("C", sp(9, 1), 400.0)]);
        let act = actions(&[("B", sp(9, 1), 30.0), ("C", sp(9, 1), -400.0), ("GHOST", sp(9, 1), 10.0)]);
        let (ind, warnings) = build_indicators(&pos, &act, &periods, 0.0).unwrap();
        assert_eq!(ind.plants, vec![pid("A"), pid("B"), pid("C")]);
        assert_eq!((ind.market(0, 0), ind.tso(0, 0)), (1, 0));
        assert_eq!((ind.market(0, 1), ind.tso(0, 1)), (0, 1));
        assert_eq!((ind.market(0, 2), ind.tso(0, 2)), (1, -1));
        assert_eq!(warnings, vec![IngestWarning::UnknownActionPlant(pid("GHOST"))]);
    }

    #[test]
    fn indicators_are_order_independent_and_consistent() {
        let periods: Vec<_> = (1..=6).map(|p| sp(9, p)).collect();
        let mut rows = Vec::new();
        for (i, name) in ["P1", "P2", "P3", "P4"].iter().enumerate() {
            for (k, t) in periods.iter().enumerate() {
                rows.push((*name, *t, if (i + k) % 3 == 0 { 0.0 } else { 10.0 * (i + 1) as f64 }));
            }
        }
        let acts = vec![
            ("P1", periods[0], 20.0),
            ("P2", periods[1], -20.0),
            ("P3", periods[2], 5.0),
            ("P1", periods[0], -5.0),
        ];
        let (a, _) = build_indicators(&positions(&rows), &actions(&acts), &periods, 0.0).unwrap();
        rows.reverse();
        let mut acts_rev = acts.clone();
        acts_rev.reverse();
        let (b, _) = build_indicators(&positions(&rows), &actions(&acts_rev), &periods, 0.0).unwrap();
        assert_eq!(a, b);
        for t in 0..a.n_periods() {
            for j in 0..a.n_plants() {
                match a.tso(t, j) {
                    1 => assert_eq!(a.market(t, j), 0),
                    -1 => assert_eq!(a.market(t, j), 1),
                    _ => {}
                }
            }
        }
    }

    #[test]
    fn excluded_plants_warn() {
        let periods = vec![sp(9, 1)];
        let pos = positions(&[("A", sp(9, 1), 50.0), ("LATE", sp(10, 1), 50.0)]);
        let (ind, warnings) = build_indicators(&pos, &ActionsTable::default(), &periods, 0.0).unwrap();
        assert_eq!(ind.n_plants(), 1);
        assert!(warnings.contains(&IngestWarning::PlantExcluded(pid("LATE"))));
    }

    fn matrix_from_columns(cols: &[Vec<u8>]) -> IndicatorMatrix {
        let t_len = cols[0].len();
        let periods: Vec<_> = (0..t_len)
            .map(|t| {
                SettlementPeriod::new(
                    NaiveDate::from_ymd_opt(2022, 1, 1).unwrap() + chrono::Duration::days((t / 48) as i64),
                    (t % 48) as u32 + 1,
                )
                .unwrap()
            })
            .collect();
        let plants = (0..cols.len()).map(|j| pid(&format!("P{j}"))).collect();
        let market = (0..t_len)
            .map(|t| cols.iter().enumerate().filter(|(_, c)| c[t] == 1).map(|(j, _)| j as u32).collect())
            .collect();
        IndicatorMatrix::from_rows(periods, plants, market, vec![Vec::new(); t_len]).unwrap()
    }

    /// Pairwise agreement counted directly, closed transitively by repeated merging.
    fn brute_force_groups(cols: &[Vec<u8>], fuels: &[FuelType], agreement: f64) -> Vec<Vec<usize>> {
        let n = cols.len();
        let t = cols[0].len() as f64;
        let mut label: Vec<usize> = (0..n).collect();
        loop {
            let mut changed = false;
            for i in 0..n {
                for k in 0..n {
                    let agree = cols[i].iter().zip(&cols[k]).filter(|(a, b)| a == b).count() as f64;
                    if fuels[i] == fuels[k] && agree / t >= agreement && label[i] != label[k] {
                        let m = label[i].min(label[k]);
                        label[i] = m;
                        label[k] = m;
                        changed = true;
                    }
                }
            }
            if !changed {
                break;
            }
        }
        let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for (j, &l) in label.iter().enumerate() {
            groups.entry(l).or_default().push(j);
        }
        groups.into_values().collect()
    }

    #[test]
    fn grouping_examples() {
        let base: Vec<u8> = (0..200).map(|t| ((t * 7) % 5 < 3) as u8).collect();
        let mut ninety = base.clone();
        for v in ninety.iter_mut().take(20) {
            *v = 1 - *v;
        }
        let other: Vec<u8> = (0..200).map(|t| (t % 2) as u8).collect();

        let ind = matrix_from_columns(&[base.clone(), base.clone()]);
        let g = group_colinear(&ind, &[FuelType::Ccgt; 2], 0.995).unwrap();
        assert_eq!(g.groups(), &[vec![0, 1]]);

        let ind = matrix_from_columns(&[base.clone(), ninety.clone()]);
        let g = group_colinear(&ind, &[FuelType::Ccgt; 2], 0.995).unwrap();
        assert_eq!(g.len(), 2);

        let cols = vec![base.clone(), other.clone(), base.clone(), base.clone()];
        let fuels = [FuelType::Hydro; 4];
        let ind = matrix_from_columns(&cols);
        let g = group_colinear(&ind, &fuels, 0.995).unwrap();
        assert_eq!(g.groups(), brute_force_groups(&cols, &fuels, 0.995).as_slice());
        assert_eq!(g.groups(), &[vec![0, 2, 3], vec![1]]);

        // different fuel blocks the merge
        let ind = matrix_from_columns(&[base.clone(), base.clone()]);
        let g = group_colinear(&ind, &[FuelType::Ccgt, FuelType::Coal], 0.995).unwrap();
        assert_eq!(g.len(), 2);

        assert!(group_colinear(&ind, &[FuelType::Ccgt; 2], 0.5).is_err());
    }

    #[test]
    fn full_agreement_only_groups_identical_columns() {
        let base: Vec<u8> = (0..100).map(|t| (t % 3 == 0) as u8).collect();
        let mut one_off = base.clone();
        one_off[17] ^= 1;
        let ind = matrix_from_columns(&[base.clone(), one_off, base]);
        let g = group_colinear(&ind, &[FuelType::Gas; 3], 1.0).unwrap();
        assert_eq!(g.groups(), &[vec![0, 2], vec![1]]);
        // the near-identical pair does merge at 0.99
        let g = group_colinear(&ind, &[FuelType::Gas; 3], 0.99).unwrap();
        assert_eq!(g.len(), 1);
    }

    #[test]
    fn transitive_chain_matches_brute_force() {
        // a~b and b~c at 0.95 but a and c differ on 8%
        let a: Vec<u8> = (0..100).map(|t| (t % 2) as u8).collect();
        let mut b = a.clone();
        for v in b.iter_mut().take(4) {
            *v ^= 1;
        }
        let mut c = b.clone();
        for v in c.iter_mut().skip(50).take(4) {
            *v ^= 1;
        }
        let cols = vec![a, b, c];
        let fuels = [FuelType::Coal; 3];
        let g = group_colinear(&matrix_from_columns(&cols), &fuels, 0.95).unwrap();
        assert_eq!(g.groups(), brute_force_groups(&cols, &fuels, 0.95).as_slice());
        assert_eq!(g.len(), 1);
    }
}
