//! Value types shared across the crate.
//!
//! Units are fixed everywhere: inertia in GVAs, demand in GW, the demand
//! coefficient in GVAs per GW, nameplate ratings in MVA and inertia
//! constants (H) in seconds.

use std::fmt;
use std::str::FromStr;

use chrono::{Datelike, Duration, NaiveDate, NaiveDateTime, NaiveTime, Weekday};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DomainError {
    #[error("plant id must be a non-empty token, got {0:?}")]
    InvalidPlantId(String),
    #[error("settlement period must be within 1..=48, got {0}")]
    InvalidPeriod(u32),
    #[error("{what} must be finite and non-negative, got {value}")]
    InvalidValue { what: &'static str, value: f64 },
    #[error("nameplate capacity must be finite and strictly positive, got {0} MVA")]
    InvalidNameplate(f64),
}

/// Identifier of a generating unit, e.g. `T_CARR-1`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct PlantId(String);

impl PlantId {
    pub fn new(id: impl Into<String>) -> Result<Self, DomainError> {
        let id = id.into();
        let trimmed = id.trim();
        if trimmed.is_empty() || trimmed.chars().any(|c| c.is_whitespace() || c == ',') {
            return Err(DomainError::InvalidPlantId(id));
        }
        Ok(PlantId(trimmed.to_string()))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl TryFrom<String> for PlantId {
    type Error = DomainError;
    fn try_from(value: String) -> Result<Self, Self::Error> {
        PlantId::new(value)
    }
}

impl From<PlantId> for String {
    fn from(id: PlantId) -> Self {
        id.0
    }
}

impl fmt::Display for PlantId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FuelType {
    Ccgt,
    Coal,
    Biomass,
    Gas,
    Hydro,
    PumpedStorage,
    Nuclear,
    Wind,
    Solar,
    Battery,
    Other,
}

impl FuelType {
    pub const ALL: [FuelType; 11] = [
        FuelType::Ccgt,
        FuelType::Coal,
        FuelType::Biomass,
        FuelType::Gas,
        FuelType::Hydro,
        FuelType::PumpedStorage,
        FuelType::Nuclear,
        FuelType::Wind,
        FuelType::Solar,
        FuelType::Battery,
        FuelType::Other,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            FuelType::Ccgt => "ccgt",
            FuelType::Coal => "coal",
            FuelType::Biomass => "biomass",
            FuelType::Gas => "gas",
            FuelType::Hydro => "hydro",
            FuelType::PumpedStorage => "pumped_storage",
            FuelType::Nuclear => "nuclear",
            FuelType::Wind => "wind",
            FuelType::Solar => "solar",
            FuelType::Battery => "battery",
            FuelType::Other => "other",
        }
    }

    /// Parses a fuel label; anything unrecognised is `Other`.
    pub fn parse_lenient(s: &str) -> FuelType {
        let norm = s.trim().to_ascii_lowercase().replace(['-', ' '], "_");
        FuelType::ALL.into_iter().find(|f| f.as_str() == norm).unwrap_or(FuelType::Other)
    }
}

impl FromStr for FuelType {
    type Err = std::convert::Infallible;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(FuelType::parse_lenient(s))
    }
}

impl fmt::Display for FuelType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

fn check_non_negative(what: &'static str, value: f64) -> Result<f64, DomainError> {
    if value.is_finite() && value >= 0.0 {
        Ok(value)
    } else {
        Err(DomainError::InvalidValue { what, value })
    }
}

/// Raw inertia in GVAs.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize)]
pub struct InertiaValue(f64);

impl InertiaValue {
    pub fn new(gvas: f64) -> Result<Self, DomainError> {
        check_non_negative("inertia", gvas).map(InertiaValue)
    }

    pub fn gvas(self) -> f64 {
        self.0
    }
}

/// System demand in GW.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize)]
pub struct DemandValue(f64);

impl DemandValue {
    pub fn new(gw: f64) -> Result<Self, DomainError> {
        check_non_negative("demand", gw).map(DemandValue)
    }

    pub fn gw(self) -> f64 {
        self.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Plant {
    pub id: PlantId,
    pub fuel: FuelType,
    /// Rating in MVA; `None` when the source data does not carry one.
    pub nameplate_mva: Option<f64>,
    /// Only set for synthetic fleets.
    pub true_inertia: Option<InertiaValue>,
}

impl Plant {
    pub fn new(id: PlantId, fuel: FuelType, nameplate_mva: Option<f64>) -> Result<Self, DomainError> {
        if let Some(s) = nameplate_mva {
            if !(s.is_finite() && s > 0.0) {
                return Err(DomainError::InvalidNameplate(s));
            }
        }
        Ok(Plant { id, fuel, nameplate_mva, true_inertia: None })
    }

    pub fn with_true_inertia(mut self, w: InertiaValue) -> Self {
        self.true_inertia = Some(w);
        self
    }

    pub fn h_seconds(&self, w: InertiaValue) -> Option<f64> {
        self.nameplate_mva.and_then(|s| h_constant(w, s).ok())
    }
}

/// Inertia constant H in seconds: `w` (GVAs) normalised by the nameplate rating (MVA).
pub fn h_constant(w: InertiaValue, nameplate_mva: f64) -> Result<f64, DomainError> {
    if !(nameplate_mva.is_finite() && nameplate_mva > 0.0) {
        return Err(DomainError::InvalidNameplate(nameplate_mva));
    }
    Ok(w.gvas() * 1000.0 / nameplate_mva)
}

/// Inverse of [`h_constant`]: raw inertia in GVAs from H and the rating.
pub fn inertia_from_h(h_seconds: f64, nameplate_mva: f64) -> f64 {
    h_seconds * nameplate_mva / 1000.0
}

/// A half-hourly GB settlement period, keyed by local trading date and period number.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SettlementPeriod {
    date: NaiveDate,
    period: u8,
}

impl SettlementPeriod {
    pub const PER_DAY: u32 = 48;

    pub fn new(date: NaiveDate, period: u32) -> Result<Self, DomainError> {
        if !(1..=Self::PER_DAY).contains(&period) {
            return Err(DomainError::InvalidPeriod(period));
        }
        Ok(SettlementPeriod { date, period: period as u8 })
    }

    pub fn date(self) -> NaiveDate {
        self.date
    }

    pub fn period(self) -> u32 {
        self.period as u32
    }

    /// Following period, rolling over to period 1 of the next day.
    pub fn next(self) -> SettlementPeriod {
        if self.period() == Self::PER_DAY {
            SettlementPeriod { date: self.date + Duration::days(1), period: 1 }
        } else {
            SettlementPeriod { date: self.date, period: self.period + 1 }
        }
    }

    /// UTC start of the period. Period 1 starts at local (UK) midnight.
    pub fn utc_start(self) -> NaiveDateTime {
        let midnight = self.date.and_time(NaiveTime::MIN);
        let offset = if is_bst_at_local_midnight(self.date) { 1 } else { 0 };
        midnight - Duration::hours(offset) + Duration::minutes(30 * (self.period() as i64 - 1))
    }
}

impl fmt::Display for SettlementPeriod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} SP{}", self.date, self.period)
    }
}

fn last_sunday(year: i32, month: u32) -> NaiveDate {
    let first_next =
        if month == 12 { NaiveDate::from_ymd_opt(year + 1, 1, 1) } else { NaiveDate::from_ymd_opt(year, month + 1, 1) }
            .expect("valid month");
    let mut d = first_next - Duration::days(1);
    while d.weekday() != Weekday::Sun {
        d -= Duration::days(1);
    }
    d
}

// Clocks change at 01:00 UTC on the last Sundays of March and October, so
// local midnight is already BST on the day after the March change and still
// BST on the October change day.
fn is_bst_at_local_midnight(date: NaiveDate) -> bool {
    let start = last_sunday(date.year(), 3);
    let end = last_sunday(date.year(), 10);
    date > start && date <= end
}
