use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use inertia_core::synth::ScenarioConfig;
use serde::Deserialize;

use crate::CliError;

/// Settings shared by every subcommand. A JSON file may supply any of them;
/// command-line flags take precedence.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub data: Option<PathBuf>,
    pub positions: Option<PathBuf>,
    pub market: Option<PathBuf>,
    pub outturn: Option<PathBuf>,
    pub demand: Option<PathBuf>,
    pub actions: Option<PathBuf>,
    pub plants: Option<PathBuf>,
    pub from: Option<NaiveDate>,
    pub to: Option<NaiveDate>,
    pub lambda: Option<f64>,
    pub lambda_grid: Option<Vec<f64>>,
    pub mode: Option<String>,
    pub agreement: Option<f64>,
    pub group: Option<bool>,
    pub validation_fraction: Option<f64>,
    pub on_threshold_mw: Option<f64>,
    pub trigger_gvas: Option<f64>,
    pub lead_minutes: Option<f64>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub synth: Option<ScenarioConfig>,
}

macro_rules! overlay {
    ($base:ident, $top:ident; $($field:ident),*) => {
        $( if $top.$field.is_some() { $base.$field = $top.$field; } )*
    };
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::input(format!("cannot read config {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::input(format!("invalid config {}: {e}", path.display())))
    }

    /// Fields set in `top` replace those in `self`.
    pub fn overlay(mut self, top: RunConfig) -> RunConfig {
        overlay!(self, top; data, positions, market, outturn, demand, actions, plants, from, to, lambda,
            lambda_grid, mode, agreement, group, validation_fraction, on_threshold_mw, trigger_gvas,
            lead_minutes, seed, out, synth);
        self
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let check = |ok: bool, msg: &str| if ok { Ok(()) } else { Err(CliError::input(msg.to_string())) };
        if let Some(t) = self.trigger_gvas {
            check(t.is_finite() && t > 0.0, "--trigger-gvas must be positive")?;
        }
        if let Some(l) = self.lambda {
            check(l.is_finite() && l >= 0.0, "--lambda must be non-negative")?;
        }
        if let Some(g) = &self.lambda_grid {
            check(
                !g.is_empty() && g.iter().all(|l| l.is_finite() && *l >= 0.0),
                "--lambda-grid needs non-negative values",
            )?;
        }
        if let Some(a) = self.agreement {
            check(a > 0.0 && a <= 1.0, "--agreement must lie in (0, 1]")?;
        }
        if let Some(m) = self.lead_minutes {
            check(m.is_finite() && m >= 0.0, "--lead-minutes must be non-negative")?;
        }
        if let Some(t) = self.on_threshold_mw {
            check(t.is_finite(), "--on-threshold-mw must be finite")?;
        }
        if let (Some(a), Some(b)) = (self.from, self.to) {
            check(a <= b, "--from must not be after --to")?;
        }
        Ok(())
    }

    /// Explicit path if given, else `name` inside the data directory.
    pub fn input(&self, explicit: &Option<PathBuf>, name: &str) -> Option<PathBuf> {
        explicit.clone().or_else(|| self.data.as_ref().map(|d| d.join(name)))
    }

    pub fn out_dir(&self) -> PathBuf {
        self.out.clone().unwrap_or_else(|| PathBuf::from("."))
    }
}
