use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::InertiaSolution;
use crate::domain::{FuelType, InertiaValue, PlantId};
use crate::ingest::PlantRegistry;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("cannot read model {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("malformed model JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("unsupported model schema_version {found} (expected {expected})")]
    SchemaVersion { found: u32, expected: u32 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelPlant {
    pub plant_id: PlantId,
    pub fuel: FuelType,
    pub w_gvas: f64,
    pub h_seconds: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelDiagnostics {
    pub rmse_gvas: f64,
    pub mae_gvas: f64,
    pub n_nonzero: usize,
    pub exact: bool,
}

/// Persisted fit: per-plant weights, demand coefficient and the grouping used.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedModel {
    pub schema_version: u32,
    pub lambda: f64,
    pub w_dem_gvas_per_gw: f64,
    pub plants: Vec<ModelPlant>,
    pub groups: Vec<Vec<PlantId>>,
    pub diagnostics: ModelDiagnostics,
}

impl FittedModel {
    pub fn from_solution(sol: &InertiaSolution, registry: &PlantRegistry) -> Self {
        let plants = sol
            .plants
            .iter()
            .zip(&sol.w)
            .map(|(id, &w)| {
                let meta = registry.get(id);
                ModelPlant {
                    plant_id: id.clone(),
                    fuel: meta.map_or(FuelType::Other, |p| p.fuel),
                    w_gvas: w,
                    h_seconds: meta.and_then(|p| p.h_seconds(InertiaValue::new(w).ok()?)),
                }
            })
            .collect();
        FittedModel {
            schema_version: SCHEMA_VERSION,
            lambda: sol.lambda,
            w_dem_gvas_per_gw: sol.w_dem,
            plants,
            groups: sol.groups.iter().map(|g| g.iter().map(|&j| sol.plants[j].clone()).collect()).collect(),
            diagnostics: ModelDiagnostics {
                rmse_gvas: sol.diagnostics.rmse,
                mae_gvas: sol.diagnostics.mae,
                n_nonzero: sol.diagnostics.n_nonzero,
                exact: sol.diagnostics.exact,
            },
        }
    }

    pub fn weight(&self, id: &PlantId) -> Option<f64> {
        self.plants.iter().find(|p| &p.plant_id == id).map(|p| p.w_gvas)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("model serialises");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self, ModelError> {
        let raw: serde_json::Value = serde_json::from_str(text)?;
        let found = raw.get("schema_version").and_then(|v| v.as_u64()).unwrap_or(0) as u32;
        if found != SCHEMA_VERSION {
            return Err(ModelError::SchemaVersion { found, expected: SCHEMA_VERSION });
        }
        Ok(serde_json::from_value(raw)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ModelError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|source| ModelError::Io { path: path.display().to_string(), source })?;
        Self::from_json(&text)
    }
}
