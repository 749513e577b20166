//! Reconstruction of per-plant inertia constants from aggregate system
//! inertia, with forecasting of market inertia and anticipation of
//! inertia-raising TSO actions.

pub mod anticipate;
pub mod domain;
pub mod estimator;
pub mod forecast;
pub mod ingest;
pub mod synth;
