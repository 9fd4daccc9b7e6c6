//! Crop-growth state-space models and optimal setpoint scheduling for
//! indoor vertical farms.

pub mod crop_model;
pub mod diff;
pub mod document;
pub mod io;
pub mod ocp;
pub mod scalar;
pub mod scenario;
