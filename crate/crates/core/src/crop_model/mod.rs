//! Discrete-time crop growth model with exact (S), smoothed (SC) and
//! variable-sampling-time (SCS) dynamics.
//!
//! State is (biomass, cumulative temperature, leaf senescence i50b); the daily
//! input is (mean temperature, drought index, radiation).

mod dynamics;
mod params;
mod rollout;

use thiserror::Error;

use crate::document::{render_errors, FieldError};

pub use dynamics::{
    f_solar, f_solar_with, growth_rate, ln_f_solar_exact, smooth_max, smooth_min, step_s, step_sc,
    step_scs, stress_factors, stress_factors_with, DailyInput, EnvConstants, SimState, StressFactors,
    MATURITY_THRESHOLD,
};
pub use params::CropParams;
pub use rollout::{
    first_mature_day, is_mature, rollout, simulate_until_mature, yield_mass, Trajectory, Variant,
};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("non-finite value: {0}")]
    NonFinite(String),
    #[error("invalid crop parameters:\n{}", render_errors(.0))]
    InvalidParams(Vec<FieldError>),
    #[error("cannot parse crop file: {0}")]
    Parse(String),
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}
