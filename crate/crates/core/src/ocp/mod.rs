//! Optimal input scheduling: cost functions, fixed and free final-time
//! problems, and the horizon iteration.

mod config;
mod cost;
pub mod lbfgs;
mod solve;

use thiserror::Error;

use crate::document::{render_errors, FieldError};

pub use config::{Bounds, OcpConfig, Tolerances};
pub use cost::{
    annualize, cycle_cost, input_cost, stage_cost, stage_cost_quadratic, terminal_value, AnnualCost, CostWeights,
    CycleCost, StageCostForm,
};
pub use solve::{
    algorithm1, annualized_cost, build_report, next_horizon, resample, solve_fixed, solve_fixed_from, solve_free,
    solve_free_from, total_cost, HorizonSearch, HorizonStep, SolveReport,
};

#[derive(Debug, Error)]
pub enum OcpError {
    #[error("invalid configuration:\n{}", render_errors(.0))]
    InvalidConfig(Vec<FieldError>),
    #[error("numeric failure: {0}")]
    NonFinite(String),
}
