use serde::{Deserialize, Serialize};

use super::dynamics::{f_solar, growth_rate, MATURITY_THRESHOLD};
use super::{CropParams, DailyInput, EnvConstants, ModelError, SimState};

/// Which discretization of the crop dynamics to roll out.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Variant {
    /// Exact max/min operators.
    S,
    /// Smoothed operators at the environment's epsilon.
    Sc,
    /// Smoothed operators with a scaled sampling time.
    Scs { sampling_time: f64 },
}

impl Variant {
    pub fn epsilon(&self, env: &EnvConstants) -> f64 {
        match self {
            Variant::S => 0.0,
            _ => env.epsilon,
        }
    }

    pub fn sampling_time(&self) -> f64 {
        match self {
            Variant::Scs { sampling_time } => *sampling_time,
            _ => 1.0,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Variant::S => "S",
            Variant::Sc => "SC",
            Variant::Scs { .. } => "SCS",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    /// Day 0 through day N.
    pub states: Vec<SimState>,
    /// Day 0 through day N − 1.
    pub inputs: Vec<DailyInput>,
    /// Interception fraction of each state, under the rollout's own operators.
    pub f_solar_series: Vec<f64>,
    pub variant: Variant,
    pub epsilon: f64,
}

impl Trajectory {
    pub fn horizon(&self) -> usize {
        self.inputs.len()
    }

    pub fn final_state(&self) -> &SimState {
        self.states.last().expect("trajectory has an initial state")
    }
}

/// Applies the chosen step once per input, starting from `x_init`.
pub fn rollout(
    x_init: &SimState,
    inputs: &[DailyInput],
    variant: Variant,
    env: &EnvConstants,
    params: &CropParams,
) -> Result<Trajectory, ModelError> {
    if !x_init.is_finite() {
        return Err(ModelError::NonFinite("initial state".into()));
    }
    if let Some(day) = inputs.iter().position(|u| !u.is_finite()) {
        return Err(ModelError::NonFinite(format!("input on day {day}")));
    }
    let ts = variant.sampling_time();
    if !ts.is_finite() || ts < 0.0 {
        return Err(ModelError::NonFinite(format!("sampling time {ts}")));
    }
    let eps = variant.epsilon(env);

    let mut states = Vec::with_capacity(inputs.len() + 1);
    let mut series = Vec::with_capacity(inputs.len() + 1);
    let mut x = *x_init;
    states.push(x);
    series.push(f_solar(&x, params, eps));
    for (day, u) in inputs.iter().enumerate() {
        let rate = growth_rate(&x.to_array(), &u.to_array(), env, params, eps);
        x = SimState::new(
            x.biomass + ts * rate[0],
            x.thermal_time + ts * rate[1],
            x.i50b + ts * rate[2],
        );
        if !x.is_finite() {
            return Err(ModelError::NonFinite(format!("state after day {day}")));
        }
        states.push(x);
        series.push(f_solar(&x, params, eps));
    }
    Ok(Trajectory {
        states,
        inputs: inputs.to_vec(),
        f_solar_series: series,
        variant,
        epsilon: eps,
    })
}

/// Maturity on `day`: the exact interception fraction is at most the
/// threshold (plus `tol`) and has decreased since the previous day.
pub fn is_mature(traj: &Trajectory, day: usize, params: &CropParams, tol: f64) -> bool {
    if day == 0 || day >= traj.states.len() {
        return false;
    }
    let today = f_solar(&traj.states[day], params, 0.0);
    let yesterday = f_solar(&traj.states[day - 1], params, 0.0);
    today <= MATURITY_THRESHOLD + tol && today < yesterday
}

pub fn first_mature_day(traj: &Trajectory, params: &CropParams, tol: f64) -> Option<usize> {
    (1..traj.states.len()).find(|&d| is_mature(traj, d, params, tol))
}

/// Harvestable mass, kg/m².
pub fn yield_mass(state: &SimState, params: &CropParams) -> f64 {
    params.harvest_index * state.biomass
}

/// Repeats one input every day until the crop matures or `cap_days` pass.
/// Returns the trajectory up to the maturity day (or the cap) and the
/// maturity day, if any.
pub fn simulate_until_mature(
    x_init: &SimState,
    input: &DailyInput,
    variant: Variant,
    env: &EnvConstants,
    params: &CropParams,
    cap_days: usize,
) -> Result<(Trajectory, Option<usize>), ModelError> {
    let full = rollout(x_init, &vec![*input; cap_days], variant, env, params)?;
    match first_mature_day(&full, params, 0.0) {
        Some(day) => Ok((truncate(full, day), Some(day))),
        None => Ok((full, None)),
    }
}

fn truncate(mut traj: Trajectory, days: usize) -> Trajectory {
    traj.states.truncate(days + 1);
    traj.f_solar_series.truncate(days + 1);
    traj.inputs.truncate(days);
    traj
}
