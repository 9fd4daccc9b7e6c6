use serde::{Deserialize, Serialize};

use crate::scalar::Scalar;

use super::CropParams;

/// Grams to kilograms; RUE is in g/MJ while biomass is tracked in kg/m².
const G_TO_KG: f64 = 1e-3;

/// Interception fraction at or below which a senescing crop is mature.
pub const MATURITY_THRESHOLD: f64 = 0.005;

/// Crop state on one day.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimState {
    /// Cumulative biomass, kg/m².
    pub biomass: f64,
    /// Cumulative temperature, °C·d.
    pub thermal_time: f64,
    /// Leaf senescence parameter I50B, °C·d.
    pub i50b: f64,
}

impl SimState {
    pub fn new(biomass: f64, thermal_time: f64, i50b: f64) -> Self {
        Self {
            biomass,
            thermal_time,
            i50b,
        }
    }

    /// Freshly planted crop: no biomass, no thermal time.
    pub fn planting(params: &CropParams) -> Self {
        Self::new(0.0, 0.0, params.i50b_init)
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.biomass, self.thermal_time, self.i50b]
    }

    pub fn from_array(x: [f64; 3]) -> Self {
        Self::new(x[0], x[1], x[2])
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|x| x.is_finite())
    }
}

/// Daily control input.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DailyInput {
    /// Mean daily temperature, °C.
    pub temp: f64,
    /// Drought index, 0 = fully watered, 1 = fully dry.
    pub drought: f64,
    /// Photosynthetically usable radiation, MJ/(m²·d).
    pub radiation: f64,
}

impl DailyInput {
    pub fn new(temp: f64, drought: f64, radiation: f64) -> Self {
        Self {
            temp,
            drought,
            radiation,
        }
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.temp, self.drought, self.radiation]
    }

    pub fn from_array(u: [f64; 3]) -> Self {
        Self::new(u[0], u[1], u[2])
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|x| x.is_finite())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnvConstants {
    /// CO₂ concentration, ppm.
    pub co2: f64,
    /// Smoothing constant of the max/min approximations.
    pub epsilon: f64,
}

impl Default for EnvConstants {
    fn default() -> Self {
        Self {
            co2: 700.0,
            epsilon: 1e-4,
        }
    }
}

/// Smooth over-approximation of `max(a, b)`:
/// `(a + b + sqrt((a − b)² + eps)) / 2`. Exact `max` when `eps == 0`.
pub fn smooth_max<S: Scalar>(a: S, b: S, eps: f64) -> S {
    if eps == 0.0 {
        return if a.value() >= b.value() { a } else { b };
    }
    let d = a.clone() - b.clone();
    (a + b + (d.clone() * d + eps).sqrt()) * 0.5
}

/// `−smooth_max(−a, −b, eps)`; never above `min(a, b)`.
pub fn smooth_min<S: Scalar>(a: S, b: S, eps: f64) -> S {
    -smooth_max(-a, -b, eps)
}

/// Radiation interception of the canopy: minimum of the leaf-growth and
/// leaf-senescence logistic branches (smoothed when `eps > 0`).
pub fn f_solar(state: &SimState, params: &CropParams, eps: f64) -> f64 {
    f_solar_with(state.thermal_time, state.i50b, params, eps)
}

pub fn f_solar_with<S: Scalar>(thermal_time: S, i50b: S, params: &CropParams, eps: f64) -> S {
    let (growth, senescence) = interception_branches(thermal_time, i50b, params);
    smooth_min(growth, senescence, eps)
}

fn interception_branches<S: Scalar>(thermal_time: S, i50b: S, params: &CropParams) -> (S, S) {
    let one = thermal_time.constant(1.0);
    let growth = one.clone() * params.f_solar_max
        / (one.clone() + ((thermal_time.clone() - params.i50a) * -0.01).exp());
    let senescence = one.clone() * params.f_solar_max
        / (one + ((thermal_time + i50b - params.t_sum) * 0.01).exp());
    (growth, senescence)
}

/// `ln f_solar` with the exact minimum, evaluated in log space so that it
/// stays finite and well scaled deep into senescence.
pub fn ln_f_solar_exact<S: Scalar>(thermal_time: S, i50b: S, params: &CropParams) -> S {
    let ln_max = params.f_solar_max.ln();
    let growth = -((thermal_time.clone() - params.i50a) * -0.01).softplus() + ln_max;
    let senescence = -((thermal_time + i50b - params.t_sum) * 0.01).softplus() + ln_max;
    if growth.value() <= senescence.value() {
        growth
    } else {
        senescence
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StressFactors<S> {
    pub f_temp: S,
    pub f_heat: S,
    pub f_co2: S,
    pub f_water: S,
}

/// Temperature, heat, CO₂ and water response factors for one day.
///
/// `eps == 0` uses the exact clamps; `eps > 0` replaces each temperature and
/// water clamp with its smooth counterpart. The CO₂ response is always exact:
/// CO₂ is a fixed constant, never a decision variable.
pub fn stress_factors(
    input: &DailyInput,
    env: &EnvConstants,
    params: &CropParams,
    eps: f64,
) -> StressFactors<f64> {
    stress_factors_with(input.temp, input.drought, env, params, eps)
}

pub fn stress_factors_with<S: Scalar>(
    temp: S,
    drought: S,
    env: &EnvConstants,
    params: &CropParams,
    eps: f64,
) -> StressFactors<S> {
    let one = temp.constant(1.0);
    let zero = temp.constant(0.0);

    let ramp = (temp.clone() - params.t_base) / (params.t_opt - params.t_base);
    let f_temp = smooth_max(smooth_min(ramp, one.clone(), eps), zero.clone(), eps);

    let decline = -((temp - params.t_heat) / (params.t_extreme - params.t_heat)) + 1.0;
    let f_heat = smooth_max(smooth_min(one.clone(), decline, eps), zero, eps);

    let co2 = env.co2.clamp(350.0, 700.0);
    let f_co2 = one.constant(1.0 + params.s_co2 * (co2 - 350.0));

    let f_water = smooth_min(one.clone(), one - drought * params.s_water, eps);

    StressFactors {
        f_temp,
        f_heat,
        f_co2,
        f_water,
    }
}

/// Daily increment `f(x, u)` of (biomass, thermal time, i50b).
pub fn growth_rate<S: Scalar>(
    state: &[S; 3],
    input: &[S; 3],
    env: &EnvConstants,
    params: &CropParams,
    eps: f64,
) -> [S; 3] {
    let [_, thermal_time, i50b] = state.clone();
    let [temp, drought, radiation] = input.clone();

    let sf = stress_factors_with(temp.clone(), drought, env, params, eps);
    let interception = f_solar_with(thermal_time, i50b, params, eps);
    let stress = smooth_min(sf.f_heat.clone(), sf.f_water.clone(), eps);

    let d_biomass = radiation * interception * sf.f_co2 * sf.f_temp * stress * (params.rue * G_TO_KG);
    let d_thermal = smooth_max(temp.clone() - params.t_base, temp.constant(0.0), eps);
    let d_i50b = (-sf.f_heat + 1.0) * params.i50_max_heat + (-sf.f_water + 1.0) * params.i50_max_water;

    [d_biomass, d_thermal, d_i50b]
}

fn advance(state: &SimState, rate: [f64; 3], sampling_time: f64) -> SimState {
    SimState::new(
        state.biomass + sampling_time * rate[0],
        state.thermal_time + sampling_time * rate[1],
        state.i50b + sampling_time * rate[2],
    )
}

/// Non-smooth model step with exact max/min operators.
pub fn step_s(state: &SimState, input: &DailyInput, env: &EnvConstants, params: &CropParams) -> SimState {
    let rate = growth_rate(&state.to_array(), &input.to_array(), env, params, 0.0);
    advance(state, rate, 1.0)
}

/// Smoothed model step at `env.epsilon`.
pub fn step_sc(state: &SimState, input: &DailyInput, env: &EnvConstants, params: &CropParams) -> SimState {
    let rate = growth_rate(&state.to_array(), &input.to_array(), env, params, env.epsilon);
    advance(state, rate, 1.0)
}

/// Smoothed model step with the increment scaled by `sampling_time`.
pub fn step_scs(
    state: &SimState,
    input: &DailyInput,
    env: &EnvConstants,
    params: &CropParams,
    sampling_time: f64,
) -> SimState {
    let rate = growth_rate(&state.to_array(), &input.to_array(), env, params, env.epsilon);
    advance(state, rate, sampling_time)
}
