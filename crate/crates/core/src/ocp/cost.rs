use serde::{Deserialize, Serialize};

use crate::crop_model::{CropParams, DailyInput, SimState};
use crate::diff::{DiffContext, RolloutFunctional, RolloutView};
use crate::document::FieldError;
use crate::scalar::Scalar;

/// Price coefficients of the stage and terminal costs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CostWeights {
    /// €/(°C²·day)
    pub c_theta: f64,
    /// €/day
    pub c_d: f64,
    /// €/MJ
    pub c_r: f64,
    /// ambient temperature, °C
    pub theta_0: f64,
    /// €/kg of yield
    pub c_crop: f64,
}

impl Default for CostWeights {
    fn default() -> Self {
        Self {
            c_theta: 1.8e-6,
            c_d: 0.02,
            c_r: 0.038,
            theta_0: 10.0,
            c_crop: 132.9,
        }
    }
}

impl CostWeights {
    /// Only the crop price is kept; inputs are free.
    pub fn zero_energy(&self) -> Self {
        Self {
            c_theta: 0.0,
            c_d: 0.0,
            c_r: 0.0,
            ..self.clone()
        }
    }

    /// Diagonal of the quadratic weight matrix R.
    pub fn r_matrix_diag(&self) -> [f64; 3] {
        [self.c_theta, self.c_d, 0.0]
    }

    pub fn r_vector(&self) -> [f64; 3] {
        [-2.0 * self.c_theta * self.theta_0, -2.0 * self.c_d, self.c_r]
    }

    pub fn q_vector(&self, params: &CropParams) -> [f64; 3] {
        [params.harvest_index * self.c_crop, 0.0, 0.0]
    }

    /// Per-day difference between the physical and quadratic stage costs.
    pub fn stage_offset(&self) -> f64 {
        self.c_theta * self.theta_0 * self.theta_0 + self.c_d
    }

    pub fn check(&self, prefix: &str, errors: &mut Vec<FieldError>) {
        for (k, v) in [
            ("c_theta", self.c_theta),
            ("c_d", self.c_d),
            ("c_r", self.c_r),
            ("c_crop", self.c_crop),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                errors.push(FieldError::new(format!("{prefix}{k}"), "must be finite and non-negative"));
            }
        }
        if !self.theta_0.is_finite() {
            errors.push(FieldError::new(format!("{prefix}theta_0"), "must be finite"));
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StageCostForm {
    /// c_θ(ϑ−ϑ₀)² + c_D(D−1)² + c_R·R; zero at the idle input.
    #[default]
    Physical,
    /// uᵀRu + rᵀu; the physical form minus a per-day constant.
    Quadratic,
}

/// Stage cost in €/day, physical form.
pub fn stage_cost(u: &DailyInput, w: &CostWeights) -> f64 {
    stage_cost_in(StageCostForm::Physical, &u.to_array(), w)
}

pub fn stage_cost_quadratic(u: &DailyInput, w: &CostWeights) -> f64 {
    stage_cost_in(StageCostForm::Quadratic, &u.to_array(), w)
}

pub(crate) fn stage_cost_in<S: Scalar>(form: StageCostForm, u: &[S; 3], w: &CostWeights) -> S {
    let [temp, drought, rad] = u.clone();
    match form {
        StageCostForm::Physical => {
            let dt = temp - w.theta_0;
            let dd = drought - 1.0;
            dt.clone() * dt * w.c_theta + dd.clone() * dd * w.c_d + rad * w.c_r
        }
        StageCostForm::Quadratic => {
            let r = w.r_vector();
            temp.clone() * temp.clone() * w.c_theta
                + drought.clone() * drought.clone() * w.c_d
                + temp * r[0]
                + drought * r[1]
                + rad * r[2]
        }
    }
}

/// Gradient of the stage cost with respect to (ϑ, D, R). Both forms share it.
pub(crate) fn stage_cost_gradient(u: &[f64; 3], w: &CostWeights) -> [f64; 3] {
    [
        2.0 * w.c_theta * (u[0] - w.theta_0),
        2.0 * w.c_d * (u[1] - 1.0),
        w.c_r,
    ]
}

/// Market value of the harvest, €/m².
pub fn terminal_value(x_n: &SimState, w: &CostWeights, params: &CropParams) -> f64 {
    params.harvest_index * w.c_crop * x_n.biomass
}

/// Sum of stage costs over a schedule, €/m² per cycle.
pub fn input_cost(inputs: &[DailyInput], w: &CostWeights, form: StageCostForm) -> f64 {
    inputs.iter().map(|u| stage_cost_in(form, &u.to_array(), w)).sum()
}

/// Per-cycle cost J: stage costs minus terminal value.
pub fn cycle_cost(inputs: &[DailyInput], x_n: &SimState, w: &CostWeights, params: &CropParams, form: StageCostForm) -> f64 {
    input_cost(inputs, w, form) - terminal_value(x_n, w, params)
}

/// Annualized cost J_t for a cycle of `n` steps of length `t`.
pub fn annualize(stage_sum: f64, value: f64, n: usize, t: f64) -> f64 {
    let n = n as f64;
    365.0 / n * stage_sum - 365.0 / (n * t) * value
}

/// Per-cycle cost functional for derivative evaluation.
pub struct CycleCost<'a> {
    pub weights: &'a CostWeights,
    pub form: StageCostForm,
}

impl RolloutFunctional for CycleCost<'_> {
    fn eval<S: Scalar>(&self, view: &RolloutView<S>, ctx: &DiffContext) -> S {
        let mut acc = view.sampling_time.constant(0.0);
        for u in &view.inputs {
            acc = acc + stage_cost_in(self.form, u, self.weights);
        }
        acc - view.final_state()[0].clone() * (ctx.params.harvest_index * self.weights.c_crop)
    }
}

/// Annualized cost functional; uses the view's sampling time.
pub struct AnnualCost<'a> {
    pub weights: &'a CostWeights,
    pub form: StageCostForm,
}

impl RolloutFunctional for AnnualCost<'_> {
    fn eval<S: Scalar>(&self, view: &RolloutView<S>, ctx: &DiffContext) -> S {
        let n = view.horizon() as f64;
        let mut stages = view.sampling_time.constant(0.0);
        for u in &view.inputs {
            stages = stages + stage_cost_in(self.form, u, self.weights);
        }
        let value = view.final_state()[0].clone() * (ctx.params.harvest_index * self.weights.c_crop);
        stages * (365.0 / n) - value / (view.sampling_time.clone() * n) * 365.0
    }
}
