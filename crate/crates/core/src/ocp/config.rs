use serde::{Deserialize, Serialize};

use crate::crop_model::{CropParams, DailyInput, EnvConstants, SimState};
use crate::document::FieldError;

use super::cost::{CostWeights, StageCostForm};

/// Box bounds on (temperature °C, drought, radiation MJ/(m²·d)) and on the
/// sampling time.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub temp: (f64, f64),
    pub drought: (f64, f64),
    pub radiation: (f64, f64),
    pub sampling_time: (f64, f64),
}

impl Default for Bounds {
    fn default() -> Self {
        Self {
            temp: (0.0, 35.0),
            drought: (0.0, 1.0),
            radiation: (0.0, 35.0),
            sampling_time: (0.5, 1.5),
        }
    }
}

impl Bounds {
    pub fn lower(&self) -> [f64; 3] {
        [self.temp.0, self.drought.0, self.radiation.0]
    }

    pub fn upper(&self) -> [f64; 3] {
        [self.temp.1, self.drought.1, self.radiation.1]
    }

    pub fn contains(&self, u: &DailyInput) -> bool {
        let (lo, hi) = (self.lower(), self.upper());
        u.to_array().iter().enumerate().all(|(k, v)| lo[k] <= *v && *v <= hi[k])
    }

    pub fn clamp(&self, u: &DailyInput) -> DailyInput {
        let (lo, hi) = (self.lower(), self.upper());
        let a = u.to_array();
        DailyInput::new(a[0].clamp(lo[0], hi[0]), a[1].clamp(lo[1], hi[1]), a[2].clamp(lo[2], hi[2]))
    }

    pub fn check(&self, prefix: &str, errors: &mut Vec<FieldError>) {
        for (k, (lo, hi)) in [
            ("temp", self.temp),
            ("drought", self.drought),
            ("radiation", self.radiation),
            ("sampling_time", self.sampling_time),
        ] {
            if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                errors.push(FieldError::new(format!("{prefix}{k}"), format!("need finite lower <= upper, got [{lo}, {hi}]")));
            }
        }
        if self.sampling_time.0 <= 0.0 {
            errors.push(FieldError::new(format!("{prefix}sampling_time"), "lower bound must be positive"));
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    /// Projected-gradient norm relative to its value at the initial point.
    pub stationarity: f64,
    /// Bound on |f_solar(x_N) − 0.005|.
    pub constraint: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            stationarity: 1e-6,
            constraint: 1e-4,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OcpConfig {
    /// Days in the cycle for fixed-horizon solves.
    pub horizon: usize,
    /// Starting horizon of the horizon iteration.
    pub initial_horizon: usize,
    pub x_init: SimState,
    pub env: EnvConstants,
    pub bounds: Bounds,
    pub weights: CostWeights,
    pub stage_cost_form: StageCostForm,
    pub tolerances: Tolerances,
    /// Quasi-Newton iterations per multiplier update.
    pub max_inner_iterations: usize,
    /// Multiplier updates per solve.
    pub max_outer_iterations: usize,
    /// Horizon-update iterations of the free-final-time loop.
    pub max_horizon_iterations: usize,
    pub delta: f64,
    /// Constant schedule the solver starts from.
    pub initial_input: DailyInput,
    /// Further constant schedules tried on cold starts; the best result wins.
    pub extra_starts: Vec<DailyInput>,
    pub initial_sampling_time: f64,
    /// Impose f_solar(x_N) = 0.005.
    pub maturity_constraint: bool,
    pub crop: CropParams,
}

impl OcpConfig {
    pub fn new(crop: CropParams) -> Self {
        Self {
            horizon: 102,
            initial_horizon: 110,
            x_init: SimState::planting(&crop),
            env: EnvConstants::default(),
            bounds: Bounds::default(),
            weights: CostWeights::default(),
            stage_cost_form: StageCostForm::Physical,
            tolerances: Tolerances::default(),
            max_inner_iterations: 5000,
            max_outer_iterations: 50,
            max_horizon_iterations: 50,
            delta: 0.01,
            initial_input: DailyInput::new(17.5, 0.5, 17.5),
            extra_starts: vec![DailyInput::new(17.5, 0.0, 17.5), DailyInput::new(17.5, 0.0, 35.0)],
            initial_sampling_time: 1.0,
            maturity_constraint: true,
            crop,
        }
    }

    pub fn with_horizon(&self, horizon: usize) -> Self {
        Self {
            horizon,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<(), Vec<FieldError>> {
        let mut errors = Vec::new();
        self.check("", &mut errors);
        if errors.is_empty() {
            Ok(())
        } else {
            Err(errors)
        }
    }

    pub fn check(&self, prefix: &str, errors: &mut Vec<FieldError>) {
        let mut need = |ok: bool, k: &str, msg: &str| {
            if !ok {
                errors.push(FieldError::new(format!("{prefix}{k}"), msg));
            }
        };
        need(self.horizon >= 1, "horizon", "must be at least 1");
        need(self.initial_horizon >= 1, "initial_horizon", "must be at least 1");
        need(self.delta > 0.0 && self.delta.is_finite(), "delta", "must be positive");
        need(
            self.env.epsilon > 0.0 && self.env.epsilon.is_finite(),
            "epsilon",
            "must be positive (the solver differentiates the smoothed model)",
        );
        need(self.env.co2.is_finite() && self.env.co2 >= 0.0, "co2", "must be finite and non-negative");
        need(
            self.tolerances.stationarity > 0.0,
            "tolerances.stationarity",
            "must be positive",
        );
        need(self.tolerances.constraint > 0.0, "tolerances.constraint", "must be positive");
        need(self.max_inner_iterations >= 1, "max_inner_iterations", "must be at least 1");
        need(self.max_outer_iterations >= 1, "max_outer_iterations", "must be at least 1");
        need(self.max_horizon_iterations >= 1, "max_horizon_iterations", "must be at least 1");
        need(self.x_init.is_finite(), "x_init", "must be finite");
        self.bounds.check(&format!("{prefix}bounds."), errors);
        self.weights.check(&format!("{prefix}weights."), errors);
        if !self.bounds.contains(&self.initial_input) {
            errors.push(FieldError::new(format!("{prefix}initial_input"), "must lie within the input bounds"));
        }
        for (i, u) in self.extra_starts.iter().enumerate() {
            if !self.bounds.contains(u) {
                errors.push(FieldError::new(format!("{prefix}extra_starts[{i}]"), "must lie within the input bounds"));
            }
        }
        let (tlo, thi) = self.bounds.sampling_time;
        if !(tlo..=thi).contains(&self.initial_sampling_time) {
            errors.push(FieldError::new(
                format!("{prefix}initial_sampling_time"),
                "must lie within the sampling-time bounds",
            ));
        }
        if let Err(e) = self.crop.validate() {
            errors.extend(e.into_iter().map(|f| FieldError::new(format!("{prefix}crop.{}", f.path), f.message)));
        }
    }
}
