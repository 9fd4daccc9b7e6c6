use std::path::Path;

use serde::{Deserialize, Serialize};
use toml::Table;

use crate::document::{FieldError, FieldReader};

use super::ModelError;

const BATTEN: &str = include_str!("../../data/crops/batten.toml");

/// Species and cultivar constants of the crop model.
///
/// Temperatures in °C, cumulative temperatures in °C·d, `rue` in g of biomass
/// per MJ of intercepted radiation, `s_co2` per ppm.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CropParams {
    pub t_sum: f64,
    pub harvest_index: f64,
    pub i50a: f64,
    pub i50b_init: f64,
    pub t_base: f64,
    pub t_opt: f64,
    pub rue: f64,
    pub i50_max_heat: f64,
    pub i50_max_water: f64,
    pub t_heat: f64,
    pub t_extreme: f64,
    pub s_co2: f64,
    pub s_water: f64,
    pub f_solar_max: f64,
}

impl CropParams {
    /// Calibrated wheat, cultivar "Batten".
    pub fn batten() -> Self {
        Self::from_toml_str(BATTEN).expect("bundled crop file is valid")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ModelError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| ModelError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml_str(&text)
    }

    pub fn from_toml_str(text: &str) -> Result<Self, ModelError> {
        let table: Table =
            toml::from_str(text).map_err(|e| ModelError::Parse(e.message().to_string()))?;
        Self::from_table(&table, "").map_err(ModelError::InvalidParams)
    }

    /// Reads every field of a parameter table, reporting all missing fields,
    /// unknown keys and invariant violations together.
    pub fn from_table(table: &Table, prefix: &str) -> Result<Self, Vec<FieldError>> {
        let mut r = FieldReader::new(table, prefix);
        let fields = [
            r.req_f64("t_sum"),
            r.req_f64("harvest_index"),
            r.req_f64("i50a"),
            r.req_f64("i50b_init"),
            r.req_f64("t_base"),
            r.req_f64("t_opt"),
            r.req_f64("rue"),
            r.req_f64("i50_max_heat"),
            r.req_f64("i50_max_water"),
            r.req_f64("t_heat"),
            r.req_f64("t_extreme"),
            r.req_f64("s_co2"),
            r.req_f64("s_water"),
            r.req_f64("f_solar_max"),
        ];
        r.reject_unknown();
        let mut errors = r.errors;
        if !errors.is_empty() {
            return Err(errors);
        }
        let v: Vec<f64> = fields.iter().map(|x| x.unwrap()).collect();
        let params = Self {
            t_sum: v[0],
            harvest_index: v[1],
            i50a: v[2],
            i50b_init: v[3],
            t_base: v[4],
            t_opt: v[5],
            rue: v[6],
            i50_max_heat: v[7],
            i50_max_water: v[8],
            t_heat: v[9],
            t_extreme: v[10],
            s_co2: v[11],
            s_water: v[12],
            f_solar_max: v[13],
        };
        params.check(prefix, &mut errors);
        if errors.is_empty() {
            Ok(params)
        } else {
            Err(errors)
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

    fn check(&self, prefix: &str, errors: &mut Vec<FieldError>) {
        let path = |k: &str| {
            if prefix.is_empty() {
                k.to_string()
            } else {
                format!("{prefix}.{k}")
            }
        };
        let named = [
            ("t_sum", self.t_sum),
            ("harvest_index", self.harvest_index),
            ("i50a", self.i50a),
            ("i50b_init", self.i50b_init),
            ("t_base", self.t_base),
            ("t_opt", self.t_opt),
            ("rue", self.rue),
            ("i50_max_heat", self.i50_max_heat),
            ("i50_max_water", self.i50_max_water),
            ("t_heat", self.t_heat),
            ("t_extreme", self.t_extreme),
            ("s_co2", self.s_co2),
            ("s_water", self.s_water),
            ("f_solar_max", self.f_solar_max),
        ];
        for (k, x) in named {
            if !x.is_finite() {
                errors.push(FieldError::new(path(k), "must be finite"));
            }
        }
        let mut order = |lo: (&str, f64), hi: (&str, f64)| {
            if lo.1 >= hi.1 {
                errors.push(FieldError::new(
                    format!("{}, {}", path(lo.0), path(hi.0)),
                    format!("{} ({}) must be below {} ({})", lo.0, lo.1, hi.0, hi.1),
                ));
            }
        };
        order(("t_base", self.t_base), ("t_opt", self.t_opt));
        order(("t_opt", self.t_opt), ("t_heat", self.t_heat));
        order(("t_heat", self.t_heat), ("t_extreme", self.t_extreme));
        order(("i50a", self.i50a), ("t_sum", self.t_sum));
        let mut require = |ok: bool, k: &str, msg: &str| {
            if !ok {
                errors.push(FieldError::new(path(k), msg.to_string()));
            }
        };
        require(
            self.harvest_index > 0.0 && self.harvest_index < 1.0,
            "harvest_index",
            "must lie in (0, 1)",
        );
        require(
            self.f_solar_max > 0.0 && self.f_solar_max <= 1.0,
            "f_solar_max",
            "must lie in (0, 1]",
        );
        require(self.i50a > 0.0, "i50a", "must be positive");
        require(self.i50b_init >= 0.0, "i50b_init", "must be non-negative");
        require(self.rue > 0.0, "rue", "must be positive");
        require(
            (0.0..=1.0).contains(&self.s_water),
            "s_water",
            "must lie in [0, 1]",
        );
        require(self.s_co2 >= 0.0, "s_co2", "must be non-negative");
        require(self.i50_max_heat >= 0.0, "i50_max_heat", "must be non-negative");
        require(self.i50_max_water >= 0.0, "i50_max_water", "must be non-negative");
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("crop parameters serialize")
    }
}
