//! Run configuration document.
//!
//! ```toml
//! crop_file = "../crops/batten.toml"   # required, relative to the document
//! inputs_file = "schedule.csv"         # optional, used by `simulate`
//!
//! [crop]      # optional overrides of single crop parameters
//! [model]     # epsilon, co2, x_init, variant, sampling_time
//! [ocp]       # horizons, delta, tolerances, iteration caps, initial schedules
//! [bounds]    # temp, drought, radiation, sampling_time as [lower, upper]
//! [weights]   # c_theta, c_d, c_r, theta_0, c_crop
//! [sweep]     # workers
//! ```

use std::path::{Path, PathBuf};

use toml::{Table, Value};

use crate::crop_model::{CropParams, DailyInput, SimState, Variant};
use crate::document::{FieldError, FieldReader};
use crate::ocp::{Bounds, CostWeights, OcpConfig, StageCostForm};

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub crop_file: PathBuf,
    pub inputs_file: Option<PathBuf>,
    /// Model used by `simulate`.
    pub variant: Variant,
    /// Threads for sweeps; 0 picks one per core.
    pub workers: usize,
    pub ocp: OcpConfig,
}

fn resolve(base: &Path, p: &str) -> PathBuf {
    let p = Path::new(p);
    let joined = if p.is_relative() { base.join(p) } else { p.to_path_buf() };
    std::fs::canonicalize(&joined).unwrap_or(joined)
}

fn triple(r: &mut FieldReader, key: &'static str) -> Option<[f64; 3]> {
    let path = r.path(key);
    let table_has = r.has(key);
    let v = r.opt_value(key)?;
    let arr = v.as_array().filter(|a| a.len() == 3).and_then(|a| {
        let nums: Vec<f64> = a.iter().filter_map(number).collect();
        (nums.len() == 3 && nums.iter().all(|x| x.is_finite())).then(|| [nums[0], nums[1], nums[2]])
    });
    if arr.is_none() && table_has {
        r.errors.push(FieldError::new(path, "expected a three-element numeric array"));
    }
    arr
}

fn number(v: &Value) -> Option<f64> {
    match v {
        Value::Float(x) => Some(*x),
        Value::Integer(i) => Some(*i as f64),
        _ => None,
    }
}

fn sub_table<'a>(r: &mut FieldReader<'a>, key: &'static str, empty: &'a Table) -> &'a Table {
    r.opt_table(key).unwrap_or(empty)
}

/// Parses and validates a configuration document, applying defaults for
/// everything but `crop_file`. Relative paths resolve against `base_dir`.
/// All violations are returned together.
pub fn validate_config(text: &str, base_dir: &Path) -> Result<RunConfig, Vec<FieldError>> {
    let doc: Table = toml::from_str(text).map_err(|e| vec![FieldError::new("document", e.message().to_string())])?;
    validate_table(&doc, base_dir)
}

pub fn validate_table(doc: &Table, base_dir: &Path) -> Result<RunConfig, Vec<FieldError>> {
    let empty = Table::new();
    let mut errors = Vec::new();
    let mut root = FieldReader::new(doc, "");

    let crop_file = root.opt_str("crop_file");
    if crop_file.is_none() && !root.has("crop_file") {
        root.fail("crop_file", "missing required field");
    }
    let inputs_file = root.opt_str("inputs_file").map(|p| resolve(base_dir, &p));
    let crop_over = sub_table(&mut root, "crop", &empty);
    let model = sub_table(&mut root, "model", &empty);
    let ocp_t = sub_table(&mut root, "ocp", &empty);
    let bounds_t = sub_table(&mut root, "bounds", &empty);
    let weights_t = sub_table(&mut root, "weights", &empty);
    let sweep_t = sub_table(&mut root, "sweep", &empty);
    root.reject_unknown();
    root.finish(&mut errors);

    // crop: file contents with single-field overrides on top
    let crop_path = crop_file.as_deref().map(|p| resolve(base_dir, p));
    let mut crop = None;
    if let Some(path) = &crop_path {
        match std::fs::read_to_string(path) {
            Err(e) => errors.push(FieldError::new("crop_file", format!("cannot read {}: {e}", path.display()))),
            Ok(text) => match toml::from_str::<Table>(&text) {
                Err(e) => errors.push(FieldError::new("crop_file", format!("cannot parse {}: {}", path.display(), e.message()))),
                Ok(mut merged) => {
                    for (k, v) in crop_over {
                        merged.insert(k.clone(), v.clone());
                    }
                    match CropParams::from_table(&merged, "crop") {
                        Ok(p) => crop = Some(p),
                        Err(e) => errors.extend(e),
                    }
                }
            },
        }
    }
    let mut cfg = OcpConfig::new(crop.clone().unwrap_or_else(CropParams::batten));

    let mut m = FieldReader::new(model, "model");
    cfg.env.epsilon = m.f64_or("epsilon", cfg.env.epsilon);
    cfg.env.co2 = m.f64_or("co2", cfg.env.co2);
    if let Some(x) = triple(&mut m, "x_init") {
        cfg.x_init = SimState::from_array(x);
    }
    let variant_name = m.opt_str("variant").unwrap_or_else(|| "SC".into());
    let ts = m.f64_or("sampling_time", 1.0);
    let variant = match variant_name.as_str() {
        "S" => Variant::S,
        "SC" => Variant::Sc,
        "SCS" => Variant::Scs { sampling_time: ts },
        other => {
            m.fail("variant", format!("expected \"S\", \"SC\" or \"SCS\", got \"{other}\""));
            Variant::Sc
        }
    };
    if !(ts > 0.0) {
        m.fail("sampling_time", "must be positive");
    }
    m.reject_unknown();
    m.finish(&mut errors);

    let mut o = FieldReader::new(ocp_t, "ocp");
    cfg.horizon = o.usize_or("horizon", cfg.horizon);
    cfg.initial_horizon = o.usize_or("initial_horizon", cfg.initial_horizon);
    cfg.delta = o.f64_or("delta", cfg.delta);
    match o.opt_str("stage_cost_form").as_deref() {
        None | Some("physical") => {}
        Some("quadratic") => cfg.stage_cost_form = StageCostForm::Quadratic,
        Some(other) => o.fail("stage_cost_form", format!("expected \"physical\" or \"quadratic\", got \"{other}\"")),
    }
    cfg.tolerances.stationarity = o.f64_or("stationarity_tolerance", cfg.tolerances.stationarity);
    cfg.tolerances.constraint = o.f64_or("constraint_tolerance", cfg.tolerances.constraint);
    cfg.max_inner_iterations = o.usize_or("max_inner_iterations", cfg.max_inner_iterations);
    cfg.max_outer_iterations = o.usize_or("max_outer_iterations", cfg.max_outer_iterations);
    cfg.max_horizon_iterations = o.usize_or("max_horizon_iterations", cfg.max_horizon_iterations);
    if let Some(u) = triple(&mut o, "initial_input") {
        cfg.initial_input = DailyInput::from_array(u);
    }
    if let Some(v) = o.opt_value("extra_starts") {
        let starts: Option<Vec<DailyInput>> = v.as_array().and_then(|a| {
            a.iter()
                .map(|row| {
                    let r = row.as_array().filter(|r| r.len() == 3)?;
                    let n: Vec<f64> = r.iter().filter_map(number).collect();
                    (n.len() == 3).then(|| DailyInput::new(n[0], n[1], n[2]))
                })
                .collect()
        });
        match starts {
            Some(s) => cfg.extra_starts = s,
            None => o.fail("extra_starts", "expected an array of three-element numeric arrays"),
        }
    }
    cfg.initial_sampling_time = o.f64_or("initial_sampling_time", cfg.initial_sampling_time);
    cfg.maturity_constraint = o.opt_bool("maturity_constraint").unwrap_or(cfg.maturity_constraint);
    o.reject_unknown();
    o.finish(&mut errors);

    let mut b = FieldReader::new(bounds_t, "bounds");
    let d = Bounds::default();
    cfg.bounds = Bounds {
        temp: b.opt_interval("temp").unwrap_or(d.temp),
        drought: b.opt_interval("drought").unwrap_or(d.drought),
        radiation: b.opt_interval("radiation").unwrap_or(d.radiation),
        sampling_time: b.opt_interval("sampling_time").unwrap_or(d.sampling_time),
    };
    b.reject_unknown();
    b.finish(&mut errors);

    let mut w = FieldReader::new(weights_t, "weights");
    let d = CostWeights::default();
    cfg.weights = CostWeights {
        c_theta: w.f64_or("c_theta", d.c_theta),
        c_d: w.f64_or("c_d", d.c_d),
        c_r: w.f64_or("c_r", d.c_r),
        theta_0: w.f64_or("theta_0", d.theta_0),
        c_crop: w.f64_or("c_crop", d.c_crop),
    };
    w.reject_unknown();
    w.finish(&mut errors);

    let mut s = FieldReader::new(sweep_t, "sweep");
    let workers = s.usize_or("workers", 0);
    s.reject_unknown();
    s.finish(&mut errors);

    // crop problems were reported above; re-checking the fallback would be noise
    let mut rest = Vec::new();
    cfg.check("", &mut rest);
    errors.extend(rest.into_iter().filter(|e| !e.path.starts_with("crop.")).map(|mut e| {
        e.path = section_path(&e.path);
        e
    }));

    match (errors.is_empty(), crop_path) {
        (true, Some(crop_file)) => Ok(RunConfig {
            crop_file,
            inputs_file,
            variant,
            workers,
            ocp: cfg,
        }),
        _ => Err(errors),
    }
}

/// Maps an `OcpConfig` field path to its place in the document.
fn section_path(p: &str) -> String {
    let model = ["epsilon", "co2", "x_init"];
    if p.starts_with("bounds.") || p.starts_with("weights.") {
        p.to_string()
    } else if model.contains(&p) {
        format!("model.{p}")
    } else if let Some(t) = p.strip_prefix("tolerances.") {
        format!("ocp.{t}_tolerance")
    } else {
        format!("ocp.{p}")
    }
}

fn arr3(x: [f64; 3]) -> Value {
    Value::Array(x.iter().map(|v| Value::Float(*v)).collect())
}

fn pair(x: (f64, f64)) -> Value {
    Value::Array(vec![Value::Float(x.0), Value::Float(x.1)])
}

/// Every setting with defaults filled in; validates back to `cfg`.
pub fn resolved_document(cfg: &RunConfig) -> Table {
    let o = &cfg.ocp;
    let mut doc = Table::new();
    doc.insert("crop_file".into(), Value::String(cfg.crop_file.display().to_string()));
    if let Some(p) = &cfg.inputs_file {
        doc.insert("inputs_file".into(), Value::String(p.display().to_string()));
    }

    let mut model = Table::new();
    model.insert("epsilon".into(), Value::Float(o.env.epsilon));
    model.insert("co2".into(), Value::Float(o.env.co2));
    model.insert("x_init".into(), arr3(o.x_init.to_array()));
    model.insert("variant".into(), Value::String(cfg.variant.name().into()));
    model.insert("sampling_time".into(), Value::Float(cfg.variant.sampling_time()));
    doc.insert("model".into(), Value::Table(model));

    let mut ocp = Table::new();
    let int = |n: usize| Value::Integer(n as i64);
    ocp.insert("horizon".into(), int(o.horizon));
    ocp.insert("initial_horizon".into(), int(o.initial_horizon));
    ocp.insert("delta".into(), Value::Float(o.delta));
    let form = match o.stage_cost_form {
        StageCostForm::Physical => "physical",
        StageCostForm::Quadratic => "quadratic",
    };
    ocp.insert("stage_cost_form".into(), Value::String(form.into()));
    ocp.insert("stationarity_tolerance".into(), Value::Float(o.tolerances.stationarity));
    ocp.insert("constraint_tolerance".into(), Value::Float(o.tolerances.constraint));
    ocp.insert("max_inner_iterations".into(), int(o.max_inner_iterations));
    ocp.insert("max_outer_iterations".into(), int(o.max_outer_iterations));
    ocp.insert("max_horizon_iterations".into(), int(o.max_horizon_iterations));
    ocp.insert("initial_input".into(), arr3(o.initial_input.to_array()));
    ocp.insert(
        "extra_starts".into(),
        Value::Array(o.extra_starts.iter().map(|u| arr3(u.to_array())).collect()),
    );
    ocp.insert("initial_sampling_time".into(), Value::Float(o.initial_sampling_time));
    ocp.insert("maturity_constraint".into(), Value::Boolean(o.maturity_constraint));
    doc.insert("ocp".into(), Value::Table(ocp));

    let mut bounds = Table::new();
    bounds.insert("temp".into(), pair(o.bounds.temp));
    bounds.insert("drought".into(), pair(o.bounds.drought));
    bounds.insert("radiation".into(), pair(o.bounds.radiation));
    bounds.insert("sampling_time".into(), pair(o.bounds.sampling_time));
    doc.insert("bounds".into(), Value::Table(bounds));

    doc.insert("weights".into(), Value::try_from(&o.weights).expect("weights serialize"));
    doc.insert("crop".into(), Value::try_from(&o.crop).expect("crop serializes"));

    let mut sweep = Table::new();
    sweep.insert("workers".into(), int(cfg.workers));
    doc.insert("sweep".into(), Value::Table(sweep));
    doc
}

pub fn resolved_toml(cfg: &RunConfig) -> String {
    toml::to_string(&resolved_document(cfg)).expect("resolved config serializes")
}
