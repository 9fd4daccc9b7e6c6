use serde::Serialize;

use crate::crop_model::{
    f_solar, ln_f_solar_exact, rollout, yield_mass, DailyInput, ModelError, SimState, Trajectory, Variant,
    MATURITY_THRESHOLD,
};
use crate::diff::{terminal_gradient, DecisionVector, DiffContext, Sweep};

use super::config::OcpConfig;
use super::cost::{annualize, input_cost, stage_cost_gradient, stage_cost_in, terminal_value, StageCostForm};
use super::lbfgs::{minimize_box, projected_gradient_norm, LbfgsOptions, LbfgsStatus};
use super::OcpError;

const MU_INITIAL: f64 = 10.0;
const MU_MAX: f64 = 1e8;

#[derive(Clone, Debug, Serialize)]
pub struct SolveReport {
    pub horizon: usize,
    /// Present for free-final-time solves.
    pub sampling_time: Option<f64>,
    /// J per cycle, or J_t for free-final-time solves (physical stage cost).
    pub objective: f64,
    /// Stage costs minus terminal value over one cycle, €/m².
    pub cycle_cost: f64,
    /// J_t, €/(m²·yr).
    pub annual_cost: f64,
    /// Stage-cost sum over one cycle, €/m².
    pub input_cost: f64,
    /// €/m²
    pub terminal_value: f64,
    /// kg/m²
    pub final_biomass: f64,
    /// kg/m²
    pub yield_mass: f64,
    /// €/kg of harvested yield.
    pub input_cost_per_kg_yield: f64,
    /// €/kg of biomass.
    pub input_cost_per_kg_biomass: f64,
    /// f_solar(x_N) − 0.005 with the exact minimum.
    pub constraint: f64,
    pub constraint_residual: f64,
    pub multiplier: f64,
    /// Projected-gradient norm of the Lagrangian relative to the initial one.
    pub stationarity: f64,
    pub inner_iterations: usize,
    pub outer_iterations: usize,
    pub evaluations: usize,
    /// Initial schedules tried.
    pub starts: usize,
    pub converged: bool,
    /// Interception fell on the last day (checked after solving).
    pub decreasing_at_end: bool,
    #[serde(skip)]
    pub inputs: Vec<DailyInput>,
    #[serde(skip)]
    pub trajectory: Trajectory,
    /// Multiplier updates of the solve.
    pub outer_log: Vec<OuterStep>,
    /// Accepted objective values of each inner solve.
    #[serde(skip)]
    pub traces: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, Serialize)]
pub struct OuterStep {
    pub multiplier: f64,
    pub penalty: f64,
    /// ln f_solar(x_N) − ln 0.005
    pub log_constraint: f64,
    pub stationarity: f64,
    pub inner_iterations: usize,
    pub inner_status: String,
}

/// Normalized single-shooting problem on `[0, 1]^n`.
struct Problem<'a> {
    cfg: &'a OcpConfig,
    n: usize,
    free_time: bool,
    lower: Vec<f64>,
    span: Vec<f64>,
    ctx: DiffContext,
    form: StageCostForm,
}

struct Eval {
    merit: f64,
    objective: f64,
    h: f64,
}

impl<'a> Problem<'a> {
    fn new(cfg: &'a OcpConfig, free_time: bool) -> Self {
        let n = cfg.horizon;
        let (lo, hi) = (cfg.bounds.lower(), cfg.bounds.upper());
        let mut lower = Vec::with_capacity(3 * n + 1);
        let mut span = Vec::with_capacity(3 * n + 1);
        for _ in 0..n {
            lower.extend(lo);
            span.extend((0..3).map(|k| hi[k] - lo[k]));
        }
        if free_time {
            let (tl, th) = cfg.bounds.sampling_time;
            lower.push(tl);
            span.push(th - tl);
        }
        Self {
            cfg,
            n,
            free_time,
            lower,
            span,
            ctx: DiffContext {
                params: cfg.crop.clone(),
                env: cfg.env,
                x_init: cfg.x_init,
            },
            form: cfg.stage_cost_form,
        }
    }

    fn to_z(&self, y: &[f64]) -> Vec<f64> {
        y.iter()
            .zip(self.lower.iter().zip(&self.span))
            .map(|(v, (l, s))| if *s > 0.0 { l + s * v } else { *l })
            .collect()
    }

    fn to_y(&self, z: &[f64]) -> Vec<f64> {
        z.iter()
            .zip(self.lower.iter().zip(&self.span))
            .map(|(v, (l, s))| if *s > 0.0 { ((v - l) / s).clamp(0.0, 1.0) } else { 0.0 })
            .collect()
    }

    fn evaluate(&self, y: &[f64], lambda: f64, mu: f64, grad: &mut [f64]) -> Eval {
        let n = self.n;
        let z = self.to_z(y);
        let dv = DecisionVector::new(z, n).expect("normalized vector is well formed");
        let sweep = Sweep::run(&dv, &self.ctx).expect("solver uses a smoothed model");
        let x_n = sweep.final_state();
        let w = &self.cfg.weights;
        let price = self.ctx.params.harvest_index * w.c_crop;
        let value = price * x_n[0];
        let z = dv.values();

        let (stage_scale, value_scale, ts) = if self.free_time {
            let ts = z[3 * n];
            (365.0 / n as f64, 365.0 / (n as f64 * ts), ts)
        } else {
            (1.0, 1.0, 1.0)
        };
        let mut stage_sum = 0.0;
        for u in z[..3 * n].chunks_exact(3) {
            stage_sum += stage_cost_in(self.form, &[u[0], u[1], u[2]], w);
        }
        let objective = stage_scale * stage_sum - value_scale * value;

        let (h, dh) = if self.cfg.maturity_constraint {
            terminal_gradient(x_n, |x| {
                ln_f_solar_exact(x[1], x[2], &self.ctx.params) - MATURITY_THRESHOLD.ln()
            })
        } else {
            (0.0, [0.0; 3])
        };
        let weight = lambda + mu * h;
        let cot = [
            -value_scale * price + weight * dh[0],
            weight * dh[1],
            weight * dh[2],
        ];
        let mut gz = sweep.pullback(cot);
        for (i, u) in z[..3 * n].chunks_exact(3).enumerate() {
            let sg = stage_cost_gradient(&[u[0], u[1], u[2]], w);
            for k in 0..3 {
                gz[3 * i + k] += stage_scale * sg[k];
            }
        }
        if self.free_time {
            gz[3 * n] += 365.0 / (n as f64 * ts * ts) * value;
        }
        for (g, (v, s)) in grad.iter_mut().zip(gz.iter().zip(&self.span)) {
            *g = v * s;
        }
        Eval {
            merit: objective + lambda * h + 0.5 * mu * h * h,
            objective,
            h,
        }
    }
}

fn initial_vector(cfg: &OcpConfig, inputs: Option<&[DailyInput]>, ts: Option<f64>) -> Vec<f64> {
    let mut z = Vec::with_capacity(3 * cfg.horizon + 1);
    match inputs {
        Some(u) => z.extend(u.iter().flat_map(|d| cfg.bounds.clamp(d).to_array())),
        None => (0..cfg.horizon).for_each(|_| z.extend(cfg.initial_input.to_array())),
    }
    z.extend(ts);
    z
}

fn constant_vector(cfg: &OcpConfig, u: &DailyInput, ts: Option<f64>) -> Vec<f64> {
    let mut z: Vec<f64> = (0..cfg.horizon).flat_map(|_| cfg.bounds.clamp(u).to_array()).collect();
    z.extend(ts);
    z
}

/// Better of two reports: converged first, then feasible, then lower objective.
fn prefer(a: SolveReport, b: SolveReport, tol: f64) -> SolveReport {
    let rank = |r: &SolveReport| (!r.converged, r.constraint_residual > tol);
    match rank(&a).cmp(&rank(&b)) {
        std::cmp::Ordering::Less => a,
        std::cmp::Ordering::Greater => b,
        std::cmp::Ordering::Equal => {
            if b.objective < a.objective {
                b
            } else {
                a
            }
        }
    }
}

/// Solves from the configured constant schedule and from each extra start,
/// keeping the best result.
fn run_cold(cfg: &OcpConfig, free_time: bool) -> Result<SolveReport, OcpError> {
    let ts = free_time.then_some(cfg.initial_sampling_time);
    let mut best = run(cfg, free_time, constant_vector(cfg, &cfg.initial_input, ts))?;
    for u in &cfg.extra_starts {
        let r = run(cfg, free_time, constant_vector(cfg, u, ts))?;
        best = prefer(best, r, cfg.tolerances.constraint);
    }
    best.starts = 1 + cfg.extra_starts.len();
    Ok(best)
}

fn run(cfg: &OcpConfig, free_time: bool, z0: Vec<f64>) -> Result<SolveReport, OcpError> {
    cfg.validate().map_err(OcpError::InvalidConfig)?;
    if z0.len() != 3 * cfg.horizon + usize::from(free_time) {
        return Err(OcpError::InvalidConfig(vec![crate::document::FieldError::new(
            "initial_guess",
            format!("expected {} entries, got {}", 3 * cfg.horizon + usize::from(free_time), z0.len()),
        )]));
    }
    let problem = Problem::new(cfg, free_time);
    let mut y = problem.to_y(&z0);
    let dim = y.len();
    let mut grad = vec![0.0; dim];

    let start = problem.evaluate(&y, 0.0, 0.0, &mut grad);
    if !start.objective.is_finite() {
        return Err(OcpError::NonFinite("objective at the initial guess".into()));
    }
    // stationarity is measured against the default constant schedule so that
    // warm starts share the scale of cold starts
    let reference = problem.to_y(&initial_vector(cfg, None, free_time.then_some(cfg.initial_sampling_time)));
    problem.evaluate(&reference, 0.0, 0.0, &mut grad);
    let pg0 = projected_gradient_norm(&reference, &grad).max(f64::MIN_POSITIVE);
    let inner_tol = cfg.tolerances.stationarity * pg0;

    let mut lambda = 0.0;
    let mut mu = if cfg.maturity_constraint { MU_INITIAL } else { 0.0 };
    let mut h_prev = f64::INFINITY;
    let mut inner_iterations = 0;
    let mut evaluations = 1;
    let mut outer_iterations = 0;
    let mut traces = Vec::new();
    let mut outer_log = Vec::new();
    let mut stationarity = f64::INFINITY;
    let mut converged = false;
    let mut numeric_failure = false;

    let outer_cap = if cfg.maturity_constraint { cfg.max_outer_iterations } else { 1 };
    for _ in 0..outer_cap {
        outer_iterations += 1;
        let opts = LbfgsOptions {
            max_iterations: cfg.max_inner_iterations,
            tolerance: inner_tol,
            ..LbfgsOptions::default()
        };
        let (l, m) = (lambda, mu);
        let out = minimize_box(|v, g| problem.evaluate(v, l, m, g).merit, &y, &opts);
        inner_iterations += out.iterations;
        evaluations += out.evaluations;
        traces.push(out.trace);
        if out.status == LbfgsStatus::NonFinite {
            numeric_failure = true;
            break;
        }
        y = out.x;

        let at = problem.evaluate(&y, lambda, mu, &mut grad);
        evaluations += 1;
        // with the updated multiplier the merit gradient equals the Lagrangian gradient
        lambda += mu * at.h;
        stationarity = projected_gradient_norm(&y, &grad) / pg0;
        let g_report = constraint_value(&problem, &y);
        outer_log.push(OuterStep {
            multiplier: lambda,
            penalty: mu,
            log_constraint: at.h,
            stationarity,
            inner_iterations: out.iterations,
            inner_status: format!("{:?}", out.status),
        });
        let feasible = !cfg.maturity_constraint || g_report.abs() <= cfg.tolerances.constraint;
        let stationary = stationarity <= cfg.tolerances.stationarity;
        if feasible && stationary {
            converged = true;
            break;
        }
        if feasible && out.status == LbfgsStatus::Stalled && out.iterations == 0 {
            // no further decrease is representable in floating point
            break;
        }
        if at.h.abs() > 0.25 * h_prev && g_report.abs() > 0.1 * cfg.tolerances.constraint {
            mu = (mu * 10.0).min(MU_MAX);
        }
        h_prev = at.h.abs();
    }
    if numeric_failure {
        return Err(OcpError::NonFinite("objective during the solve".into()));
    }

    let z = problem.to_z(&y);
    let inputs: Vec<DailyInput> = z[..3 * cfg.horizon]
        .chunks_exact(3)
        .map(|c| DailyInput::new(c[0], c[1], c[2]))
        .collect();
    let ts = free_time.then(|| z[3 * cfg.horizon]);
    let mut report = build_report(cfg, inputs, ts)?;
    report.multiplier = lambda;
    report.stationarity = stationarity;
    report.inner_iterations = inner_iterations;
    report.outer_iterations = outer_iterations;
    report.evaluations = evaluations;
    report.converged = converged;
    report.traces = traces;
    report.outer_log = outer_log;
    Ok(report)
}

fn constraint_value(problem: &Problem, y: &[f64]) -> f64 {
    let z = problem.to_z(y);
    let dv = DecisionVector::new(z, problem.n).expect("well formed");
    let sweep = Sweep::run(&dv, &problem.ctx).expect("smoothed");
    let x = SimState::from_array(sweep.final_state());
    f_solar(&x, &problem.ctx.params, 0.0) - MATURITY_THRESHOLD
}

fn variant_for(ts: Option<f64>) -> Variant {
    match ts {
        Some(sampling_time) => Variant::Scs { sampling_time },
        None => Variant::Sc,
    }
}

fn model_err(e: ModelError) -> OcpError {
    OcpError::NonFinite(e.to_string())
}

/// Rolls `inputs` out and fills every cost and maturity field. Solver
/// bookkeeping fields are left at their neutral values.
pub fn build_report(cfg: &OcpConfig, inputs: Vec<DailyInput>, ts: Option<f64>) -> Result<SolveReport, OcpError> {
    let traj = rollout(&cfg.x_init, &inputs, variant_for(ts), &cfg.env, &cfg.crop).map_err(model_err)?;
    let n = inputs.len();
    let x_n = *traj.final_state();
    let stages = input_cost(&inputs, &cfg.weights, StageCostForm::Physical);
    let value = terminal_value(&x_n, &cfg.weights, &cfg.crop);
    let annual = annualize(stages, value, n, ts.unwrap_or(1.0));
    let g = f_solar(&x_n, &cfg.crop, 0.0) - MATURITY_THRESHOLD;
    let decreasing = n >= 1 && f_solar(&x_n, &cfg.crop, 0.0) < f_solar(&traj.states[n - 1], &cfg.crop, 0.0);
    let ym = yield_mass(&x_n, &cfg.crop);
    Ok(SolveReport {
        horizon: n,
        sampling_time: ts,
        objective: if ts.is_some() { annual } else { stages - value },
        cycle_cost: stages - value,
        annual_cost: annual,
        input_cost: stages,
        terminal_value: value,
        final_biomass: x_n.biomass,
        yield_mass: ym,
        input_cost_per_kg_yield: stages / ym,
        input_cost_per_kg_biomass: stages / x_n.biomass,
        constraint: g,
        constraint_residual: g.abs(),
        multiplier: 0.0,
        stationarity: f64::NAN,
        inner_iterations: 0,
        outer_iterations: 0,
        evaluations: 0,
        starts: 1,
        converged: false,
        decreasing_at_end: decreasing,
        outer_log: Vec::new(),
        inputs,
        trajectory: traj,
        traces: Vec::new(),
    })
}

/// Per-cycle cost J of a schedule over the smoothed model, physical stage cost.
pub fn total_cost(inputs: &[DailyInput], cfg: &OcpConfig) -> Result<f64, OcpError> {
    if inputs.is_empty() {
        return Err(OcpError::InvalidConfig(vec![crate::document::FieldError::new(
            "inputs",
            "horizon must be at least one day",
        )]));
    }
    Ok(build_report(cfg, inputs.to_vec(), None)?.cycle_cost)
}

/// Annualized cost J_t of a schedule at sampling time `ts`.
pub fn annualized_cost(inputs: &[DailyInput], ts: f64, cfg: &OcpConfig) -> Result<f64, OcpError> {
    let (lo, hi) = cfg.bounds.sampling_time;
    if inputs.is_empty() || !(lo..=hi).contains(&ts) {
        return Err(OcpError::InvalidConfig(vec![crate::document::FieldError::new(
            "sampling_time",
            format!("must lie in [{lo}, {hi}] with a non-empty schedule"),
        )]));
    }
    Ok(build_report(cfg, inputs.to_vec(), Some(ts))?.annual_cost)
}

/// Fixed-final-time problem from the configured constant initial schedule.
pub fn solve_fixed(cfg: &OcpConfig) -> Result<SolveReport, OcpError> {
    run_cold(cfg, false)
}

pub fn solve_fixed_from(cfg: &OcpConfig, inputs: &[DailyInput]) -> Result<SolveReport, OcpError> {
    run(cfg, false, initial_vector(cfg, Some(inputs), None))
}

/// Free-final-time problem (sampling time as an extra decision).
pub fn solve_free(cfg: &OcpConfig) -> Result<SolveReport, OcpError> {
    run_cold(cfg, true)
}

pub fn solve_free_from(cfg: &OcpConfig, inputs: &[DailyInput], ts: f64) -> Result<SolveReport, OcpError> {
    run(cfg, true, initial_vector(cfg, Some(inputs), Some(ts)))
}

/// Horizon after a free-final-time solve: the rescaled cycle, rounded down.
pub fn next_horizon(n: usize, ts: f64) -> usize {
    // guard against 102.99999999 style products of exact decimals
    let scaled = ts * n as f64;
    let snapped = if (scaled - scaled.round()).abs() < 1e-9 { scaled.round() } else { scaled.floor() };
    (snapped as usize).max(1)
}

/// Resamples a schedule onto a new number of days by linear interpolation
/// on day midpoints.
pub fn resample(inputs: &[DailyInput], n: usize) -> Vec<DailyInput> {
    let m = inputs.len();
    if m == 0 {
        return Vec::new();
    }
    (0..n)
        .map(|i| {
            let pos = ((i as f64 + 0.5) * m as f64 / n as f64 - 0.5).clamp(0.0, (m - 1) as f64);
            let lo = pos.floor() as usize;
            let hi = (lo + 1).min(m - 1);
            let w = pos - lo as f64;
            let (a, b) = (inputs[lo].to_array(), inputs[hi].to_array());
            DailyInput::from_array([0, 1, 2].map(|k| a[k] * (1.0 - w) + b[k] * w))
        })
        .collect()
}

#[derive(Clone, Debug, Serialize)]
pub struct HorizonStep {
    pub horizon: usize,
    pub sampling_time: f64,
    pub annual_cost: f64,
    pub converged: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct HorizonSearch {
    pub n_star: usize,
    pub iterations: usize,
    /// |T − 1| < δ on the returned horizon and its solve converged.
    pub converged: bool,
    /// Horizons revisited by the floor rule, if the loop cycled.
    pub cycle: Option<Vec<usize>>,
    pub history: Vec<HorizonStep>,
    pub report: SolveReport,
}

/// Free-final-time iteration: solve, rescale the horizon by the optimal
/// sampling time, repeat until the sampling time is within δ of one.
pub fn algorithm1(cfg: &OcpConfig) -> Result<HorizonSearch, OcpError> {
    cfg.validate().map_err(OcpError::InvalidConfig)?;
    let mut n = cfg.initial_horizon;
    let mut warm: Option<Vec<DailyInput>> = None;
    let mut history: Vec<HorizonStep> = Vec::new();
    let mut reports: Vec<SolveReport> = Vec::new();
    for _ in 0..cfg.max_horizon_iterations {
        let c = cfg.with_horizon(n);
        let report = match &warm {
            Some(u) => solve_free_from(&c, u, 1.0)?,
            None => solve_free(&c)?,
        };
        let ts = report.sampling_time.expect("free solve has a sampling time");
        history.push(HorizonStep {
            horizon: n,
            sampling_time: ts,
            annual_cost: report.annual_cost,
            converged: report.converged,
        });
        if (ts - 1.0).abs() < cfg.delta {
            let converged = report.converged;
            return Ok(HorizonSearch {
                n_star: n,
                iterations: history.len(),
                converged,
                cycle: None,
                history,
                report,
            });
        }
        let next = next_horizon(n, ts);
        reports.push(report);
        if let Some(first) = history.iter().position(|s| s.horizon == next) {
            let members = &history[first..];
            let best = (first..history.len())
                .min_by(|&a, &b| history[a].annual_cost.total_cmp(&history[b].annual_cost))
                .unwrap();
            let cycle = members.iter().map(|s| s.horizon).collect();
            return Ok(HorizonSearch {
                n_star: history[best].horizon,
                iterations: history.len(),
                converged: false,
                cycle: Some(cycle),
                report: reports.swap_remove(best),
                history,
            });
        }
        warm = Some(resample(&reports.last().unwrap().inputs, next));
        n = next;
    }
    let report = reports.pop().expect("at least one iteration");
    Ok(HorizonSearch {
        n_star: n,
        iterations: history.len(),
        converged: false,
        cycle: None,
        history,
        report,
    })
}
