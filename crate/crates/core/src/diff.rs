//! Exact first derivatives of rollout functionals with respect to the
//! flattened daily inputs and, optionally, the sampling time.
//!
//! Two routes are provided:
//!
//! * [`grad_scalar`] propagates (value, partials) pairs forward through the
//!   whole rollout, one partial per decision entry. Any functional written
//!   against [`RolloutFunctional`] can be differentiated this way.
//! * [`Sweep`] stores per-day local Jacobians and pulls terminal cotangents
//!   back through them. This is what the optimizer uses; it is checked
//!   against the forward route in the tests.

use thiserror::Error;

use crate::crop_model::{
    growth_rate, ln_f_solar_exact, CropParams, DailyInput, EnvConstants, SimState, MATURITY_THRESHOLD,
};
use crate::scalar::{Dual, Jet, Scalar};

#[derive(Debug, Error, PartialEq)]
pub enum DiffError {
    #[error("derivatives require a smoothed model (epsilon > 0)")]
    NonSmooth,
    #[error("decision vector has non-finite entry at index {0}")]
    NonFinite(usize),
    #[error("decision vector length {len} does not match horizon {horizon} (expected 3N or 3N+1)")]
    Length { len: usize, horizon: usize },
}

/// Flattened decision vector `[u_0, …, u_{N−1}]` with an optional trailing
/// sampling-time entry.
#[derive(Clone, Debug, PartialEq)]
pub struct DecisionVector {
    values: Vec<f64>,
    horizon: usize,
    has_sampling_time: bool,
}

impl DecisionVector {
    pub fn new(values: Vec<f64>, horizon: usize) -> Result<Self, DiffError> {
        let has_sampling_time = match values.len() {
            n if n == 3 * horizon => false,
            n if n == 3 * horizon + 1 => true,
            len => return Err(DiffError::Length { len, horizon }),
        };
        if let Some(i) = values.iter().position(|x| !x.is_finite()) {
            return Err(DiffError::NonFinite(i));
        }
        Ok(Self {
            values,
            horizon,
            has_sampling_time,
        })
    }

    pub fn from_inputs(inputs: &[DailyInput], sampling_time: Option<f64>) -> Result<Self, DiffError> {
        let mut values: Vec<f64> = inputs.iter().flat_map(|u| u.to_array()).collect();
        values.extend(sampling_time);
        Self::new(values, inputs.len())
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn has_sampling_time(&self) -> bool {
        self.has_sampling_time
    }

    pub fn inputs(&self) -> Vec<DailyInput> {
        self.values[..3 * self.horizon]
            .chunks_exact(3)
            .map(|c| DailyInput::new(c[0], c[1], c[2]))
            .collect()
    }

    /// Sampling time, 1 when the vector carries no time slot.
    pub fn sampling_time(&self) -> f64 {
        if self.has_sampling_time {
            self.values[3 * self.horizon]
        } else {
            1.0
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradientRecord {
    pub value: f64,
    pub gradient: Vec<f64>,
    /// Maturity constraint `f_solar(x_N) − 0.005` (exact minimum).
    pub constraint: f64,
    pub constraint_gradient: Vec<f64>,
}

/// Model configuration shared by every derivative evaluation.
#[derive(Clone, Debug)]
pub struct DiffContext {
    pub params: CropParams,
    pub env: EnvConstants,
    pub x_init: SimState,
}

/// A rollout expressed in some scalar type.
#[derive(Clone, Debug)]
pub struct RolloutView<S> {
    pub states: Vec<[S; 3]>,
    pub inputs: Vec<[S; 3]>,
    pub sampling_time: S,
}

impl<S: Scalar> RolloutView<S> {
    pub fn horizon(&self) -> usize {
        self.inputs.len()
    }

    pub fn final_state(&self) -> &[S; 3] {
        self.states.last().expect("rollout has an initial state")
    }
}

/// Scalar functional of a smoothed rollout, generic over the scalar type so
/// that it can be evaluated plainly or with derivative propagation.
pub trait RolloutFunctional {
    fn eval<S: Scalar>(&self, view: &RolloutView<S>, ctx: &DiffContext) -> S;
}

/// Biomass on the final day, kg/m².
pub struct TerminalBiomass;

impl RolloutFunctional for TerminalBiomass {
    fn eval<S: Scalar>(&self, view: &RolloutView<S>, _ctx: &DiffContext) -> S {
        view.final_state()[0].clone()
    }
}

/// Pointwise sum of two functionals.
pub struct SumOf<A, B>(pub A, pub B);

impl<A: RolloutFunctional, B: RolloutFunctional> RolloutFunctional for SumOf<A, B> {
    fn eval<S: Scalar>(&self, view: &RolloutView<S>, ctx: &DiffContext) -> S {
        self.0.eval(view, ctx) + self.1.eval(view, ctx)
    }
}

fn roll_generic<S: Scalar>(inputs: Vec<[S; 3]>, sampling_time: S, ctx: &DiffContext) -> RolloutView<S> {
    let eps = ctx.env.epsilon;
    let x0 = ctx.x_init.to_array();
    let lift = |v: f64| sampling_time.constant(v);
    let mut states: Vec<[S; 3]> = Vec::with_capacity(inputs.len() + 1);
    states.push([lift(x0[0]), lift(x0[1]), lift(x0[2])]);
    for u in &inputs {
        let x = states.last().unwrap().clone();
        let rate = growth_rate(&x, u, &ctx.env, &ctx.params, eps);
        let [r0, r1, r2] = rate;
        let [x0, x1, x2] = x;
        states.push([
            x0 + sampling_time.clone() * r0,
            x1 + sampling_time.clone() * r1,
            x2 + sampling_time.clone() * r2,
        ]);
    }
    RolloutView {
        states,
        inputs,
        sampling_time,
    }
}

/// Maturity constraint in its reported form, `f_solar(x_N) − 0.005`.
pub fn maturity_constraint<S: Scalar>(state: &[S; 3], params: &CropParams) -> S {
    ln_f_solar_exact(state[1].clone(), state[2].clone(), params).exp() - MATURITY_THRESHOLD
}

/// Plain evaluation of a functional (no derivatives).
pub fn evaluate<F: RolloutFunctional>(f: &F, z: &DecisionVector, ctx: &DiffContext) -> f64 {
    let inputs: Vec<[f64; 3]> = z.inputs().iter().map(|u| u.to_array()).collect();
    let view = roll_generic(inputs, z.sampling_time(), ctx);
    f.eval(&view, ctx)
}

/// Forward-mode gradient of `f` (and of the maturity constraint) with
/// respect to every entry of `z`.
pub fn grad_scalar<F: RolloutFunctional>(
    f: &F,
    z: &DecisionVector,
    ctx: &DiffContext,
) -> Result<GradientRecord, DiffError> {
    if !(ctx.env.epsilon > 0.0) {
        return Err(DiffError::NonSmooth);
    }
    let n = z.len();
    let v = z.values();
    let inputs: Vec<[Jet; 3]> = (0..z.horizon())
        .map(|i| {
            [
                Jet::variable(v[3 * i], 3 * i, n),
                Jet::variable(v[3 * i + 1], 3 * i + 1, n),
                Jet::variable(v[3 * i + 2], 3 * i + 2, n),
            ]
        })
        .collect();
    let ts = if z.has_sampling_time() {
        Jet::variable(z.sampling_time(), n - 1, n)
    } else {
        Jet::constant(1.0)
    };
    let view = roll_generic(inputs, ts, ctx);
    let value = f.eval(&view, ctx);
    let g = maturity_constraint(view.final_state(), &ctx.params);
    let record = GradientRecord {
        value: value.re,
        gradient: value.gradient(n),
        constraint: g.re,
        constraint_gradient: g.gradient(n),
    };
    if let Some(i) = record.gradient.iter().position(|x| !x.is_finite()) {
        return Err(DiffError::NonFinite(i));
    }
    Ok(record)
}

/// Rate of one day together with its Jacobians with respect to the state
/// and the input.
#[derive(Clone, Copy, Debug)]
pub struct LocalJacobian {
    pub rate: [f64; 3],
    /// `d_state[r][c] = ∂rate_r / ∂x_c`
    pub d_state: [[f64; 3]; 3],
    /// `d_input[r][c] = ∂rate_r / ∂u_c`
    pub d_input: [[f64; 3]; 3],
}

pub fn local_jacobian(
    state: &[f64; 3],
    input: &[f64; 3],
    env: &EnvConstants,
    params: &CropParams,
) -> LocalJacobian {
    let x = [0, 1, 2].map(|k| Dual::<6>::variable(state[k], k));
    let u = [0, 1, 2].map(|k| Dual::<6>::variable(input[k], 3 + k));
    let r = growth_rate(&x, &u, env, params, env.epsilon);
    let mut d_state = [[0.0; 3]; 3];
    let mut d_input = [[0.0; 3]; 3];
    for row in 0..3 {
        for col in 0..3 {
            d_state[row][col] = r[row].eps[col];
            d_input[row][col] = r[row].eps[3 + col];
        }
    }
    LocalJacobian {
        rate: [r[0].re, r[1].re, r[2].re],
        d_state,
        d_input,
    }
}

/// Forward rollout that keeps every local Jacobian for reverse pullbacks.
#[derive(Clone, Debug)]
pub struct Sweep {
    pub states: Vec<[f64; 3]>,
    jacobians: Vec<LocalJacobian>,
    sampling_time: f64,
    with_time: bool,
}

impl Sweep {
    pub fn run(z: &DecisionVector, ctx: &DiffContext) -> Result<Self, DiffError> {
        if !(ctx.env.epsilon > 0.0) {
            return Err(DiffError::NonSmooth);
        }
        let ts = z.sampling_time();
        let mut states = Vec::with_capacity(z.horizon() + 1);
        let mut jacobians = Vec::with_capacity(z.horizon());
        let mut x = ctx.x_init.to_array();
        states.push(x);
        for u in z.values()[..3 * z.horizon()].chunks_exact(3) {
            let jac = local_jacobian(&x, &[u[0], u[1], u[2]], &ctx.env, &ctx.params);
            for k in 0..3 {
                x[k] += ts * jac.rate[k];
            }
            states.push(x);
            jacobians.push(jac);
        }
        Ok(Self {
            states,
            jacobians,
            sampling_time: ts,
            with_time: z.has_sampling_time(),
        })
    }

    pub fn final_state(&self) -> [f64; 3] {
        *self.states.last().unwrap()
    }

    /// Gradient of a terminal function `φ(x_N)` with respect to the decision
    /// vector, given `cotangent = ∂φ/∂x_N`.
    pub fn pullback(&self, cotangent: [f64; 3]) -> Vec<f64> {
        let n = self.jacobians.len();
        let ts = self.sampling_time;
        let mut grad = vec![0.0; 3 * n + usize::from(self.with_time)];
        let mut lambda = cotangent;
        let mut d_time = 0.0;
        for (i, jac) in self.jacobians.iter().enumerate().rev() {
            for c in 0..3 {
                grad[3 * i + c] = ts * (0..3).map(|r| jac.d_input[r][c] * lambda[r]).sum::<f64>();
            }
            d_time += (0..3).map(|r| jac.rate[r] * lambda[r]).sum::<f64>();
            let mut next = lambda;
            for (c, slot) in next.iter_mut().enumerate() {
                *slot += ts * (0..3).map(|r| jac.d_state[r][c] * lambda[r]).sum::<f64>();
            }
            lambda = next;
        }
        if self.with_time {
            grad[3 * n] = d_time;
        }
        grad
    }
}

/// Value and state-gradient of a terminal function evaluated with 3 partials.
pub fn terminal_gradient<F>(state: [f64; 3], f: F) -> (f64, [f64; 3])
where
    F: Fn(&[Dual<3>; 3]) -> Dual<3>,
{
    let x = [0, 1, 2].map(|k| Dual::<3>::variable(state[k], k));
    let y = f(&x);
    (y.re, y.eps)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ctx() -> DiffContext {
        let params = CropParams::batten();
        DiffContext {
            x_init: SimState::planting(&params),
            params,
            env: EnvConstants::default(),
        }
    }

    fn schedule(n: usize) -> Vec<DailyInput> {
        (0..n)
            .map(|d| DailyInput::new(14.0 + (d % 7) as f64 * 3.0, 0.1 * (d % 4) as f64, 20.0 + (d % 5) as f64))
            .collect()
    }

    #[test]
    fn decision_vector_shapes() {
        let u = schedule(4);
        let z = DecisionVector::from_inputs(&u, None).unwrap();
        assert_eq!(z.len(), 12);
        assert_eq!(z.sampling_time(), 1.0);
        assert_eq!(z.inputs(), u);
        let zt = DecisionVector::from_inputs(&u, Some(0.9)).unwrap();
        assert_eq!(zt.len(), 13);
        assert_eq!(zt.sampling_time(), 0.9);
        assert_eq!(
            DecisionVector::new(vec![0.0; 11], 4).unwrap_err(),
            DiffError::Length { len: 11, horizon: 4 }
        );
        assert_eq!(
            DecisionVector::new(vec![0.0, f64::INFINITY, 0.0], 1).unwrap_err(),
            DiffError::NonFinite(1)
        );
    }

    #[test]
    fn rejects_exact_model() {
        let mut c = ctx();
        c.env.epsilon = 0.0;
        let z = DecisionVector::from_inputs(&schedule(3), None).unwrap();
        assert_eq!(grad_scalar(&TerminalBiomass, &z, &c).unwrap_err(), DiffError::NonSmooth);
        assert!(Sweep::run(&z, &c).is_err());
    }

    #[test]
    fn adjoint_pullback_matches_forward_mode() {
        let c = ctx();
        for ts in [None, Some(0.85)] {
            let z = DecisionVector::from_inputs(&schedule(25), ts).unwrap();
            let fwd = grad_scalar(&TerminalBiomass, &z, &c).unwrap();
            let sweep = Sweep::run(&z, &c).unwrap();
            let back = sweep.pullback([1.0, 0.0, 0.0]);
            assert_eq!(back.len(), fwd.gradient.len());
            for (a, b) in back.iter().zip(&fwd.gradient) {
                assert!((a - b).abs() <= 1e-12 * (1.0 + b.abs()), "{a} vs {b}");
            }
            let (_, cot) = terminal_gradient(sweep.final_state(), |x| maturity_constraint(x, &c.params));
            let back_g = sweep.pullback(cot);
            for (a, b) in back_g.iter().zip(&fwd.constraint_gradient) {
                assert!((a - b).abs() <= 1e-12 * (1.0 + b.abs()), "{a} vs {b}");
            }
            assert_eq!(sweep.final_state()[0], fwd.value);
        }
    }

    #[test]
    fn plain_and_forward_values_agree() {
        let c = ctx();
        let z = DecisionVector::from_inputs(&schedule(10), Some(1.2)).unwrap();
        let plain = evaluate(&TerminalBiomass, &z, &c);
        let rec = grad_scalar(&TerminalBiomass, &z, &c).unwrap();
        assert!((plain - rec.value).abs() < 1e-15);
    }

    fn random_vector(rng: &mut impl rand::Rng, n: usize, with_t: bool) -> DecisionVector {
        let mut v: Vec<f64> = (0..n)
            .flat_map(|_| [rng.gen_range(0.0..35.0), rng.gen_range(0.0..1.0), rng.gen_range(0.0..35.0)])
            .collect();
        if with_t {
            v.push(rng.gen_range(0.5..1.5));
        }
        DecisionVector::new(v, n).unwrap()
    }

    fn central_difference<F: RolloutFunctional>(f: &F, z: &DecisionVector, ctx: &DiffContext, i: usize) -> f64 {
        let v = z.values();
        let h = 1e-6 * (1.0 + v[i].abs());
        let shifted = |d: f64| {
            let mut w = v.to_vec();
            w[i] += d;
            evaluate(f, &DecisionVector::new(w, z.horizon()).unwrap(), ctx)
        };
        (shifted(h) - shifted(-h)) / (2.0 * h)
    }

    fn max_relative_error(ad: &[f64], fd: &[f64]) -> f64 {
        let scale = fd.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
        ad.iter()
            .zip(fd)
            .map(|(a, b)| (a - b).abs() / b.abs().max(1e-3 * scale).max(1e-300))
            .fold(0.0, f64::max)
    }

    #[test]
    fn forward_gradient_matches_central_differences() {
        use rand::SeedableRng;
        let c = ctx();
        let mut rng = rand::rngs::StdRng::seed_from_u64(7);
        for k in 0..20 {
            let z = random_vector(&mut rng, 20, k % 2 == 1);
            let rec = grad_scalar(&TerminalBiomass, &z, &c).unwrap();
            let fd: Vec<f64> = (0..z.len()).map(|i| central_difference(&TerminalBiomass, &z, &c, i)).collect();
            let err = max_relative_error(&rec.gradient, &fd);
            assert!(err <= 1e-4, "vector {k}: {err:e}");
        }
    }

    #[test]
    fn gradient_is_linear_in_the_functional() {
        struct Thermal;
        impl RolloutFunctional for Thermal {
            fn eval<S: Scalar>(&self, view: &RolloutView<S>, _: &DiffContext) -> S {
                view.final_state()[1].clone() * 0.5
            }
        }
        let c = ctx();
        let z = DecisionVector::from_inputs(&schedule(15), Some(1.1)).unwrap();
        let a = grad_scalar(&TerminalBiomass, &z, &c).unwrap();
        let b = grad_scalar(&Thermal, &z, &c).unwrap();
        let s = grad_scalar(&SumOf(TerminalBiomass, Thermal), &z, &c).unwrap();
        for i in 0..z.len() {
            let sum = a.gradient[i] + b.gradient[i];
            assert!((s.gradient[i] - sum).abs() <= 1e-12 * (1.0 + sum.abs()));
        }
        assert_eq!(s.constraint, a.constraint);
    }

    #[test]
    fn sampling_time_derivative() {
        let c = ctx();
        let z = DecisionVector::from_inputs(&schedule(30), Some(0.95)).unwrap();
        let rec = grad_scalar(&TerminalBiomass, &z, &c).unwrap();
        let last = z.len() - 1;
        let fd = central_difference(&TerminalBiomass, &z, &c, last);
        assert!(rec.gradient[last] > 0.0);
        assert!((rec.gradient[last] - fd).abs() <= 1e-6 * fd.abs(), "{} vs {fd}", rec.gradient[last]);
    }
}
