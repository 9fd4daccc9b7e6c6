//! Limited-memory quasi-Newton minimization over the unit box `[0, 1]^n`
//! with gradient projection and a monotone Armijo line search along the
//! projection arc.

use std::collections::VecDeque;

#[derive(Clone, Debug)]
pub struct LbfgsOptions {
    pub memory: usize,
    pub max_iterations: usize,
    /// Stop once the projected-gradient infinity norm is at most this.
    pub tolerance: f64,
    pub armijo: f64,
    pub max_backtracks: usize,
}

impl Default for LbfgsOptions {
    fn default() -> Self {
        Self {
            memory: 12,
            max_iterations: 5000,
            tolerance: 1e-8,
            armijo: 1e-4,
            max_backtracks: 60,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LbfgsStatus {
    Converged,
    IterationLimit,
    /// No decrease found along the steepest projected direction.
    Stalled,
    NonFinite,
}

#[derive(Clone, Debug)]
pub struct LbfgsOutcome {
    pub x: Vec<f64>,
    pub value: f64,
    pub gradient: Vec<f64>,
    pub projected_gradient: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub status: LbfgsStatus,
    /// Objective at every accepted iterate, starting with the initial point.
    /// Non-increasing up to [`noise_level`].
    pub trace: Vec<f64>,
}

/// Changes of `f` below this are treated as rounding noise by the line search.
pub fn noise_level(value: f64) -> f64 {
    64.0 * f64::EPSILON * value.abs().max(1.0)
}

/// `max_k |P(x_k − g_k) − x_k|` on the unit box.
pub fn projected_gradient_norm(x: &[f64], g: &[f64]) -> f64 {
    x.iter()
        .zip(g)
        .map(|(xi, gi)| ((xi - gi).clamp(0.0, 1.0) - xi).abs())
        .fold(0.0, f64::max)
}

fn dot_on(mask: &[bool], a: &[f64], b: &[f64]) -> f64 {
    mask.iter()
        .zip(a.iter().zip(b))
        .filter(|(m, _)| **m)
        .map(|(_, (x, y))| x * y)
        .sum()
}

struct Pair {
    s: Vec<f64>,
    y: Vec<f64>,
}

fn two_loop(pairs: &VecDeque<Pair>, mask: &[bool], g: &[f64]) -> Vec<f64> {
    let mut q: Vec<f64> = g.iter().zip(mask).map(|(v, m)| if *m { *v } else { 0.0 }).collect();
    let mut alphas = Vec::with_capacity(pairs.len());
    let mut rhos = Vec::with_capacity(pairs.len());
    for p in pairs.iter().rev() {
        let sy = dot_on(mask, &p.s, &p.y);
        let rho = if sy > 0.0 { 1.0 / sy } else { 0.0 };
        let a = rho * dot_on(mask, &p.s, &q);
        for (k, qk) in q.iter_mut().enumerate() {
            if mask[k] {
                *qk -= a * p.y[k];
            }
        }
        alphas.push(a);
        rhos.push(rho);
    }
    if let Some(last) = pairs.back() {
        let yy = dot_on(mask, &last.y, &last.y);
        let sy = dot_on(mask, &last.s, &last.y);
        if yy > 0.0 && sy > 0.0 {
            let gamma = sy / yy;
            q.iter_mut().for_each(|v| *v *= gamma);
        }
    }
    for (i, p) in pairs.iter().enumerate() {
        let j = pairs.len() - 1 - i;
        let b = rhos[j] * dot_on(mask, &p.y, &q);
        for (k, qk) in q.iter_mut().enumerate() {
            if mask[k] {
                *qk += p.s[k] * (alphas[j] - b);
            }
        }
    }
    q
}

/// Minimizes `f` over `[0, 1]^n` starting from `x0` (projected first).
/// `f(x, grad)` returns the value and writes the gradient.
pub fn minimize_box<F>(mut f: F, x0: &[f64], opts: &LbfgsOptions) -> LbfgsOutcome
where
    F: FnMut(&[f64], &mut [f64]) -> f64,
{
    let n = x0.len();
    let mut x: Vec<f64> = x0.iter().map(|v| v.clamp(0.0, 1.0)).collect();
    let mut g = vec![0.0; n];
    let mut value = f(&x, &mut g);
    let mut evaluations = 1;
    let mut trace = vec![value];
    let mut pairs: VecDeque<Pair> = VecDeque::with_capacity(opts.memory);
    let mut status = LbfgsStatus::IterationLimit;
    let mut iterations = 0;

    if !value.is_finite() || g.iter().any(|v| !v.is_finite()) {
        status = LbfgsStatus::NonFinite;
        iterations = opts.max_iterations;
    }

    let mut xt = vec![0.0; n];
    let mut gt = vec![0.0; n];
    while iterations < opts.max_iterations {
        if projected_gradient_norm(&x, &g) <= opts.tolerance {
            status = LbfgsStatus::Converged;
            break;
        }
        let mask: Vec<bool> = x
            .iter()
            .zip(&g)
            .map(|(xi, gi)| !((*xi <= 0.0 && *gi > 0.0) || (*xi >= 1.0 && *gi < 0.0)))
            .collect();

        let mut steepest = pairs.is_empty();
        let mut accepted = None;
        for _attempt in 0..2 {
            let d: Vec<f64> = if steepest {
                g.iter().zip(&mask).map(|(v, m)| if *m { -v } else { 0.0 }).collect()
            } else {
                two_loop(&pairs, &mask, &g).into_iter().map(|v| -v).collect()
            };
            let slope = dot_on(&mask, &g, &d);
            if !(slope < 0.0) {
                steepest = true;
                continue;
            }
            let dmax = d.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            let mut alpha = if steepest { (1.0f64).min(0.25 / dmax) } else { 1.0 };
            for _ in 0..opts.max_backtracks {
                for k in 0..n {
                    xt[k] = (x[k] + alpha * d[k]).clamp(0.0, 1.0);
                }
                let decrease: f64 = (0..n).map(|k| g[k] * (xt[k] - x[k])).sum();
                if decrease < 0.0 {
                    let vt = f(&xt, &mut gt);
                    evaluations += 1;
                    if vt.is_finite() && gt.iter().all(|v| v.is_finite()) {
                        let sufficient = vt <= value + opts.armijo * decrease;
                        // below the rounding level of f, steer by the gradient alone
                        let noise = noise_level(value);
                        let in_noise = -opts.armijo * decrease < noise
                            && vt <= value + noise
                            && projected_gradient_norm(&xt, &gt) < projected_gradient_norm(&x, &g);
                        if sufficient || in_noise {
                            accepted = Some(vt);
                            break;
                        }
                    }
                }
                alpha *= 0.5;
            }
            if accepted.is_some() || steepest {
                break;
            }
            pairs.clear();
            steepest = true;
        }

        let Some(vt) = accepted else {
            status = LbfgsStatus::Stalled;
            break;
        };
        let s: Vec<f64> = (0..n).map(|k| xt[k] - x[k]).collect();
        let y: Vec<f64> = (0..n).map(|k| gt[k] - g[k]).collect();
        let sy: f64 = s.iter().zip(&y).map(|(a, b)| a * b).sum();
        let ss: f64 = s.iter().map(|a| a * a).sum();
        let yy: f64 = y.iter().map(|a| a * a).sum();
        if sy > 1e-12 * (ss * yy).sqrt() {
            if pairs.len() == opts.memory {
                pairs.pop_front();
            }
            pairs.push_back(Pair { s, y });
        }
        std::mem::swap(&mut x, &mut xt);
        std::mem::swap(&mut g, &mut gt);
        value = vt;
        trace.push(value);
        iterations += 1;
    }

    LbfgsOutcome {
        projected_gradient: projected_gradient_norm(&x, &g),
        x,
        value,
        gradient: g,
        iterations,
        evaluations,
        status,
        trace,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn separable_quadratic_with_active_bounds() {
        // minimum at (0.3, 1.2→1, −0.5→0)
        let target = [0.3, 1.2, -0.5];
        let out = minimize_box(
            |x, g| {
                let mut v = 0.0;
                for k in 0..3 {
                    let w = (k + 1) as f64;
                    g[k] = 2.0 * w * (x[k] - target[k]);
                    v += w * (x[k] - target[k]).powi(2);
                }
                v
            },
            &[0.5, 0.5, 0.5],
            &LbfgsOptions::default(),
        );
        assert_eq!(out.status, LbfgsStatus::Converged);
        assert!((out.x[0] - 0.3).abs() < 1e-8);
        assert_eq!(out.x[1], 1.0);
        assert_eq!(out.x[2], 0.0);
    }

    #[test]
    fn rosenbrock_in_a_box() {
        let scale = |x: &[f64]| (4.0 * x[0] - 2.0, 4.0 * x[1] - 2.0);
        let out = minimize_box(
            |x, g| {
                let (a, b) = scale(x);
                let v = (1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2);
                g[0] = 4.0 * (-2.0 * (1.0 - a) - 400.0 * a * (b - a * a));
                g[1] = 4.0 * 200.0 * (b - a * a);
                v
            },
            &[0.1, 0.9],
            &LbfgsOptions {
                tolerance: 1e-10,
                ..Default::default()
            },
        );
        assert_eq!(out.status, LbfgsStatus::Converged);
        let (a, b) = scale(&out.x);
        assert!((a - 1.0).abs() < 1e-6 && (b - 1.0).abs() < 1e-6, "{a} {b}");
        assert!(out.trace.windows(2).all(|w| w[1] <= w[0] + noise_level(w[0])));
    }

    #[test]
    fn projected_gradient_ignores_blocked_directions() {
        assert_eq!(projected_gradient_norm(&[0.0, 1.0], &[3.0, -2.0]), 0.0);
        assert_eq!(projected_gradient_norm(&[0.5], &[0.2]), 0.2);
        assert_eq!(projected_gradient_norm(&[0.1], &[0.5]), 0.1);
    }
}
