use proptest::prelude::*;

use verticrop::crop_model::{
    f_solar, rollout, smooth_max, smooth_min, step_s, step_sc, CropParams, DailyInput, EnvConstants, SimState,
    Variant, MATURITY_THRESHOLD,
};
use verticrop::io::{fmt_num, read_schedule, write_trajectory};
use verticrop::ocp::Bounds;

fn input() -> impl Strategy<Value = DailyInput> {
    (0.0..=35.0, 0.0..=1.0, 0.0..=35.0).prop_map(|(t, d, r)| DailyInput::new(t, d, r))
}

fn schedule(max_len: usize) -> impl Strategy<Value = Vec<DailyInput>> {
    prop::collection::vec(input(), 0..max_len)
}

fn state() -> impl Strategy<Value = SimState> {
    (0.0..5.0, 0.0..3000.0, 0.0..800.0).prop_map(|(b, t, i)| SimState::new(b, t, i))
}

proptest! {
    #[test]
    fn smooth_max_bounds(a in -1e3..1e3_f64, b in -1e3..1e3_f64, eps in 1e-12..1e2_f64) {
        let s = smooth_max(a, b, eps);
        let m = a.max(b);
        let slack = 1e-12 * (1.0 + m.abs());
        prop_assert!(s >= m - slack);
        prop_assert!(s - m <= eps.sqrt() / 2.0 + slack);
        prop_assert_eq!(s, smooth_max(b, a, eps));
    }

    #[test]
    fn smooth_min_mirrors_smooth_max(a in -1e3..1e3_f64, b in -1e3..1e3_f64, eps in 1e-12..1e2_f64) {
        let s = smooth_min(a, b, eps);
        prop_assert!(s <= a.min(b) + 1e-12 * (1.0 + a.abs().max(b.abs())));
        prop_assert_eq!(smooth_max(a, b, 0.0), a.max(b));
        prop_assert_eq!(smooth_min(a, b, 0.0), a.min(b));
    }

    #[test]
    fn smoothed_step_at_zero_epsilon_is_exact(x in state(), u in input()) {
        let p = CropParams::batten();
        let env = EnvConstants { epsilon: 0.0, ..EnvConstants::default() };
        let a = step_sc(&x, &u, &env, &p).to_array();
        let b = step_s(&x, &u, &env, &p).to_array();
        for k in 0..3 {
            prop_assert!((a[k] - b[k]).abs() <= 4.0 * f64::EPSILON * (1.0 + b[k].abs()));
        }
    }

    #[test]
    fn exact_rollout_is_monotone_with_bounded_interception(u in schedule(200)) {
        let p = CropParams::batten();
        let t = rollout(&SimState::planting(&p), &u, Variant::S, &EnvConstants::default(), &p).unwrap();
        for w in t.states.windows(2) {
            prop_assert!(w[1].biomass >= w[0].biomass);
            prop_assert!(w[1].thermal_time >= w[0].thermal_time);
            prop_assert!(w[1].i50b >= w[0].i50b);
        }
        for f in &t.f_solar_series {
            prop_assert!(*f > 0.0 && *f <= p.f_solar_max);
        }
        // rises, then falls: no increase after the first decrease
        let first_drop = t.f_solar_series.windows(2).position(|w| w[1] < w[0]);
        if let Some(d) = first_drop {
            for w in t.f_solar_series[d..].windows(2) {
                prop_assert!(w[1] <= w[0]);
            }
        }
    }

    // The smoothed minimum dips below zero once both interception branches
    // vanish, so monotone biomass is only guaranteed before maturity.
    #[test]
    fn smoothed_rollout_is_monotone_until_maturity(u in schedule(200)) {
        let p = CropParams::batten();
        let t = rollout(&SimState::planting(&p), &u, Variant::Sc, &EnvConstants::default(), &p).unwrap();
        for (d, w) in t.states.windows(2).enumerate() {
            prop_assert!(w[1].thermal_time >= w[0].thermal_time);
            prop_assert!(w[1].i50b >= w[0].i50b);
            if f_solar(&t.states[d], &p, 0.0) >= MATURITY_THRESHOLD {
                prop_assert!(w[1].biomass >= w[0].biomass, "day {}", d);
            }
        }
    }

    #[test]
    fn smoothed_step_stays_close_to_exact(x in state(), u in input()) {
        // each smoothed operator moves its output by at most sqrt(eps)/2
        let p = CropParams::batten();
        let env = EnvConstants::default();
        let a = step_sc(&x, &u, &env, &p);
        let b = step_s(&x, &u, &env, &p);
        let h = env.epsilon.sqrt() / 2.0;
        prop_assert!((a.thermal_time - b.thermal_time).abs() <= h + 1e-9);
        prop_assert!((a.biomass - b.biomass).abs() <= 10.0 * p.rue * u.radiation * h * 1e-3 + 1e-9);
    }

    #[test]
    fn formatted_numbers_round_trip_to_fifteen_digits(x in prop::num::f64::NORMAL) {
        let back: f64 = fmt_num(x).parse().unwrap();
        prop_assert!((back - x).abs() <= 1e-14 * x.abs());
    }

    #[test]
    fn trajectory_csv_reads_back_as_its_schedule(u in schedule(40)) {
        let p = CropParams::batten();
        let t = rollout(&SimState::planting(&p), &u, Variant::Sc, &EnvConstants::default(), &p).unwrap();
        let mut buf = Vec::new();
        write_trajectory(&mut buf, &t).unwrap();
        let text = String::from_utf8(buf).unwrap();
        prop_assert_eq!(text.lines().count(), u.len() + 2);
        let back = read_schedule(&text, &Bounds::default()).unwrap();
        prop_assert_eq!(back.len(), u.len());
        for (a, b) in back.iter().zip(&u) {
            for (x, y) in a.to_array().iter().zip(b.to_array()) {
                prop_assert!((x - y).abs() <= 1e-14 * (1.0 + y.abs()));
            }
        }
    }
}
