mod common;

use common::{derivative_error, kinematic_closure, random_state};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use racekit::dynamics::{
    kinematic_derivatives, speed_steer_to_derivative_controls, step, ControlDerivatives, DynamicState, VehicleParams,
};

#[test]
fn derivatives_match_expanded_form_on_random_states() {
    for seed in [11, 12] {
        let e = derivative_error(1000, seed);
        assert!(e <= 1e-9, "scaled error {e}");
    }
}

#[test]
fn kinematic_circle_closes_within_one_percent() {
    for (delta, v) in [(0.2, 0.08), (0.1, 0.05), (-0.3, 0.09)] {
        assert!(kinematic_closure(delta, v) <= 0.01);
    }
}

#[test]
fn kinematic_yaw_acceleration_is_derivative_of_yaw_rate() {
    let p = VehicleParams::default();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let l = p.wheelbase();
    for _ in 0..200 {
        let (s, u) = random_state(&mut rng);
        let d = kinematic_derivatives(&s, u, &p);
        let h = 1e-6;
        let rate = |v: f64, delta: f64| v * delta.tan() / l;
        let fd = (rate(s.v + h * u.a, s.delta + h * u.v_delta) - rate(s.v - h * u.a, s.delta - h * u.v_delta)) / (2.0 * h);
        assert!((d[5] - fd).abs() <= 1e-6 * (1.0 + fd.abs()), "{} vs {fd}", d[5]);
    }
}

#[test]
fn straight_run_at_constant_speed() {
    let p = VehicleParams::default();
    let mut s = DynamicState { v: 3.0, ..DynamicState::at_rest(0.0, 0.0, 0.3) };
    for _ in 0..100 {
        s = step(&s, ControlDerivatives::default(), &p, 0.01).unwrap();
    }
    assert!((s.x - 3.0 * 0.3f64.cos()).abs() < 1e-9);
    assert!((s.y - 3.0 * 0.3f64.sin()).abs() < 1e-9);
}

proptest! {
    #[test]
    fn step_respects_limits(
        v in 0.0f64..8.0,
        delta in -0.4f64..0.4,
        tv in -2.0f64..12.0,
        td in -1.0f64..1.0,
    ) {
        let p = VehicleParams::default();
        let mut s = DynamicState { v, delta, ..DynamicState::at_rest(0.0, 0.0, 0.0) };
        for _ in 0..50 {
            let u = speed_steer_to_derivative_controls(tv, td, &s, &p);
            prop_assert!(u.v_delta.abs() <= p.v_delta_max && u.a.abs() <= p.a_max);
            s = step(&s, u, &p, 0.01).unwrap();
            prop_assert!(s.v >= 0.0 && s.v <= p.v_max);
            prop_assert!(s.delta.abs() <= p.delta_max);
            prop_assert!(s.is_finite());
        }
    }

    #[test]
    fn mirrored_steering_mirrors_motion(v in 0.5f64..6.0, delta in 0.01f64..0.4) {
        let p = VehicleParams::default();
        let mut a = DynamicState { v, delta, ..DynamicState::at_rest(0.0, 0.0, 0.0) };
        let mut b = DynamicState { v, delta: -delta, ..DynamicState::at_rest(0.0, 0.0, 0.0) };
        for _ in 0..40 {
            a = step(&a, ControlDerivatives::default(), &p, 0.01).unwrap();
            b = step(&b, ControlDerivatives::default(), &p, 0.01).unwrap();
        }
        prop_assert!((a.x - b.x).abs() < 1e-9 && (a.y + b.y).abs() < 1e-9);
        prop_assert!((a.theta + b.theta).abs() < 1e-9 && (a.beta + b.beta).abs() < 1e-9);
    }
}
