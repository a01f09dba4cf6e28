//! Oracles shared by the integration tests and the acceptance run.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use racekit::dynamics::{derivatives, speed_steer_to_derivative_controls, step, ControlDerivatives, DynamicState, VehicleParams};
use racekit::geometry::Pose2;
use racekit::mpcc::{contouring_lag_errors, rollout, ControlBounds, Mpcc, MpccConfig, MpccControl, MpccOutcome};
use racekit::pursuit::{PurePursuit, PursuitParams};
use racekit::raceline::Raceline;
use racekit::rl::{Activation, Mlp};
use racekit::sim::{episode_rng, Action, Lidar, PoseSource, SimConfig, Simulator};
use racekit::track::{shapes, PathParameterization, ShippedTrack, TrackMap};

/// Each right-hand side written out monomial by monomial, with the sum of
/// term magnitudes for scaling the comparison.
pub fn expanded(s: &DynamicState, u: ControlDerivatives, p: &VehicleParams) -> ([f64; 7], [f64; 7]) {
    let (g, a, h, lf, lr) = (p.g, u.a, p.h_cg, p.l_f, p.l_r);
    let l = lf + lr;
    let k_yaw = p.mu * p.m / (p.i_z * l);
    let k_slip = p.mu / (s.v * l);
    let yaw_terms = [
        k_yaw * lf * p.c_sf * g * lr * s.delta,
        -k_yaw * lf * p.c_sf * a * h * s.delta,
        k_yaw * lr * p.c_sr * g * lf * s.beta,
        k_yaw * lr * p.c_sr * a * h * s.beta,
        -k_yaw * lf * p.c_sf * g * lr * s.beta,
        k_yaw * lf * p.c_sf * a * h * s.beta,
        -k_yaw * lf * lf * p.c_sf * g * lr * s.theta_dot / s.v,
        k_yaw * lf * lf * p.c_sf * a * h * s.theta_dot / s.v,
        -k_yaw * lr * lr * p.c_sr * g * lf * s.theta_dot / s.v,
        -k_yaw * lr * lr * p.c_sr * a * h * s.theta_dot / s.v,
    ];
    let slip_terms = [
        k_slip * p.c_sf * g * lr * s.delta,
        -k_slip * p.c_sf * a * h * s.delta,
        -k_slip * p.c_sr * g * lf * s.beta,
        -k_slip * p.c_sr * a * h * s.beta,
        -k_slip * p.c_sf * g * lr * s.beta,
        k_slip * p.c_sf * a * h * s.beta,
        k_slip * p.c_sr * g * lf * lr * s.theta_dot / s.v,
        k_slip * p.c_sr * a * h * lr * s.theta_dot / s.v,
        -k_slip * p.c_sf * g * lr * lf * s.theta_dot / s.v,
        k_slip * p.c_sf * a * h * lf * s.theta_dot / s.v,
        -s.theta_dot,
    ];
    let course = s.theta + s.beta;
    let rhs = [
        s.v * course.cos(),
        s.v * course.sin(),
        u.v_delta,
        u.a,
        s.theta_dot,
        yaw_terms.iter().sum(),
        slip_terms.iter().sum(),
    ];
    let scale = [
        s.v,
        s.v,
        u.v_delta.abs(),
        u.a.abs(),
        s.theta_dot.abs(),
        yaw_terms.iter().map(|t| t.abs()).sum(),
        slip_terms.iter().map(|t| t.abs()).sum(),
    ];
    (rhs, scale)
}

pub fn random_state(rng: &mut ChaCha8Rng) -> (DynamicState, ControlDerivatives) {
    let s = DynamicState {
        x: rng.random_range(-50.0..50.0),
        y: rng.random_range(-50.0..50.0),
        delta: rng.random_range(-0.4..0.4),
        v: rng.random_range(0.1..8.0),
        theta: rng.random_range(-std::f64::consts::PI..std::f64::consts::PI),
        theta_dot: rng.random_range(-6.0..6.0),
        beta: rng.random_range(-0.5..0.5),
    };
    let u = ControlDerivatives::new(rng.random_range(-3.2..3.2), rng.random_range(-9.5..9.5));
    (s, u)
}

/// Worst scaled disagreement between the library and the expanded form.
pub fn derivative_error(states: usize, seed: u64) -> f64 {
    let p = VehicleParams::default().with_mu(0.9);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..states {
        let (s, u) = random_state(&mut rng);
        let got = derivatives(&s, u, &p).expect("finite state");
        let (want, scale) = expanded(&s, u, &p);
        for i in 0..7 {
            worst = worst.max((got[i] - want[i]).abs() / scale[i].max(f64::MIN_POSITIVE));
        }
    }
    worst
}

/// Gap between start and end after one revolution at constant steering,
/// as a fraction of the circumference.
pub fn kinematic_closure(delta: f64, v: f64) -> f64 {
    let p = VehicleParams::default();
    let radius = p.wheelbase() / delta.tan();
    let circumference = 2.0 * std::f64::consts::PI * radius;
    let n = (circumference / v / 0.01).round() as usize;
    let mut s = DynamicState { delta, v, ..Default::default() };
    for _ in 0..n {
        s = step(&s, ControlDerivatives::default(), &p, 0.01).expect("finite state");
    }
    s.x.hypot(s.y) / circumference
}

/// Cross-track error over five seconds for a car released 0.5 m left of
/// a straight, driving pure pursuit at 25 Hz.
pub fn offset_recovery(v: f64) -> Vec<(f64, f64)> {
    let track = shapes::stadium(30.0, 5.0, 0.1, 1.25).unwrap();
    let path = PathParameterization::new(&track);
    let p = VehicleParams::default();
    let mut pp = PurePursuit::new(Raceline::from_centerline(&track, v).unwrap(), p, PursuitParams::default());
    let mut s = DynamicState { v, ..DynamicState::at_rest(2.0, 0.5, 0.0) };
    let mut out = Vec::new();
    for k in 0..=125 {
        out.push((k as f64 * 0.04, path.project(s.x, s.y).distance));
        let a = pp.act(&Pose2::new(s.x, s.y, s.theta), s.v);
        for _ in 0..4 {
            let u = speed_steer_to_derivative_controls(a.speed, a.steering, &s, &p);
            s = step(&s, u, &p, 0.01).unwrap();
        }
    }
    out
}

/// A long rectangle whose bottom edge runs along +x from the origin.
pub fn straight_path() -> PathParameterization {
    PathParameterization::new(&shapes::rectangle(60.0, 10.0, 0.1, 1.0).unwrap())
}

pub struct BruteForce {
    pub solver_objective: f64,
    pub grid_objective: f64,
    pub solver: MpccControl,
    pub grid: MpccControl,
}

/// Single-step MPCC solve against exhaustive enumeration of a control grid.
pub fn single_step_brute_force() -> BruteForce {
    let p = VehicleParams::default();
    let cfg = MpccConfig {
        horizon: 1,
        max_iter: 20,
        max_dv: None,
        margin: 0.2,
        bounds: Some(ControlBounds {
            delta: (0.1, 0.2),
            v: (1.0, 2.0),
            s_dot: (1.0, 2.0),
        }),
        ..MpccConfig::default()
    };
    let mut m = Mpcc::new(straight_path(), p, cfg.clone()).unwrap();
    let start = m.initial_state(&Pose2::new(10.0, 0.3, 0.05));
    let sol = m.solve_with_guess(&start, 1.5, &[MpccControl { delta: 0.15, v: 1.2, s_dot: 1.1 }]).unwrap();
    let mut best = (f64::INFINITY, MpccControl::default());
    let steps = 200;
    for i in 0..=20 {
        for j in 0..=steps {
            for k in 0..=steps {
                let u = MpccControl {
                    delta: 0.1 + 0.1 * i as f64 / 20.0,
                    v: 1.0 + j as f64 / steps as f64,
                    s_dot: 1.0 + k as f64 / steps as f64,
                };
                let states = rollout(&start, &[u], p.wheelbase(), cfg.dt);
                if m.violation(&states, &[u]) > 0.0 {
                    continue;
                }
                let f = m.objective(&states, &[u]);
                if f < best.0 {
                    best = (f, u);
                }
            }
        }
    }
    BruteForce {
        solver_objective: sol.objective,
        grid_objective: best.0,
        solver: sol.first(),
        grid: best.1,
    }
}

#[derive(Debug, Default)]
pub struct HorizonCheck {
    pub solved: usize,
    /// Largest lateral acceleration beyond μg over all planned steps.
    pub friction_excess: f64,
    /// Largest contouring error beyond the bounds, for solves that start inside them.
    pub bound_excess: f64,
    pub progress_monotone: bool,
}

/// Drives MPCC on a shipped track and audits every returned horizon.
pub fn closed_loop_horizons(track: ShippedTrack, mu: f64, steps: usize, seed: u64) -> HorizonCheck {
    let map = TrackMap::shipped(track);
    let p = VehicleParams::default().with_mu(mu);
    let cfg = SimConfig::default();
    let lidar = Lidar::new(&cfg.lidar).unwrap();
    let mut sim = Simulator::new(&map, p, &cfg, lidar, &PoseSource::True, 0.5, episode_rng(seed, 0)).unwrap();
    let mut m = Mpcc::new(map.path.clone(), p, MpccConfig::default()).unwrap();
    let limit = p.mu * p.g;
    let mut out = HorizonCheck {
        progress_monotone: true,
        ..HorizonCheck::default()
    };
    for _ in 0..steps {
        let obs = sim.sense().unwrap();
        let (pose, speed) = (obs.pose, obs.speed);
        let action = match m.solve(&pose, speed).unwrap() {
            MpccOutcome::Solved(sol) => {
                out.solved += 1;
                let (ec0, _) = contouring_lag_errors(&sol.states[0], m.path());
                let (lo0, hi0) = m.contouring_bounds(sol.states[0].s);
                let inside = ec0 >= lo0 && ec0 <= hi0;
                for (u, st) in sol.controls.iter().zip(&sol.states[1..]) {
                    let lat = u.v * u.v * u.delta.abs().tan() / p.wheelbase();
                    out.friction_excess = out.friction_excess.max(lat - limit);
                    if inside {
                        let (ec, _) = contouring_lag_errors(st, m.path());
                        let (lo, hi) = m.contouring_bounds(st.s);
                        out.bound_excess = out.bound_excess.max(lo - ec).max(ec - hi);
                    }
                }
                out.progress_monotone &= sol.states.windows(2).all(|w| w[1].s >= w[0].s);
                let u = sol.first();
                Action::new(u.v, u.delta)
            }
            MpccOutcome::Fallback(a) => a,
        };
        if sim.advance(action).unwrap().is_some() {
            break;
        }
    }
    out
}

fn loss(net: &Mlp, x: &[f64], batch: usize, c: &[f64]) -> f64 {
    net.forward(x, batch).iter().zip(c).map(|(o, c)| o * c).sum()
}

/// Worst relative gap between backprop and central differences over every
/// parameter and input of a random network; magnitudes below 1e-5 count as 1e-5.
pub fn gradient_error(sizes: &[usize], out: Activation, batch: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut net = Mlp::new(sizes, Activation::Tanh, out, 0.5, &mut rng).unwrap();
    let x: Vec<f64> = (0..batch * sizes[0]).map(|_| rng.random_range(-1.0..1.0)).collect();
    let c: Vec<f64> = (0..batch * sizes[sizes.len() - 1]).map(|_| rng.random_range(-1.0..1.0)).collect();
    let tape = net.forward_tape(&x, batch);
    let (grads, dx) = net.backward(&tape, &c);
    let eps = 1e-5;
    let rel = |a: f64, b: f64| (a - b).abs() / a.abs().max(b.abs()).max(1e-5);
    let mut worst: f64 = 0.0;
    for i in 0..net.len() {
        let orig = net.params()[i];
        net.params_mut()[i] = orig + eps;
        let up = loss(&net, &x, batch, &c);
        net.params_mut()[i] = orig - eps;
        let down = loss(&net, &x, batch, &c);
        net.params_mut()[i] = orig;
        worst = worst.max(rel(grads[i], (up - down) / (2.0 * eps)));
    }
    for i in 0..x.len() {
        let mut xp = x.clone();
        xp[i] += eps;
        let mut xm = x.clone();
        xm[i] -= eps;
        let fd = (loss(&net, &xp, batch, &c) - loss(&net, &xm, batch, &c)) / (2.0 * eps);
        worst = worst.max(rel(dx[i], fd));
    }
    worst
}
