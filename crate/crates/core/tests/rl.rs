mod common;

use common::gradient_error;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use racekit::dynamics::VehicleParams;
use racekit::rl::replay::ReplayBuffer;
use racekit::rl::train::curve_csv;
use racekit::rl::{bellman_target, train, Activation, Agent, AgentConfig, Mlp, RewardKind, Td3, Td3Hyper, TrainConfig};
use racekit::sim::SimConfig;
use racekit::track::{ShippedTrack, TrackMap};

#[test]
fn backprop_matches_finite_differences() {
    for (sizes, out, batch, seed) in [
        (&[5, 7, 6, 2][..], Activation::Tanh, 3, 1),
        (&[4, 8, 8, 1][..], Activation::Identity, 5, 2),
        (&[41, 100, 100, 2][..], Activation::Tanh, 2, 3),
    ] {
        let e = gradient_error(sizes, out, batch, seed);
        assert!(e < 1e-4, "{sizes:?}: {e}");
    }
}

#[test]
fn zero_output_gradient_gives_zero_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let net = Mlp::new(&[3, 4, 2], Activation::Tanh, Activation::Tanh, 0.5, &mut rng).unwrap();
    let tape = net.forward_tape(&[0.1, 0.2, 0.3], 1);
    let (g, dx) = net.backward(&tape, &[0.0, 0.0]);
    assert!(g.iter().chain(&dx).all(|v| *v == 0.0));
}

#[test]
fn linear_layer_gradient_is_outer_product() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let net = Mlp::new(&[3, 2], Activation::Tanh, Activation::Identity, 0.5, &mut rng).unwrap();
    let x = [0.5, -1.5, 2.0];
    let dy = [0.3, -0.7];
    let (g, _) = net.backward(&net.forward_tape(&x, 1), &dy);
    for o in 0..2 {
        for i in 0..3 {
            assert!((g[o * 3 + i] - dy[o] * x[i]).abs() < 1e-15);
        }
        assert!((g[6 + o] - dy[o]).abs() < 1e-15);
    }
}

#[test]
fn zero_network_outputs_zero() {
    let net = Mlp::zeros(&[4, 3, 3, 2], Activation::Tanh, Activation::Identity).unwrap();
    assert_eq!(net.forward(&[1.0, -2.0, 3.0, 0.5], 1), vec![0.0, 0.0]);
}

#[test]
fn bellman_target_examples() {
    assert_eq!(bellman_target(1.0, false, 0.99, 2.0, 2.5), 1.0 + 0.99 * 2.0);
    assert!((bellman_target(1.0, false, 0.99, 2.0, 2.5) - 2.98).abs() < 1e-15);
    assert_eq!(bellman_target(-1.0, true, 0.99, 7.0, 9.0), -1.0);
}

#[test]
fn unit_tau_copies_online_networks() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let hyper = Td3Hyper {
        tau: 1.0,
        batch: 8,
        hidden: 16,
        ..Td3Hyper::default()
    };
    let mut td3 = Td3::new(5, 2, hyper, &mut rng).unwrap();
    let mut buf = ReplayBuffer::new(64, 5, 2);
    for k in 0..32 {
        let o: Vec<f64> = (0..5).map(|i| ((k * 5 + i) as f64 * 0.37).sin()).collect();
        buf.push(&o, &[0.1, -0.2], 0.5, &o, k % 7 == 0);
    }
    for _ in 0..2 {
        td3.update(&buf, &mut rng).unwrap();
    }
    assert_eq!(td3.actor.params(), td3.actor_target.params());
    assert_eq!(td3.critic1.params(), td3.critic1_target.params());
    assert_eq!(td3.critic2.params(), td3.critic2_target.params());
}

#[test]
fn critic_regression_reduces_loss() {
    // constant reward, terminal transitions: critics should learn Q = r
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let hyper = Td3Hyper {
        batch: 32,
        hidden: 16,
        ..Td3Hyper::default()
    };
    let mut td3 = Td3::new(3, 2, hyper, &mut rng).unwrap();
    let mut buf = ReplayBuffer::new(128, 3, 2);
    for k in 0..128 {
        let o = [(k as f64).sin(), (k as f64).cos(), 0.5];
        buf.push(&o, &[0.0, 0.0], 0.8, &o, true);
    }
    let first = td3.update(&buf, &mut rng).unwrap().critic1_loss;
    let mut last = first;
    for _ in 0..300 {
        last = td3.update(&buf, &mut rng).unwrap().critic1_loss;
    }
    assert!(last < 0.01 * first, "{first} -> {last}");
}

#[test]
fn zero_steps_returns_fresh_agent() {
    let map = TrackMap::shipped(ShippedTrack::Oval);
    let p = VehicleParams::default();
    let mut tc = TrainConfig::for_vehicle(&p);
    tc.steps = 0;
    let out = train(&map, &p, &SimConfig::default(), RewardKind::Cth, &tc, None).unwrap();
    assert!(out.curve.is_empty());
    assert_eq!(out.updates, 0);
    let mut rng = ChaCha8Rng::seed_from_u64(tc.seed);
    let fresh = Td3::new(tc.agent.obs_dim(), 2, tc.hyper, &mut rng).unwrap();
    assert_eq!(out.agent.actor.params(), fresh.actor.params());
}

#[test]
fn short_training_is_deterministic_and_curve_is_well_formed() {
    let map = TrackMap::shipped(ShippedTrack::Oval);
    let p = VehicleParams::default();
    let mut tc = TrainConfig::for_vehicle(&p);
    tc.steps = 600;
    tc.start_steps = 200;
    tc.eval_window = 100;
    tc.seed = 11;
    let run = || train(&map, &p, &SimConfig::default(), RewardKind::Progress, &tc, None).unwrap();
    let a = run();
    let b = run();
    assert_eq!(a.curve, b.curve);
    assert_eq!(a.agent, b.agent);
    assert_eq!(a.curve.len(), tc.steps / tc.eval_window);
    assert!(a.curve.windows(2).all(|w| w[1].step > w[0].step));
    assert_eq!(curve_csv(&a.curve).lines().count(), 1 + a.curve.len());
    assert_eq!(a.updates, tc.steps - tc.start_steps);
}

#[test]
fn tal_without_raceline_is_rejected() {
    let map = TrackMap::shipped(ShippedTrack::Oval);
    let p = VehicleParams::default();
    let tc = TrainConfig::for_vehicle(&p);
    assert!(train(&map, &p, &SimConfig::default(), RewardKind::Tal, &tc, None).is_err());
}

#[test]
fn checkpoint_round_trip() {
    let p = VehicleParams::default();
    let cfg = AgentConfig::for_vehicle(&p);
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let actor = Mlp::new(&[cfg.obs_dim(), 10, 10, 2], Activation::Tanh, Activation::Tanh, 0.1, &mut rng).unwrap();
    let agent = Agent::new(actor, cfg).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("a.agent");
    agent.save(&path).unwrap();
    assert_eq!(Agent::load(&path).unwrap(), agent);
    std::fs::write(&path, "garbage").unwrap();
    assert!(Agent::load(&path).is_err());
}

proptest! {
    #[test]
    fn actor_outputs_stay_in_unit_box(seed in 0u64..1000, x in prop::collection::vec(-50.0f64..50.0, 41)) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let actor = Mlp::new(&[41, 100, 100, 2], Activation::Tanh, Activation::Tanh, 3.0, &mut rng).unwrap();
        for o in actor.forward(&x, 1) {
            prop_assert!(o > -1.0 - 1e-15 && o < 1.0 + 1e-15);
        }
    }

    #[test]
    fn decoded_actions_respect_limits(a0 in -3.0f64..3.0, a1 in -3.0f64..3.0) {
        let p = VehicleParams::default();
        let cfg = AgentConfig::for_vehicle(&p);
        let act = cfg.decode([a0, a1]);
        prop_assert!(act.steering.abs() <= p.delta_max + 1e-15);
        prop_assert!(act.speed >= cfg.v_min - 1e-12 && act.speed <= cfg.v_max + 1e-12);
        let back = cfg.encode(act.speed, act.steering);
        prop_assert!((back[0] - a0.clamp(-1.0, 1.0)).abs() < 1e-12);
        prop_assert!((back[1] - a1.clamp(-1.0, 1.0)).abs() < 1e-12);
    }

    #[test]
    fn shaped_rewards_are_bounded(v in 0.0f64..1.0, psi in -3.14f64..3.14, d in 0.0f64..1.0,
                                  s0 in 0.0f64..1.0, ds in -0.05f64..0.05,
                                  u in prop::array::uniform4(0.0f64..1.0)) {
        use racekit::rl::{reward, RewardContext};
        let ctx = RewardContext { v_t: v, psi_err: psi, d_c: d, s_t: s0 + ds, s_prev: s0,
                                  u_agent: [u[0], u[1]], u_classic: [u[2], u[3]] };
        let cth = reward(RewardKind::Cth, &ctx, None, 1.0);
        prop_assert!((-2.0..=1.0).contains(&cth));
        let prog = reward(RewardKind::Progress, &ctx, None, 1.0);
        prop_assert!((-1.0..=1.0).contains(&prog));
        let tal = reward(RewardKind::Tal, &ctx, None, 1.0);
        prop_assert!((0.0..=1.0).contains(&tal));
    }
}
