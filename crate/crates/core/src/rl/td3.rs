//! Twin delayed deep deterministic policy gradient.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::mlp::{Activation, Mlp};
use super::optim::{Optimizer, OptimizerKind};
use super::replay::{Batch, ReplayBuffer};
use crate::config::KvConfig;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Td3Hyper {
    pub gamma: f64,
    pub tau: f64,
    pub batch: usize,
    pub actor_lr: f64,
    pub critic_lr: f64,
    pub policy_delay: usize,
    pub target_noise: f64,
    pub target_clip: f64,
    pub hidden: usize,
    pub optimizer: OptimizerKind,
}

impl Default for Td3Hyper {
    fn default() -> Self {
        Self {
            gamma: 0.99,
            tau: 0.005,
            batch: 100,
            actor_lr: 1e-3,
            critic_lr: 1e-3,
            policy_delay: 2,
            target_noise: 0.2,
            target_clip: 0.5,
            hidden: 100,
            optimizer: OptimizerKind::sgd(),
        }
    }
}

impl Td3Hyper {
    pub fn validate(&self) -> Result<()> {
        let ok = (0.0..=1.0).contains(&self.gamma)
            && self.tau > 0.0
            && self.tau <= 1.0
            && self.batch > 0
            && self.actor_lr > 0.0
            && self.critic_lr > 0.0
            && self.policy_delay > 0
            && self.target_noise >= 0.0
            && self.target_clip >= 0.0
            && self.hidden > 0;
        if !ok {
            return Err(Error::Config(format!("invalid TD3 settings {self:?}")));
        }
        Ok(())
    }

    /// Reads the keys it knows from `cfg`, leaving others to the caller.
    pub fn read(&mut self, cfg: &KvConfig) -> Result<()> {
        cfg.read_f64("gamma", &mut self.gamma)?;
        cfg.read_f64("tau", &mut self.tau)?;
        cfg.read_usize("batch", &mut self.batch)?;
        cfg.read_f64("actor_lr", &mut self.actor_lr)?;
        cfg.read_f64("critic_lr", &mut self.critic_lr)?;
        cfg.read_usize("policy_delay", &mut self.policy_delay)?;
        cfg.read_f64("target_noise", &mut self.target_noise)?;
        cfg.read_f64("target_clip", &mut self.target_clip)?;
        cfg.read_usize("hidden", &mut self.hidden)?;
        if let Some(name) = cfg.get("optimizer") {
            self.optimizer = name.parse()?;
        }
        self.validate()
    }

    pub const KEYS: [&'static str; 10] = [
        "gamma",
        "tau",
        "batch",
        "actor_lr",
        "critic_lr",
        "policy_delay",
        "target_noise",
        "target_clip",
        "hidden",
        "optimizer",
    ];
}

/// `r + γ·(1 − done)·min(q1, q2)`.
pub fn bellman_target(reward: f64, done: bool, gamma: f64, q1: f64, q2: f64) -> f64 {
    if done {
        reward
    } else {
        reward + gamma * q1.min(q2)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct UpdateStats {
    pub critic1_loss: f64,
    pub critic2_loss: f64,
    /// Present on updates that also moved the actor.
    pub actor_loss: Option<f64>,
}

pub struct Td3 {
    pub actor: Mlp,
    pub critic1: Mlp,
    pub critic2: Mlp,
    pub actor_target: Mlp,
    pub critic1_target: Mlp,
    pub critic2_target: Mlp,
    hyper: Td3Hyper,
    actor_opt: Optimizer,
    critic1_opt: Optimizer,
    critic2_opt: Optimizer,
    updates: usize,
    obs_dim: usize,
    act_dim: usize,
}

fn concat(obs: &[f64], act: &[f64], obs_dim: usize, act_dim: usize, batch: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(batch * (obs_dim + act_dim));
    for b in 0..batch {
        out.extend_from_slice(&obs[b * obs_dim..(b + 1) * obs_dim]);
        out.extend_from_slice(&act[b * act_dim..(b + 1) * act_dim]);
    }
    out
}

impl Td3 {
    pub fn new<R: Rng + ?Sized>(obs_dim: usize, act_dim: usize, hyper: Td3Hyper, rng: &mut R) -> Result<Self> {
        hyper.validate()?;
        let h = hyper.hidden;
        let actor = Mlp::new(&[obs_dim, h, h, act_dim], Activation::Tanh, Activation::Tanh, 3e-3, rng)?;
        let critic1 = Mlp::new(&[obs_dim + act_dim, h, h, 1], Activation::Tanh, Activation::Identity, 3e-3, rng)?;
        let critic2 = Mlp::new(&[obs_dim + act_dim, h, h, 1], Activation::Tanh, Activation::Identity, 3e-3, rng)?;
        Ok(Self {
            actor_opt: Optimizer::new(hyper.optimizer, hyper.actor_lr, actor.len()),
            critic1_opt: Optimizer::new(hyper.optimizer, hyper.critic_lr, critic1.len()),
            critic2_opt: Optimizer::new(hyper.optimizer, hyper.critic_lr, critic2.len()),
            actor_target: actor.clone(),
            critic1_target: critic1.clone(),
            critic2_target: critic2.clone(),
            actor,
            critic1,
            critic2,
            hyper,
            updates: 0,
            obs_dim,
            act_dim,
        })
    }

    pub fn hyper(&self) -> &Td3Hyper {
        &self.hyper
    }

    pub fn updates(&self) -> usize {
        self.updates
    }

    /// Deterministic policy output for one observation.
    pub fn act(&self, obs: &[f64]) -> Vec<f64> {
        self.actor.forward(obs, 1)
    }

    /// Bellman targets for a batch, with clipped smoothing noise on the
    /// target policy's actions.
    pub fn targets<R: Rng + ?Sized>(&self, batch: &Batch, rng: &mut R) -> Vec<f64> {
        let n = batch.size;
        let mut next_act = self.actor_target.forward(&batch.next_obs, n);
        if self.hyper.target_noise > 0.0 {
            let noise = Normal::new(0.0, self.hyper.target_noise).expect("finite std");
            for a in &mut next_act {
                let e = noise.sample(rng).clamp(-self.hyper.target_clip, self.hyper.target_clip);
                *a = (*a + e).clamp(-1.0, 1.0);
            }
        }
        let input = concat(&batch.next_obs, &next_act, self.obs_dim, self.act_dim, n);
        let q1 = self.critic1_target.forward(&input, n);
        let q2 = self.critic2_target.forward(&input, n);
        (0..n)
            .map(|i| bellman_target(batch.reward[i], batch.done[i] > 0.5, self.hyper.gamma, q1[i], q2[i]))
            .collect()
    }

    fn regress(critic: &mut Mlp, opt: &mut Optimizer, input: &[f64], y: &[f64]) -> f64 {
        let n = y.len();
        let tape = critic.forward_tape(input, n);
        let q = tape.output();
        let mut loss = 0.0;
        let grad: Vec<f64> = q
            .iter()
            .zip(y)
            .map(|(q, y)| {
                let e = q - y;
                loss += e * e;
                2.0 * e / n as f64
            })
            .collect();
        let (g, _) = critic.backward(&tape, &grad);
        opt.step(critic.params_mut(), &g);
        loss / n as f64
    }

    /// One gradient update from a sampled batch.
    pub fn update<R: Rng + ?Sized>(&mut self, buffer: &ReplayBuffer, rng: &mut R) -> Result<UpdateStats> {
        let batch = buffer.sample(self.hyper.batch, rng);
        self.update_on(&batch, rng)
    }

    pub fn update_on<R: Rng + ?Sized>(&mut self, batch: &Batch, rng: &mut R) -> Result<UpdateStats> {
        let n = batch.size;
        let y = self.targets(batch, rng);
        let input = concat(&batch.obs, &batch.action, self.obs_dim, self.act_dim, n);
        let l1 = Self::regress(&mut self.critic1, &mut self.critic1_opt, &input, &y);
        let l2 = Self::regress(&mut self.critic2, &mut self.critic2_opt, &input, &y);
        self.updates += 1;
        let mut stats = UpdateStats {
            critic1_loss: l1,
            critic2_loss: l2,
            actor_loss: None,
        };
        if self.updates % self.hyper.policy_delay == 0 {
            let tape = self.actor.forward_tape(&batch.obs, n);
            let act = tape.output().to_vec();
            let cin = concat(&batch.obs, &act, self.obs_dim, self.act_dim, n);
            let ctape = self.critic1.forward_tape(&cin, n);
            let q = ctape.output();
            let loss = -q.iter().sum::<f64>() / n as f64;
            let (_, dinput) = self.critic1.backward(&ctape, &vec![-1.0 / n as f64; n]);
            let width = self.obs_dim + self.act_dim;
            let dact: Vec<f64> = (0..n)
                .flat_map(|b| dinput[b * width + self.obs_dim..(b + 1) * width].iter().copied())
                .collect();
            let (g, _) = self.actor.backward(&tape, &dact);
            self.actor_opt.step(self.actor.params_mut(), &g);
            stats.actor_loss = Some(loss);
            let tau = self.hyper.tau;
            self.actor_target.soft_update(&self.actor, tau);
            self.critic1_target.soft_update(&self.critic1, tau);
            self.critic2_target.soft_update(&self.critic2, tau);
        }
        let finite = l1.is_finite() && l2.is_finite() && stats.actor_loss.is_none_or(f64::is_finite);
        if !finite || !self.actor.is_finite() || !self.critic1.is_finite() || !self.critic2.is_finite() {
            return Err(Error::TrainingDiverged(self.updates));
        }
        Ok(stats)
    }
}
