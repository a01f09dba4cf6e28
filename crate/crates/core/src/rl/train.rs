//! Seeded TD3 training on one track and evaluation of the result.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::env::{Agent, AgentConfig, RacingEnv};
use super::replay::ReplayBuffer;
use super::reward::RewardKind;
use super::td3::{Td3, Td3Hyper};
use crate::config::KvConfig;
use crate::csvio::fmt_sig;
use crate::dynamics::VehicleParams;
use crate::error::{Error, Result};
use crate::raceline::Raceline;
use crate::sim::{episode_rng, run_episode, EpisodeRecord, PoseSource, SimConfig, Terminal};
use crate::track::TrackMap;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrainConfig {
    pub steps: usize,
    pub seed: u64,
    /// Uniform random actions before the policy takes over.
    pub start_steps: usize,
    pub exploration_noise: f64,
    /// Steps per learning-curve row.
    pub eval_window: usize,
    pub buffer: usize,
    /// Simulated seconds before a training episode is cut off.
    pub episode_timeout_s: f64,
    pub tal_weight: f64,
    pub hyper: Td3Hyper,
    pub agent: AgentConfig,
}

impl TrainConfig {
    pub fn for_vehicle(p: &VehicleParams) -> Self {
        Self {
            steps: 30_000,
            seed: 0,
            start_steps: 2_000,
            exploration_noise: 0.1,
            eval_window: 1_000,
            buffer: 100_000,
            episode_timeout_s: 40.0,
            tal_weight: 1.0,
            hyper: Td3Hyper::default(),
            agent: AgentConfig::for_vehicle(p),
        }
    }

    pub fn from_config(cfg: &KvConfig, p: &VehicleParams) -> Result<Self> {
        let mut known: Vec<&str> = vec![
            "steps",
            "seed",
            "start_steps",
            "exploration_noise",
            "eval_window",
            "buffer",
            "episode_timeout_s",
            "tal_weight",
        ];
        known.extend(Td3Hyper::KEYS);
        known.extend(AgentConfig::KEYS);
        cfg.reject_unknown(&known)?;
        let mut c = Self::for_vehicle(p);
        cfg.read_usize("steps", &mut c.steps)?;
        cfg.read_u64("seed", &mut c.seed)?;
        cfg.read_usize("start_steps", &mut c.start_steps)?;
        cfg.read_f64("exploration_noise", &mut c.exploration_noise)?;
        cfg.read_usize("eval_window", &mut c.eval_window)?;
        cfg.read_usize("buffer", &mut c.buffer)?;
        cfg.read_f64("episode_timeout_s", &mut c.episode_timeout_s)?;
        cfg.read_f64("tal_weight", &mut c.tal_weight)?;
        c.hyper.read(cfg)?;
        c.agent.read(cfg)?;
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        self.hyper.validate()?;
        self.agent.validate()?;
        if self.eval_window == 0
            || self.buffer == 0
            || !(self.exploration_noise >= 0.0)
            || !(self.episode_timeout_s > 0.0)
            || !(0.0..=1.0).contains(&self.tal_weight)
        {
            return Err(Error::Config(format!("invalid training settings {self:?}")));
        }
        Ok(())
    }
}

/// Progress of the training episodes that ended inside one window.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CurveRow {
    pub step: usize,
    pub mean_progress: f64,
    pub min_progress: f64,
    pub max_progress: f64,
    pub episodes: usize,
}

pub const CURVE_HEADER: &str = "step,mean_progress,min_progress,max_progress,episodes";

pub fn curve_csv(curve: &[CurveRow]) -> String {
    let mut out = String::from(CURVE_HEADER);
    out.push('\n');
    for r in curve {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            r.step,
            fmt_sig(r.mean_progress, 9),
            fmt_sig(r.min_progress, 9),
            fmt_sig(r.max_progress, 9),
            r.episodes
        ));
    }
    out
}

pub struct TrainOutcome {
    pub agent: Agent,
    pub curve: Vec<CurveRow>,
    pub episodes: usize,
    pub updates: usize,
}

impl TrainOutcome {
    pub fn save(&self, dir: impl AsRef<Path>, stem: &str) -> Result<()> {
        let dir = dir.as_ref();
        self.agent.save(dir.join(format!("{stem}.agent")))?;
        let path = dir.join(format!("{stem}_curve.csv"));
        std::fs::write(&path, curve_csv(&self.curve)).map_err(|e| Error::io(&path, e))
    }
}

/// Trains one agent. `raceline` is needed for the trajectory-aided reward.
pub fn train(
    map: &TrackMap,
    params: &VehicleParams,
    sim_cfg: &SimConfig,
    kind: RewardKind,
    cfg: &TrainConfig,
    raceline: Option<&Raceline>,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    let sim_cfg = SimConfig {
        timeout_s: cfg.episode_timeout_s,
        ..sim_cfg.clone()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let obs_dim = cfg.agent.obs_dim();
    let mut td3 = Td3::new(obs_dim, 2, cfg.hyper, &mut rng)?;
    let mut env = RacingEnv::new(map, *params, &sim_cfg, cfg.agent, kind, cfg.tal_weight, raceline)?;
    let mut buffer = ReplayBuffer::new(cfg.buffer, obs_dim, 2);
    let noise = (cfg.exploration_noise > 0.0).then(|| Normal::new(0.0, cfg.exploration_noise).expect("finite std"));
    let length = map.path.length();

    let mut episode = 0u64;
    let mut obs = Vec::new();
    if cfg.steps > 0 {
        let s0 = rng.random_range(0.0..length);
        obs = env.reset(s0, episode_rng(cfg.seed, episode))?;
    }
    let mut curve = Vec::new();
    let mut window: Vec<f64> = Vec::new();
    let mut current;
    let mut episodes = 0;
    for t in 0..cfg.steps {
        let a: [f64; 2] = if t < cfg.start_steps {
            [rng.random_range(-1.0..=1.0), rng.random_range(-1.0..=1.0)]
        } else {
            let mut a = td3.act(&obs);
            if let Some(n) = &noise {
                for v in &mut a {
                    *v = (*v + n.sample(&mut rng)).clamp(-1.0, 1.0);
                }
            }
            [a[0], a[1]]
        };
        let out = env.step(a)?;
        let done = matches!(out.terminal, Some(Terminal::Crash | Terminal::LapComplete));
        buffer.push(&obs, &a, out.reward, &out.obs, done);
        current = out.progress;
        if t >= cfg.start_steps && buffer.len() >= cfg.hyper.batch {
            td3.update(&buffer, &mut rng)?;
        }
        if out.terminal.is_some() {
            window.push(out.progress);
            episodes += 1;
            episode += 1;
            let s0 = rng.random_range(0.0..length);
            obs = env.reset(s0, episode_rng(cfg.seed, episode))?;
            current = 0.0;
        } else {
            obs = out.obs;
        }
        if (t + 1) % cfg.eval_window == 0 {
            let vals = if window.is_empty() { vec![current] } else { std::mem::take(&mut window) };
            curve.push(CurveRow {
                step: t + 1,
                mean_progress: vals.iter().sum::<f64>() / vals.len() as f64,
                min_progress: vals.iter().copied().fold(f64::INFINITY, f64::min),
                max_progress: vals.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                episodes: vals.len(),
            });
        }
    }
    Ok(TrainOutcome {
        agent: Agent::new(td3.actor.clone(), cfg.agent)?,
        curve,
        episodes,
        updates: td3.updates(),
    })
}

/// Runs the frozen agent from `n` evenly spaced starts.
pub fn evaluate(
    agent: &Agent,
    map: &TrackMap,
    params: &VehicleParams,
    sim_cfg: &SimConfig,
    n: usize,
    seed: u64,
) -> Result<Vec<EpisodeRecord>> {
    let length = map.path.length();
    (0..n)
        .map(|i| {
            let mut a = agent.clone();
            let s0 = (i as f64 + 0.5) * length / n as f64;
            run_episode(&mut a, map, params, sim_cfg, &PoseSource::True, s0, episode_rng(seed, i as u64))
        })
        .collect()
}

/// Mean share of the lap covered.
pub fn mean_progress(records: &[EpisodeRecord]) -> f64 {
    if records.is_empty() {
        return 0.0;
    }
    records.iter().map(|r| r.progress_fraction()).sum::<f64>() / records.len() as f64
}
