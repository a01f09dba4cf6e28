//! The racing task as seen by the learning agent, and the trained agent as a
//! planner.

use std::fmt::Write as _;
use std::path::Path;

use rand_chacha::ChaCha8Rng;

use super::mlp::Mlp;
use super::reward::{reward, RewardContext, RewardKind};
use crate::config::KvConfig;
use crate::dynamics::VehicleParams;
use crate::error::{Error, Result};
use crate::geometry::wrap_angle;
use crate::pursuit::{PurePursuit, PursuitParams};
use crate::raceline::Raceline;
use crate::sim::lidar::downsample_indices;
use crate::sim::{Action, Lidar, LidarScan, Observation, Planner, PoseSource, SimConfig, Simulator, Terminal};
use crate::track::TrackMap;

/// Observation layout and action decoding shared by training and racing.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AgentConfig {
    /// Downsampled beams per scan.
    pub n_ds: usize,
    pub v_min: f64,
    pub v_max: f64,
    pub delta_max: f64,
}

impl AgentConfig {
    pub fn for_vehicle(p: &VehicleParams) -> Self {
        Self {
            n_ds: 20,
            v_min: 1.0,
            v_max: 5.0,
            delta_max: p.delta_max,
        }
    }

    pub fn read(&mut self, cfg: &KvConfig) -> Result<()> {
        cfg.read_usize("n_ds", &mut self.n_ds)?;
        cfg.read_f64("v_min", &mut self.v_min)?;
        cfg.read_f64("v_max", &mut self.v_max)?;
        self.validate()
    }

    pub const KEYS: [&'static str; 3] = ["n_ds", "v_min", "v_max"];

    pub fn validate(&self) -> Result<()> {
        if self.n_ds == 0 || !(self.v_min >= 0.0 && self.v_max > self.v_min) || !(self.delta_max > 0.0) {
            return Err(Error::Config(format!("invalid agent settings {self:?}")));
        }
        Ok(())
    }

    pub fn obs_dim(&self) -> usize {
        2 * self.n_ds + 1
    }

    pub fn decode(&self, a: [f64; 2]) -> Action {
        let a0 = a[0].clamp(-1.0, 1.0);
        let a1 = a[1].clamp(-1.0, 1.0);
        Action::new(
            (a1 + 1.0) / 2.0 * (self.v_max - self.v_min) + self.v_min,
            a0 * self.delta_max,
        )
    }

    /// Normalised action closest to `(speed, steering)`.
    pub fn encode(&self, speed: f64, steering: f64) -> [f64; 2] {
        [
            (steering / self.delta_max).clamp(-1.0, 1.0),
            (2.0 * (speed - self.v_min) / (self.v_max - self.v_min) - 1.0).clamp(-1.0, 1.0),
        ]
    }

    /// Downsampled ranges of `scan` scaled into [0, 1].
    pub fn scan_features(&self, scan: &LidarScan) -> Vec<f64> {
        let norm = |r: f64| (r / scan.max_range).clamp(0.0, 1.0);
        if scan.len() == self.n_ds {
            scan.ranges.iter().map(|&r| norm(r)).collect()
        } else {
            downsample_indices(scan.len(), self.n_ds)
                .into_iter()
                .map(|i| norm(scan.ranges[i]))
                .collect()
        }
    }

    pub fn observation(&self, prev: &[f64], cur: &[f64], speed: f64) -> Vec<f64> {
        let mut obs = Vec::with_capacity(self.obs_dim());
        obs.extend_from_slice(prev);
        obs.extend_from_slice(cur);
        obs.push((speed / self.v_max).clamp(0.0, 1.0));
        obs
    }
}

/// Maps a normalised action from [-1, 1]² into [0, 1]².
pub fn unit(a: [f64; 2]) -> [f64; 2] {
    [0.5 * (a[0].clamp(-1.0, 1.0) + 1.0), 0.5 * (a[1].clamp(-1.0, 1.0) + 1.0)]
}

/// What one environment step returns.
#[derive(Clone, Debug, PartialEq)]
pub struct EnvStep {
    pub obs: Vec<f64>,
    pub reward: f64,
    pub terminal: Option<Terminal>,
    /// Share of the lap covered so far.
    pub progress: f64,
    pub beta: f64,
}

pub struct RacingEnv<'m> {
    map: &'m TrackMap,
    params: VehicleParams,
    sim_cfg: SimConfig,
    agent: AgentConfig,
    kind: RewardKind,
    tal_weight: f64,
    lidar: Lidar,
    classic: Option<PurePursuit>,
    sim: Option<Simulator<'m>>,
    prev_scan: Vec<f64>,
    obs: Vec<f64>,
}

impl<'m> RacingEnv<'m> {
    /// `raceline` feeds the classical planner the trajectory-aided reward
    /// compares against; it is required for that reward only.
    pub fn new(
        map: &'m TrackMap,
        params: VehicleParams,
        sim_cfg: &SimConfig,
        agent: AgentConfig,
        kind: RewardKind,
        tal_weight: f64,
        raceline: Option<&Raceline>,
    ) -> Result<Self> {
        agent.validate()?;
        sim_cfg.validate()?;
        let classic = match (kind, raceline) {
            (RewardKind::Tal, None) => {
                return Err(Error::Config("the tal reward needs a raceline".into()));
            }
            (_, rl) => rl.map(|rl| PurePursuit::new(rl.clone(), params, PursuitParams::default())),
        };
        let indices = downsample_indices(sim_cfg.lidar.n_beams, agent.n_ds);
        Ok(Self {
            map,
            params,
            sim_cfg: sim_cfg.clone(),
            agent,
            kind,
            tal_weight,
            lidar: Lidar::subset(&sim_cfg.lidar, &indices)?,
            classic,
            sim: None,
            prev_scan: Vec::new(),
            obs: Vec::new(),
        })
    }

    pub fn agent_config(&self) -> &AgentConfig {
        &self.agent
    }

    pub fn observation(&self) -> &[f64] {
        &self.obs
    }

    pub fn reset(&mut self, start_s: f64, rng: ChaCha8Rng) -> Result<Vec<f64>> {
        let sim = Simulator::new(
            self.map,
            self.params,
            &self.sim_cfg,
            self.lidar.clone(),
            &PoseSource::True,
            start_s,
            rng,
        )?;
        self.sim = Some(sim);
        if let Some(pp) = &mut self.classic {
            pp.reset();
        }
        let sim = self.sim.as_mut().expect("just set");
        let obs = sim.sense()?;
        let cur = self.agent.scan_features(obs.scan);
        let speed = obs.speed;
        self.obs = self.agent.observation(&cur, &cur, speed);
        self.prev_scan = cur;
        Ok(self.obs.clone())
    }

    /// Applies a normalised action for one control period.
    pub fn step(&mut self, a: [f64; 2]) -> Result<EnvStep> {
        let sim = self
            .sim
            .as_mut()
            .ok_or_else(|| Error::Config("environment stepped before reset".into()))?;
        let pose = sim.true_pose();
        let speed = sim.state().v;
        let u_classic = match &mut self.classic {
            Some(pp) => {
                let c = pp.act(&pose, speed);
                self.agent.encode(c.speed, c.steering)
            }
            None => [0.0; 2],
        };
        let s_prev = sim.progress();
        let terminal = sim.advance(self.agent.decode(a))?;
        let path = &self.map.path;
        let state = *sim.state();
        let length = path.length();
        let proj = path.project_near(state.x, state.y, sim.tracker().segment(), 10);
        let (wl, wr) = path.widths(proj.s);
        let half = if proj.lateral >= 0.0 { wl } else { wr };
        let ctx = RewardContext {
            v_t: (state.v / self.agent.v_max).clamp(0.0, 1.0),
            psi_err: wrap_angle(state.theta - path.heading(proj.s)),
            d_c: (proj.distance / half).clamp(0.0, 1.0),
            s_t: sim.progress() / length,
            s_prev: s_prev / length,
            u_agent: unit(a),
            u_classic: unit(u_classic),
        };
        let r = reward(self.kind, &ctx, terminal, self.tal_weight);
        let progress = (sim.progress() / length).clamp(0.0, 1.0);
        let obs = sim.sense()?;
        let cur = self.agent.scan_features(obs.scan);
        self.obs = self.agent.observation(&self.prev_scan, &cur, obs.speed);
        self.prev_scan = cur;
        Ok(EnvStep {
            obs: self.obs.clone(),
            reward: r,
            terminal,
            progress,
            beta: state.beta,
        })
    }
}

/// A trained policy driving from the scan and speed alone.
#[derive(Clone, Debug, PartialEq)]
pub struct Agent {
    pub actor: Mlp,
    pub cfg: AgentConfig,
    prev: Option<Vec<f64>>,
}

const CHECKPOINT_MAGIC: &str = "racekit-agent 1";

impl Agent {
    pub fn new(actor: Mlp, cfg: AgentConfig) -> Result<Self> {
        if actor.input_dim() != cfg.obs_dim() || actor.output_dim() != 2 {
            return Err(Error::Config(format!(
                "actor shape {:?} does not fit a {}-dim observation",
                actor.sizes(),
                cfg.obs_dim()
            )));
        }
        Ok(Self { actor, cfg, prev: None })
    }

    pub fn policy(&self, obs: &[f64]) -> [f64; 2] {
        let out = self.actor.forward(obs, 1);
        [out[0], out[1]]
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{CHECKPOINT_MAGIC}");
        let _ = writeln!(out, "n_ds {}", self.cfg.n_ds);
        let _ = writeln!(out, "v_min {:016x}", self.cfg.v_min.to_bits());
        let _ = writeln!(out, "v_max {:016x}", self.cfg.v_max.to_bits());
        let _ = writeln!(out, "delta_max {:016x}", self.cfg.delta_max.to_bits());
        out.push_str(&self.actor.to_text());
        out
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn parse(text: &str, context: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
        match lines.next() {
            Some((_, l)) if l == CHECKPOINT_MAGIC => {}
            _ => return Err(Error::schema(context, 1, "not an agent checkpoint")),
        }
        let mut value = |key: &str| -> Result<(usize, String)> {
            let (n, line) = lines
                .next()
                .ok_or_else(|| Error::schema(context, 0, format!("missing `{key}`")))?;
            line.strip_prefix(key)
                .and_then(|r| r.strip_prefix(' '))
                .map(|v| (n, v.to_string()))
                .ok_or_else(|| Error::schema(context, n, format!("expected `{key}`")))
        };
        let (n, v) = value("n_ds")?;
        let n_ds = v.parse().map_err(|_| Error::schema(context, n, "bad n_ds"))?;
        let mut float = |key: &str| -> Result<f64> {
            let (n, v) = value(key)?;
            u64::from_str_radix(&v, 16)
                .map(f64::from_bits)
                .map_err(|_| Error::schema(context, n, format!("bad `{key}`")))
        };
        let cfg = AgentConfig {
            n_ds,
            v_min: float("v_min")?,
            v_max: float("v_max")?,
            delta_max: float("delta_max")?,
        };
        cfg.validate()?;
        let actor = Mlp::from_lines(&mut lines, context)?;
        Self::new(actor, cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, &path.display().to_string())
    }
}

impl Planner for Agent {
    fn reset(&mut self) {
        self.prev = None;
    }

    fn plan(&mut self, obs: &Observation<'_>) -> Result<Action> {
        let cur = self.cfg.scan_features(obs.scan);
        let prev = self.prev.replace(cur.clone()).unwrap_or_else(|| cur.clone());
        let x = self.cfg.observation(&prev, &cur, obs.speed);
        Ok(self.cfg.decode(self.policy(&x)))
    }
}
