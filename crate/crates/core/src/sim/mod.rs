//! Episode engine: fixed-rate physics, lower-rate planning with zero-order
//! hold, LiDAR, collision and lap bookkeeping.

pub mod lidar;
mod record;

use std::time::{Duration, Instant};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::KvConfig;
use crate::dynamics::{self, DynamicState, VehicleParams};
use crate::error::{Error, Result};
use crate::geometry::Pose2;
use crate::localization::{ParticleFilter, PfConfig};
use crate::track::{PathParameterization, TrackMap};

pub use lidar::{cast_scan, Lidar, LidarConfig, LidarScan};
pub use record::{EpisodeRecord, StepRecord, Terminal, RECORD_HEADER};

#[derive(Clone, Debug, PartialEq)]
pub struct SimConfig {
    pub physics_hz: u32,
    pub control_hz: u32,
    pub lidar: LidarConfig,
    pub seed: u64,
    pub timeout_s: f64,
    pub record_scans: bool,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            physics_hz: 100,
            control_hz: 25,
            lidar: LidarConfig::default(),
            seed: 0,
            timeout_s: 60.0,
            record_scans: false,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.physics_hz == 0 || self.control_hz == 0 || self.physics_hz % self.control_hz != 0 {
            return Err(Error::Config(format!(
                "physics_hz {} must be a positive multiple of control_hz {}",
                self.physics_hz, self.control_hz
            )));
        }
        if !(self.timeout_s > 0.0) {
            return Err(Error::Config("timeout must be positive".into()));
        }
        Ok(())
    }

    pub fn physics_dt(&self) -> f64 {
        1.0 / self.physics_hz as f64
    }

    pub fn control_dt(&self) -> f64 {
        1.0 / self.control_hz as f64
    }

    /// Physics steps per planner query.
    pub fn hold_steps(&self) -> usize {
        (self.physics_hz / self.control_hz) as usize
    }

    pub fn from_config(cfg: &KvConfig) -> Result<Self> {
        cfg.reject_unknown(&[
            "physics_hz",
            "control_hz",
            "n_beams",
            "fov",
            "max_range",
            "lidar_noise_std",
            "seed",
            "timeout_s",
        ])?;
        let mut c = Self::default();
        let mut physics = c.physics_hz as u64;
        let mut control = c.control_hz as u64;
        cfg.read_u64("physics_hz", &mut physics)?;
        cfg.read_u64("control_hz", &mut control)?;
        c.physics_hz = physics as u32;
        c.control_hz = control as u32;
        cfg.read_usize("n_beams", &mut c.lidar.n_beams)?;
        cfg.read_f64("fov", &mut c.lidar.fov)?;
        cfg.read_f64("max_range", &mut c.lidar.max_range)?;
        cfg.read_f64("lidar_noise_std", &mut c.lidar.noise_std)?;
        cfg.read_u64("seed", &mut c.seed)?;
        cfg.read_f64("timeout_s", &mut c.timeout_s)?;
        c.validate()?;
        Ok(c)
    }
}

/// Where planners get their pose from.
#[derive(Clone, Debug, PartialEq)]
pub enum PoseSource {
    True,
    Filter(PfConfig),
}

impl PoseSource {
    pub fn name(&self) -> &'static str {
        match self {
            PoseSource::True => "true",
            PoseSource::Filter(_) => "pf",
        }
    }
}

/// Speed and steering targets held until the next planner query.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Action {
    pub speed: f64,
    pub steering: f64,
    /// Set when the planner fell back to an emergency action.
    pub flagged: bool,
}

impl Action {
    pub fn new(speed: f64, steering: f64) -> Self {
        Self {
            speed,
            steering,
            flagged: false,
        }
    }
}

/// What a planner sees at a control step.
#[derive(Clone, Copy, Debug)]
pub struct Observation<'a> {
    pub pose: Pose2,
    pub speed: f64,
    pub steering: f64,
    pub scan: &'a LidarScan,
    pub time: f64,
}

pub trait Planner {
    /// Clears per-episode state such as warm starts.
    fn reset(&mut self) {}

    fn plan(&mut self, obs: &Observation<'_>) -> Result<Action>;
}

/// Arc-length progress of the closest centerline point.
pub fn progress_of(pose: &Pose2, path: &PathParameterization) -> f64 {
    path.project(pose.x, pose.y).s
}

const PROJECTION_WINDOW: usize = 40;

/// Progress unwrapped across the start line within one episode.
#[derive(Clone, Debug)]
pub struct ProgressTracker {
    last_s: f64,
    unwrapped: f64,
    segment: usize,
}

impl ProgressTracker {
    pub fn new(path: &PathParameterization, x: f64, y: f64) -> Self {
        let p = path.project(x, y);
        Self {
            last_s: p.s,
            unwrapped: 0.0,
            segment: p.segment,
        }
    }

    /// Updates with a new position; returns progress since the start (m).
    pub fn update(&mut self, path: &PathParameterization, x: f64, y: f64) -> f64 {
        let p = path.project_near(x, y, self.segment, PROJECTION_WINDOW);
        self.unwrapped += path.delta_s(self.last_s, p.s);
        self.last_s = p.s;
        self.segment = p.segment;
        self.unwrapped
    }

    pub fn progress(&self) -> f64 {
        self.unwrapped
    }

    /// Wrapped arc length of the latest projection.
    pub fn s(&self) -> f64 {
        self.last_s
    }

    pub fn segment(&self) -> usize {
        self.segment
    }
}

/// Mutable state of one episode, shared by `run_episode` and the RL environment.
pub struct Simulator<'m> {
    map: &'m TrackMap,
    params: VehicleParams,
    cfg: SimConfig,
    lidar: Lidar,
    state: DynamicState,
    time: f64,
    tracker: ProgressTracker,
    filter: Option<ParticleFilter>,
    rng: ChaCha8Rng,
    scan: LidarScan,
    estimate: Pose2,
    odom: (f64, f64, usize),
    terminal: Option<Terminal>,
    lap_time: Option<f64>,
    filter_time: Duration,
    filter_updates: usize,
}

impl<'m> Simulator<'m> {
    pub fn new(
        map: &'m TrackMap,
        params: VehicleParams,
        cfg: &SimConfig,
        lidar: Lidar,
        pose_source: &PoseSource,
        start_s: f64,
        mut rng: ChaCha8Rng,
    ) -> Result<Self> {
        cfg.validate()?;
        params.validate()?;
        let pt = map.path.point(start_s);
        let state = DynamicState::at_rest(pt.x, pt.y, pt.phi);
        let start = Pose2::new(pt.x, pt.y, pt.phi);
        if map.field.at(pt.x, pt.y) < params.half_width() {
            return Err(Error::PoseInCollision { x: pt.x, y: pt.y });
        }
        let filter = match pose_source {
            PoseSource::True => None,
            PoseSource::Filter(pf) => Some(ParticleFilter::new(
                pf.clone(),
                start,
                lidar.angles().len(),
                params.wheelbase(),
                &mut rng,
            )?),
        };
        let tracker = ProgressTracker::new(&map.path, pt.x, pt.y);
        let scan = LidarScan {
            ranges: Vec::new(),
            angles: lidar.angles().clone(),
            max_range: lidar.max_range(),
        };
        Ok(Self {
            map,
            params,
            cfg: cfg.clone(),
            lidar,
            state,
            time: 0.0,
            tracker,
            filter,
            rng,
            scan,
            estimate: start,
            odom: (0.0, 0.0, 0),
            terminal: None,
            lap_time: None,
            filter_time: Duration::ZERO,
            filter_updates: 0,
        })
    }

    pub fn map(&self) -> &'m TrackMap {
        self.map
    }

    pub fn params(&self) -> &VehicleParams {
        &self.params
    }

    pub fn config(&self) -> &SimConfig {
        &self.cfg
    }

    pub fn state(&self) -> &DynamicState {
        &self.state
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn true_pose(&self) -> Pose2 {
        Pose2::new(self.state.x, self.state.y, self.state.theta)
    }

    pub fn estimate(&self) -> Option<Pose2> {
        self.filter.as_ref().map(|_| self.estimate)
    }

    pub fn filter(&self) -> Option<&ParticleFilter> {
        self.filter.as_ref()
    }

    pub fn tracker(&self) -> &ProgressTracker {
        &self.tracker
    }

    pub fn progress(&self) -> f64 {
        self.tracker.progress()
    }

    pub fn terminal(&self) -> Option<Terminal> {
        self.terminal
    }

    pub fn lap_time(&self) -> Option<f64> {
        self.lap_time
    }

    /// Wall-clock time spent in filter updates and their count.
    pub fn filter_time(&self) -> (Duration, usize) {
        (self.filter_time, self.filter_updates)
    }

    pub fn scan(&self) -> &LidarScan {
        &self.scan
    }

    pub fn rng(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }

    /// Casts a fresh scan and, with a filter, runs one localisation cycle on
    /// the odometry accumulated since the previous call.
    pub fn sense(&mut self) -> Result<Observation<'_>> {
        self.scan = self.lidar.cast(&self.true_pose(), &self.map.field, &mut self.rng)?;
        if let Some(pf) = &mut self.filter {
            let (sv, sd, n) = self.odom;
            let (v, d) = if n == 0 {
                (self.state.v, self.state.delta)
            } else {
                (sv / n as f64, sd / n as f64)
            };
            let dt = n as f64 * self.cfg.physics_dt();
            let t0 = Instant::now();
            self.estimate = pf.step(v, d, dt, &self.scan, &self.map.field, &mut self.rng)?;
            self.filter_time += t0.elapsed();
            self.filter_updates += 1;
        }
        self.odom = (0.0, 0.0, 0);
        Ok(Observation {
            pose: if self.filter.is_some() { self.estimate } else { self.true_pose() },
            speed: self.state.v,
            steering: self.state.delta,
            scan: &self.scan,
            time: self.time,
        })
    }

    /// Holds `action` for one control period, stopping early on a terminal event.
    pub fn advance(&mut self, action: Action) -> Result<Option<Terminal>> {
        if self.terminal.is_some() {
            return Ok(self.terminal);
        }
        let dt = self.cfg.physics_dt();
        for _ in 0..self.cfg.hold_steps() {
            let u = dynamics::speed_steer_to_derivative_controls(action.speed, action.steering, &self.state, &self.params);
            self.state = dynamics::step(&self.state, u, &self.params, dt)?;
            self.time += dt;
            self.odom.0 += self.state.v;
            self.odom.1 += self.state.delta;
            self.odom.2 += 1;
            let progress = self.tracker.update(&self.map.path, self.state.x, self.state.y);
            if self.map.field.at(self.state.x, self.state.y) < self.params.half_width() {
                self.terminal = Some(Terminal::Crash);
            } else if progress >= self.map.path.length() {
                self.terminal = Some(Terminal::LapComplete);
                self.lap_time = Some(self.time);
            } else if self.time >= self.cfg.timeout_s - 1e-9 {
                self.terminal = Some(Terminal::Timeout);
            }
            if self.terminal.is_some() {
                break;
            }
        }
        Ok(self.terminal)
    }
}

/// Episode random generator derived from the run seed and run index.
pub fn episode_rng(seed: u64, run: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(run + 1);
    rng
}

/// Runs one episode from `start_s` until a lap, a crash or the timeout.
pub fn run_episode(
    planner: &mut dyn Planner,
    map: &TrackMap,
    params: &VehicleParams,
    cfg: &SimConfig,
    pose_source: &PoseSource,
    start_s: f64,
    rng: ChaCha8Rng,
) -> Result<EpisodeRecord> {
    let lidar = Lidar::new(&cfg.lidar)?;
    let mut sim = Simulator::new(map, *params, cfg, lidar, pose_source, start_s, rng)?;
    planner.reset();
    let mut steps = Vec::new();
    let mut index = 0;
    loop {
        let obs = sim.sense()?;
        let action = planner.plan(&obs).map_err(|e| Error::Planner {
            step: index,
            message: e.to_string(),
        })?;
        let scan = cfg.record_scans.then(|| obs.scan.ranges.clone());
        let state = *sim.state();
        steps.push(StepRecord {
            t: sim.time(),
            pose: sim.true_pose(),
            estimate: sim.estimate(),
            action,
            v: state.v,
            delta: state.delta,
            beta: state.beta,
            progress: sim.progress(),
            reward: 0.0,
            scan,
        });
        index += 1;
        if let Some(terminal) = sim.advance(action)? {
            return Ok(EpisodeRecord {
                start_s,
                track_length: map.path.length(),
                control_hz: cfg.control_hz,
                steps,
                terminal,
                lap_time: sim.lap_time(),
                end_time: sim.time(),
                end_pose: sim.true_pose(),
                progress: sim.progress(),
            });
        }
    }
}
