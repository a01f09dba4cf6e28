use std::path::PathBuf;

use super::{config_hash, run_benchmark_on, BenchmarkRun, MapSpec, PlannerKind, PoseKind, RunConfig};
use crate::config::KvConfig;
use crate::csvio::fmt_sig;
use crate::error::{Error, Result};

pub const SWEEP_HEADER: &str =
    "planner,map,mu,pose,control_hz,laps,completed,mean_lap_time_s,completion_pct,mean_progress_pct";

/// Planners crossed with friction, pose source and control rate.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepConfig {
    pub planners: Vec<PlannerKind>,
    pub map: MapSpec,
    pub mus: Vec<f64>,
    pub poses: Vec<PoseKind>,
    pub control_hz: Vec<u32>,
    pub n_laps: usize,
    pub seed: u64,
    pub particles: usize,
    pub checkpoint: Option<PathBuf>,
    pub overrides: KvConfig,
}

impl SweepConfig {
    pub fn new(planners: Vec<PlannerKind>, map: MapSpec) -> Self {
        Self {
            planners,
            map,
            mus: vec![0.5, 0.7, 0.9],
            poses: vec![PoseKind::True, PoseKind::Pf],
            control_hz: vec![10, 25],
            n_laps: 10,
            seed: 0,
            particles: 1000,
            checkpoint: None,
            overrides: KvConfig::default(),
        }
    }

    /// One run configuration per cell, planner-major then μ, pose and rate.
    pub fn cells(&self) -> Vec<RunConfig> {
        let mut out = Vec::new();
        for &planner in &self.planners {
            for &mu in &self.mus {
                for &pose in &self.poses {
                    for &hz in &self.control_hz {
                        out.push(RunConfig {
                            planner,
                            map: self.map.clone(),
                            n_laps: self.n_laps,
                            seed: self.seed,
                            mu,
                            control_hz: hz,
                            pose,
                            particles: self.particles,
                            checkpoint: self.checkpoint.clone(),
                            overrides: self.overrides.clone(),
                        });
                    }
                }
            }
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        if self.planners.is_empty() || self.mus.is_empty() || self.poses.is_empty() || self.control_hz.is_empty() {
            return Err(Error::Config("every sweep axis needs at least one value".into()));
        }
        self.cells().iter().try_for_each(RunConfig::validate)
    }

    pub fn hash(&self) -> Result<String> {
        let mut text = String::new();
        for c in self.cells() {
            text.push_str(&c.canonical()?);
            text.push('\n');
        }
        Ok(config_hash(&text))
    }
}

#[derive(Clone, Debug)]
pub struct SweepCell {
    pub planner: PlannerKind,
    pub mu: f64,
    pub pose: PoseKind,
    pub control_hz: u32,
    pub run: BenchmarkRun,
}

impl SweepCell {
    pub fn row(&self) -> String {
        let s = &self.run.summary;
        format!(
            "{},{},{},{},{},{},{},{},{},{}",
            self.planner,
            s.map,
            self.mu,
            self.pose,
            self.control_hz,
            s.laps.len(),
            s.completed(),
            s.mean_lap_time.map(|t| fmt_sig(t, 9)).unwrap_or_default(),
            fmt_sig(s.completion_pct, 9),
            fmt_sig(s.mean_progress_pct, 9)
        )
    }
}

pub fn friction_sweep(cfg: &SweepConfig) -> Result<Vec<SweepCell>> {
    cfg.validate()?;
    let map = cfg.map.load()?;
    cfg.cells()
        .into_iter()
        .map(|c| {
            Ok(SweepCell {
                planner: c.planner,
                mu: c.mu,
                pose: c.pose,
                control_hz: c.control_hz,
                run: run_benchmark_on(&c, &map)?,
            })
        })
        .collect()
}

pub fn sweep_csv(cells: &[SweepCell]) -> String {
    let mut out = String::from(SWEEP_HEADER);
    out.push('\n');
    for c in cells {
        out.push_str(&c.row());
        out.push('\n');
    }
    out
}
