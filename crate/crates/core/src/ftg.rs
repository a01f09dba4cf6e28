//! Follow-the-gap with disparity extension.
//!
//! The scan is first padded at every range disparity so that the car's width
//! fits past obstacle edges, then the nearest return is blanked out with a
//! bubble and the car steers at the middle of the longest free run.

use crate::config::KvConfig;
use crate::dynamics::VehicleParams;
use crate::error::{Error, Result};
use crate::sim::{Action, LidarScan, Observation, Planner};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FtgConfig {
    /// Arc radius blanked around the nearest return (m).
    pub bubble_radius: f64,
    pub disparity_threshold: f64,
    /// Width padded past every disparity (m).
    pub safety_width: f64,
    /// Beams must reach further than this to belong to a gap (m).
    pub gap_distance: f64,
    pub fast_speed: f64,
    pub slow_speed: f64,
    pub steer_threshold: f64,
}

impl FtgConfig {
    pub fn for_vehicle(p: &VehicleParams) -> Self {
        Self {
            bubble_radius: 0.3,
            disparity_threshold: 0.3,
            safety_width: p.width + 0.1,
            gap_distance: 2.0,
            fast_speed: 5.0,
            slow_speed: 3.0,
            steer_threshold: 0.15,
        }
    }

    pub fn from_config(cfg: &KvConfig, p: &VehicleParams) -> Result<Self> {
        cfg.reject_unknown(&[
            "bubble_radius",
            "disparity_threshold",
            "safety_width",
            "gap_distance",
            "fast_speed",
            "slow_speed",
            "steer_threshold",
        ])?;
        let mut c = Self::for_vehicle(p);
        cfg.read_f64("bubble_radius", &mut c.bubble_radius)?;
        cfg.read_f64("disparity_threshold", &mut c.disparity_threshold)?;
        cfg.read_f64("safety_width", &mut c.safety_width)?;
        cfg.read_f64("gap_distance", &mut c.gap_distance)?;
        cfg.read_f64("fast_speed", &mut c.fast_speed)?;
        cfg.read_f64("slow_speed", &mut c.slow_speed)?;
        cfg.read_f64("steer_threshold", &mut c.steer_threshold)?;
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            self.bubble_radius,
            self.disparity_threshold,
            self.safety_width,
            self.gap_distance,
            self.steer_threshold,
        ];
        if positive.iter().any(|v| !(*v > 0.0)) || !(self.slow_speed > 0.0 && self.fast_speed > self.slow_speed) {
            return Err(Error::Config(format!("invalid follow-the-gap settings {self:?}")));
        }
        Ok(())
    }
}

/// Ranges after disparity extension, with the beams that were overwritten.
#[derive(Clone, Debug, PartialEq)]
pub struct ExtendedRanges {
    pub ranges: Vec<f64>,
    pub extended: Vec<bool>,
}

impl ExtendedRanges {
    pub fn raw(ranges: &[f64]) -> Self {
        Self {
            ranges: ranges.to_vec(),
            extended: vec![false; ranges.len()],
        }
    }
}

/// Beams past a disparity at `near` range that the safety width covers.
pub fn extension_beams(near: f64, safety_width: f64, increment: f64) -> usize {
    if near <= 0.0 {
        return 0;
    }
    (safety_width / (near * increment)).ceil() as usize
}

/// Pads every disparity between two untouched neighbours. Pairs involving a
/// beam that was already overwritten are edges of an earlier extension and
/// are left alone, so the operation is idempotent on its own output.
pub fn extend_disparities(input: &ExtendedRanges, increment: f64, cfg: &FtgConfig) -> ExtendedRanges {
    let r = &input.ranges;
    let n = r.len();
    let mut out = input.clone();
    if n < 2 || !(increment > 0.0) {
        return out;
    }
    for i in 0..n - 1 {
        if input.extended[i] || input.extended[i + 1] {
            continue;
        }
        let (a, b) = (r[i], r[i + 1]);
        if (a - b).abs() <= cfg.disparity_threshold {
            continue;
        }
        let near = a.min(b);
        let count = extension_beams(near, cfg.safety_width, increment);
        let targets: Box<dyn Iterator<Item = usize>> = if a < b {
            Box::new(i + 1..(i + 1 + count).min(n))
        } else {
            Box::new(i.saturating_sub(count - 1)..=i)
        };
        for j in targets {
            if out.ranges[j] > near {
                out.ranges[j] = near;
                out.extended[j] = true;
            }
        }
    }
    out
}

/// The selected free run, as inclusive beam indices.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Gap {
    pub start: usize,
    pub end: usize,
    pub mean_range: f64,
}

impl Gap {
    pub fn beams(&self) -> usize {
        self.end - self.start + 1
    }
}

/// Zeros every beam within `radius` of arc around each nearest return.
pub fn apply_bubble(ranges: &mut [f64], increment: f64, radius: f64) {
    let min = ranges
        .iter()
        .copied()
        .filter(|r| *r > 0.0)
        .fold(f64::INFINITY, f64::min);
    if !min.is_finite() {
        return;
    }
    let half = if increment > 0.0 {
        (radius / (min * increment)).floor() as usize
    } else {
        0
    };
    let centres: Vec<usize> = (0..ranges.len()).filter(|&i| ranges[i] == min).collect();
    for c in centres {
        let lo = c.saturating_sub(half);
        let hi = (c + half).min(ranges.len() - 1);
        for r in &mut ranges[lo..=hi] {
            *r = 0.0;
        }
    }
}

/// Longest run of beams beyond `distance`; ties go to the larger mean range,
/// then to the run whose middle is closer to straight ahead.
pub fn find_gap(ranges: &[f64], angles: &[f64], distance: f64) -> Option<Gap> {
    let mut best: Option<Gap> = None;
    let mut i = 0;
    while i < ranges.len() {
        if ranges[i] <= distance {
            i += 1;
            continue;
        }
        let start = i;
        while i < ranges.len() && ranges[i] > distance {
            i += 1;
        }
        let end = i - 1;
        let mean_range = ranges[start..=end].iter().sum::<f64>() / (end - start + 1) as f64;
        let cand = Gap { start, end, mean_range };
        let mid = |g: &Gap| (0.5 * (angles[g.start] + angles[g.end])).abs();
        let better = match &best {
            None => true,
            Some(b) => {
                (cand.beams(), cand.mean_range) > (b.beams(), b.mean_range)
                    || (cand.beams() == b.beams() && cand.mean_range == b.mean_range && mid(&cand) < mid(b))
            }
        };
        if better {
            best = Some(cand);
        }
    }
    best
}

/// Diagnostics for one follow-the-gap decision.
#[derive(Clone, Debug, PartialEq)]
pub struct FtgDecision {
    pub action: Action,
    pub gap: Option<Gap>,
    /// Ranges after extension and the bubble.
    pub processed: Vec<f64>,
}

pub fn ftg_decide(scan: &LidarScan, cfg: &FtgConfig, delta_max: f64) -> FtgDecision {
    let inc = scan.increment();
    let mut processed = extend_disparities(&ExtendedRanges::raw(&scan.ranges), inc, cfg).ranges;
    apply_bubble(&mut processed, inc, cfg.bubble_radius);
    let gap = find_gap(&processed, &scan.angles, cfg.gap_distance);
    let action = match gap {
        Some(g) => {
            let bearing = 0.5 * (scan.angles[g.start] + scan.angles[g.end]);
            let delta = bearing.clamp(-delta_max, delta_max);
            let speed = if delta.abs() < cfg.steer_threshold {
                cfg.fast_speed
            } else {
                cfg.slow_speed
            };
            Action::new(speed, delta)
        }
        None => Action {
            speed: 0.0,
            steering: 0.0,
            flagged: true,
        },
    };
    FtgDecision { action, gap, processed }
}

/// Speed and steering targets for one scan.
pub fn ftg_action(scan: &LidarScan, cfg: &FtgConfig, delta_max: f64) -> Action {
    ftg_decide(scan, cfg, delta_max).action
}

pub struct FollowTheGap {
    cfg: FtgConfig,
    delta_max: f64,
}

impl FollowTheGap {
    pub fn new(cfg: FtgConfig, params: &VehicleParams) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            cfg,
            delta_max: params.delta_max,
        })
    }
}

impl Planner for FollowTheGap {
    fn plan(&mut self, obs: &Observation<'_>) -> Result<Action> {
        Ok(ftg_action(obs.scan, &self.cfg, self.delta_max))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> FtgConfig {
        FtgConfig::for_vehicle(&VehicleParams::default())
    }

    #[test]
    fn step_extends_far_side() {
        let inc = 0.01;
        let mut r = vec![1.0; 50];
        r.extend(vec![5.0; 100]);
        let c = cfg();
        let out = extend_disparities(&ExtendedRanges::raw(&r), inc, &c);
        let n = (c.safety_width / (1.0 * inc)).ceil() as usize;
        assert_eq!(n, 41);
        for (j, v) in out.ranges.iter().enumerate() {
            let expect = if j <= 49 + n { 1.0 } else { 5.0 };
            assert_eq!(*v, expect, "beam {j}");
        }
    }

    #[test]
    fn uniform_scan_unchanged() {
        let r = vec![3.0; 30];
        let out = extend_disparities(&ExtendedRanges::raw(&r), 0.01, &cfg());
        assert_eq!(out.ranges, r);
        assert!(out.extended.iter().all(|e| !e));
    }
}
