use std::sync::Arc;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::geometry::Pose2;
use crate::track::DistanceField;

/// Shortest range a noisy beam may report (m).
const MIN_RANGE: f64 = 1e-3;

#[derive(Clone, Debug, PartialEq)]
pub struct LidarConfig {
    pub n_beams: usize,
    pub fov: f64,
    pub max_range: f64,
    pub noise_std: f64,
}

impl Default for LidarConfig {
    fn default() -> Self {
        Self {
            n_beams: 1080,
            fov: 4.7,
            max_range: 10.0,
            noise_std: 0.01,
        }
    }
}

/// Relative bearing of beam `i` out of `n` spread across `fov`.
pub fn beam_angle(i: usize, n: usize, fov: f64) -> f64 {
    if n == 1 {
        return 0.0;
    }
    -0.5 * fov + i as f64 * fov / (n - 1) as f64
}

/// Evenly strided beam indices: `k` picks of `n` beams including both ends.
pub fn downsample_indices(n: usize, k: usize) -> Vec<usize> {
    if k <= 1 {
        return vec![n / 2];
    }
    (0..k)
        .map(|j| ((j * (n - 1)) as f64 / (k - 1) as f64).round() as usize)
        .collect()
}

/// One scan; `angles` are relative to the vehicle heading.
#[derive(Clone, Debug, PartialEq)]
pub struct LidarScan {
    pub ranges: Vec<f64>,
    pub angles: Arc<[f64]>,
    pub max_range: f64,
}

impl LidarScan {
    pub fn len(&self) -> usize {
        self.ranges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ranges.is_empty()
    }

    /// Angular spacing between adjacent beams.
    pub fn increment(&self) -> f64 {
        if self.angles.len() < 2 {
            0.0
        } else {
            self.angles[1] - self.angles[0]
        }
    }

    pub fn fov(&self) -> f64 {
        match (self.angles.first(), self.angles.last()) {
            (Some(a), Some(b)) => b - a,
            _ => 0.0,
        }
    }

    /// Beams at `indices`, keeping their bearings.
    pub fn select(&self, indices: &[usize]) -> LidarScan {
        LidarScan {
            ranges: indices.iter().map(|&i| self.ranges[i]).collect(),
            angles: indices.iter().map(|&i| self.angles[i]).collect(),
            max_range: self.max_range,
        }
    }
}

/// A range sensor with fixed beam bearings.
#[derive(Clone, Debug)]
pub struct Lidar {
    angles: Arc<[f64]>,
    max_range: f64,
    noise: Option<Normal<f64>>,
}

impl Lidar {
    pub fn new(cfg: &LidarConfig) -> Result<Self> {
        Self::with_angles(
            cfg,
            (0..cfg.n_beams).map(|i| beam_angle(i, cfg.n_beams, cfg.fov)).collect(),
        )
    }

    /// Sensor that only casts the listed beams of the full configuration.
    pub fn subset(cfg: &LidarConfig, indices: &[usize]) -> Result<Self> {
        Self::with_angles(
            cfg,
            indices.iter().map(|&i| beam_angle(i, cfg.n_beams, cfg.fov)).collect(),
        )
    }

    fn with_angles(cfg: &LidarConfig, angles: Vec<f64>) -> Result<Self> {
        if cfg.n_beams == 0 || !(cfg.fov > 0.0) || !(cfg.max_range > 0.0) || !(cfg.noise_std >= 0.0) {
            return Err(Error::Config(format!("invalid lidar configuration {cfg:?}")));
        }
        let noise = (cfg.noise_std > 0.0).then(|| Normal::new(0.0, cfg.noise_std).expect("finite std"));
        Ok(Self {
            angles: angles.into(),
            max_range: cfg.max_range,
            noise,
        })
    }

    pub fn angles(&self) -> &Arc<[f64]> {
        &self.angles
    }

    pub fn max_range(&self) -> f64 {
        self.max_range
    }

    /// Noiseless ranges from `pose`.
    pub fn expected(&self, pose: &Pose2, field: &DistanceField, out: &mut Vec<f64>) {
        out.clear();
        out.extend(
            self.angles
                .iter()
                .map(|a| field.ray_march(pose.x, pose.y, pose.theta + a, self.max_range)),
        );
    }

    pub fn cast<R: Rng + ?Sized>(&self, pose: &Pose2, field: &DistanceField, rng: &mut R) -> Result<LidarScan> {
        if field.at(pose.x, pose.y) <= 0.0 {
            return Err(Error::PoseInCollision { x: pose.x, y: pose.y });
        }
        let mut ranges = Vec::with_capacity(self.angles.len());
        self.expected(pose, field, &mut ranges);
        if let Some(noise) = &self.noise {
            for r in &mut ranges {
                *r = (*r + noise.sample(rng)).clamp(MIN_RANGE, self.max_range);
            }
        }
        Ok(LidarScan {
            ranges,
            angles: self.angles.clone(),
            max_range: self.max_range,
        })
    }
}

/// Convenience wrapper building a sensor for a single scan.
pub fn cast_scan<R: Rng + ?Sized>(
    pose: &Pose2,
    field: &DistanceField,
    cfg: &LidarConfig,
    rng: &mut R,
) -> Result<LidarScan> {
    Lidar::new(cfg)?.cast(pose, field, rng)
}
