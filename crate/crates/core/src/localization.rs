//! Monte-Carlo localisation against a known occupancy map.
//!
//! Each control step the particles are pushed through a kinematic bicycle
//! driven by odometry, weighted by a Gaussian beam model on a handful of
//! subsampled LiDAR beams, and resampled systematically.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::config::KvConfig;
use crate::error::{Error, Result};
use crate::geometry::{wrap_angle, Pose2};
use crate::sim::lidar::{downsample_indices, LidarScan};
use crate::track::DistanceField;

#[derive(Clone, Debug, PartialEq)]
pub struct PfConfig {
    pub n_particles: usize,
    pub motion_std_v: f64,
    pub motion_std_delta: f64,
    pub motion_std_theta: f64,
    /// Position noise per metre travelled, covering slip the kinematic model ignores.
    pub motion_std_xy_per_m: f64,
    pub n_likelihood_beams: usize,
    pub beam_std: f64,
    pub init_std_xy: f64,
    pub init_std_theta: f64,
}

impl Default for PfConfig {
    fn default() -> Self {
        Self {
            n_particles: 1000,
            motion_std_v: 0.1,
            motion_std_delta: 0.05,
            motion_std_theta: 0.01,
            motion_std_xy_per_m: 0.1,
            n_likelihood_beams: 20,
            beam_std: 0.25,
            init_std_xy: 0.2,
            init_std_theta: 0.1,
        }
    }
}

impl PfConfig {
    pub fn with_particles(n: usize) -> Self {
        Self {
            n_particles: n,
            ..Self::default()
        }
    }

    pub fn from_config(cfg: &KvConfig) -> Result<Self> {
        cfg.reject_unknown(&[
            "n_particles",
            "motion_std_v",
            "motion_std_delta",
            "motion_std_theta",
            "motion_std_xy_per_m",
            "n_likelihood_beams",
            "beam_std",
            "init_std_xy",
            "init_std_theta",
        ])?;
        let mut c = Self::default();
        cfg.read_usize("n_particles", &mut c.n_particles)?;
        cfg.read_f64("motion_std_v", &mut c.motion_std_v)?;
        cfg.read_f64("motion_std_delta", &mut c.motion_std_delta)?;
        cfg.read_f64("motion_std_theta", &mut c.motion_std_theta)?;
        cfg.read_f64("motion_std_xy_per_m", &mut c.motion_std_xy_per_m)?;
        cfg.read_usize("n_likelihood_beams", &mut c.n_likelihood_beams)?;
        cfg.read_f64("beam_std", &mut c.beam_std)?;
        cfg.read_f64("init_std_xy", &mut c.init_std_xy)?;
        cfg.read_f64("init_std_theta", &mut c.init_std_theta)?;
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        let stds = [
            self.motion_std_v,
            self.motion_std_delta,
            self.motion_std_theta,
            self.motion_std_xy_per_m,
            self.init_std_xy,
            self.init_std_theta,
        ];
        if self.n_particles == 0 {
            return Err(Error::Config("n_particles must be at least 1".into()));
        }
        if self.n_likelihood_beams == 0 || !(self.beam_std > 0.0) {
            return Err(Error::Config("beam model needs at least one beam and a positive std".into()));
        }
        if stds.iter().any(|s| !(*s >= 0.0)) {
            return Err(Error::Config("noise stds must be non-negative".into()));
        }
        Ok(())
    }
}

/// Weighted pose hypotheses.
#[derive(Clone, Debug, PartialEq)]
pub struct ParticleSet {
    pub poses: Vec<Pose2>,
    pub weights: Vec<f64>,
}

impl ParticleSet {
    pub fn uniform(poses: Vec<Pose2>) -> Self {
        let w = 1.0 / poses.len() as f64;
        Self {
            weights: vec![w; poses.len()],
            poses,
        }
    }

    /// Gaussian cloud around `pose`.
    pub fn around<R: Rng + ?Sized>(pose: Pose2, n: usize, std_xy: f64, std_theta: f64, rng: &mut R) -> Self {
        let poses = (0..n)
            .map(|_| {
                let (a, b, c): (f64, f64, f64) = (
                    StandardNormal.sample(rng),
                    StandardNormal.sample(rng),
                    StandardNormal.sample(rng),
                );
                Pose2::new(pose.x + std_xy * a, pose.y + std_xy * b, wrap_angle(pose.theta + std_theta * c))
            })
            .collect();
        Self::uniform(poses)
    }

    pub fn len(&self) -> usize {
        self.poses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.poses.is_empty()
    }
}

fn gaussian<R: Rng + ?Sized>(std: f64, rng: &mut R) -> f64 {
    if std > 0.0 {
        let z: f64 = StandardNormal.sample(rng);
        std * z
    } else {
        0.0
    }
}

/// Advances every particle by the kinematic bicycle under `(v, delta)`,
/// perturbing speed, steering, heading and position per particle.
pub fn motion_update<R: Rng + ?Sized>(
    set: &mut ParticleSet,
    v: f64,
    delta: f64,
    wheelbase: f64,
    dt: f64,
    cfg: &PfConfig,
    rng: &mut R,
) {
    for p in &mut set.poses {
        let vn = v + gaussian(cfg.motion_std_v, rng);
        let dn = delta + gaussian(cfg.motion_std_delta, rng);
        let omega = vn * dn.tan() / wheelbase;
        let mid = p.theta + 0.5 * omega * dt;
        let spread = cfg.motion_std_xy_per_m * (v * dt).abs();
        p.x += vn * mid.cos() * dt + gaussian(spread, rng);
        p.y += vn * mid.sin() * dt + gaussian(spread, rng);
        p.theta = wrap_angle(p.theta + omega * dt + gaussian(cfg.motion_std_theta, rng));
    }
}

/// Reweights by the Gaussian beam likelihood of `scan` and renormalises.
///
/// `scan` holds only the beams used for the likelihood. Particles in
/// occupied cells get zero weight.
pub fn measurement_update(set: &mut ParticleSet, scan: &LidarScan, field: &DistanceField, cfg: &PfConfig) -> Result<()> {
    let inv = 1.0 / (2.0 * cfg.beam_std * cfg.beam_std);
    let mut logw = Vec::with_capacity(set.len());
    for (p, &w) in set.poses.iter().zip(&set.weights) {
        if w <= 0.0 || field.at(p.x, p.y) <= 0.0 {
            logw.push(f64::NEG_INFINITY);
            continue;
        }
        let mut ll = w.ln();
        for (obs, a) in scan.ranges.iter().zip(scan.angles.iter()) {
            let exp = field.ray_march(p.x, p.y, p.theta + a, scan.max_range);
            let e = obs - exp;
            ll -= e * e * inv;
        }
        logw.push(ll);
    }
    let max = logw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return Err(Error::DegenerateBelief);
    }
    let mut sum = 0.0;
    for (w, l) in set.weights.iter_mut().zip(&logw) {
        *w = (l - max).exp();
        sum += *w;
    }
    for w in &mut set.weights {
        *w /= sum;
    }
    Ok(())
}

/// Weighted mean position and circular-mean heading.
pub fn estimate(set: &ParticleSet) -> Pose2 {
    let (mut x, mut y, mut s, mut c, mut total) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for (p, &w) in set.poses.iter().zip(&set.weights) {
        x += w * p.x;
        y += w * p.y;
        s += w * p.theta.sin();
        c += w * p.theta.cos();
        total += w;
    }
    Pose2::new(x / total, y / total, s.atan2(c))
}

/// Systematic resampling; output weights are uniform.
pub fn resample<R: Rng + ?Sized>(set: &mut ParticleSet, rng: &mut R) {
    resample_to(set, set.len(), rng);
}

/// Systematic resampling into `n` equally weighted particles.
pub fn resample_to<R: Rng + ?Sized>(set: &mut ParticleSet, n: usize, rng: &mut R) {
    let m = set.len();
    let step = 1.0 / n as f64;
    let u0: f64 = rng.random::<f64>() * step;
    let mut out = Vec::with_capacity(n);
    let mut cum = set.weights[0];
    let mut i = 0;
    for k in 0..n {
        let u = u0 + k as f64 * step;
        while u > cum && i + 1 < m {
            i += 1;
            cum += set.weights[i];
        }
        out.push(set.poses[i]);
    }
    *set = ParticleSet::uniform(out);
}

/// Particle filter with the beam subsample and bookkeeping of one run.
#[derive(Clone, Debug)]
pub struct ParticleFilter {
    cfg: PfConfig,
    set: ParticleSet,
    beams: Vec<usize>,
    wheelbase: f64,
    estimate: Pose2,
    last_sum_error: f64,
}

impl ParticleFilter {
    /// `n_scan_beams` is the size of the scans that will be fed to [`step`](Self::step).
    pub fn new<R: Rng + ?Sized>(cfg: PfConfig, start: Pose2, n_scan_beams: usize, wheelbase: f64, rng: &mut R) -> Result<Self> {
        cfg.validate()?;
        let set = ParticleSet::around(start, cfg.n_particles, cfg.init_std_xy, cfg.init_std_theta, rng);
        let beams = downsample_indices(n_scan_beams, cfg.n_likelihood_beams.min(n_scan_beams));
        Ok(Self {
            cfg,
            set,
            beams,
            wheelbase,
            estimate: start,
            last_sum_error: 0.0,
        })
    }

    pub fn particles(&self) -> &ParticleSet {
        &self.set
    }

    pub fn estimate(&self) -> Pose2 {
        self.estimate
    }

    /// |Σw − 1| after the most recent measurement update.
    pub fn last_normalisation_error(&self) -> f64 {
        self.last_sum_error
    }

    /// One predict/correct/resample cycle; returns the new estimate.
    pub fn step<R: Rng + ?Sized>(
        &mut self,
        v: f64,
        delta: f64,
        dt: f64,
        scan: &LidarScan,
        field: &DistanceField,
        rng: &mut R,
    ) -> Result<Pose2> {
        motion_update(&mut self.set, v, delta, self.wheelbase, dt, &self.cfg, rng);
        let sub = scan.select(&self.beams);
        if let Err(e) = measurement_update(&mut self.set, &sub, field, &self.cfg) {
            if !matches!(e, Error::DegenerateBelief) {
                return Err(e);
            }
            // every hypothesis hit a wall: restart around the last estimate
            self.set = ParticleSet::around(
                self.estimate,
                self.cfg.n_particles,
                self.cfg.init_std_xy,
                self.cfg.init_std_theta,
                rng,
            );
            self.last_sum_error = 0.0;
            return Ok(self.estimate);
        }
        self.last_sum_error = (self.set.weights.iter().sum::<f64>() - 1.0).abs();
        let mut est = estimate(&self.set);
        if field.at(est.x, est.y) <= 0.0 {
            if let Some(best) = self
                .set
                .poses
                .iter()
                .zip(&self.set.weights)
                .filter(|(p, _)| field.at(p.x, p.y) > 0.0)
                .max_by(|a, b| a.1.total_cmp(b.1))
            {
                est = *best.0;
            }
        }
        resample(&mut self.set, rng);
        self.estimate = est;
        Ok(est)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn quiet() -> PfConfig {
        PfConfig {
            motion_std_v: 0.0,
            motion_std_delta: 0.0,
            motion_std_theta: 0.0,
            motion_std_xy_per_m: 0.0,
            ..PfConfig::default()
        }
    }

    #[test]
    fn noiseless_straight_motion() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut set = ParticleSet::uniform(vec![Pose2::new(0.0, 0.0, 0.0), Pose2::new(3.0, -1.0, 0.0)]);
        motion_update(&mut set, 1.0, 0.0, 0.33, 1.0, &quiet(), &mut rng);
        assert_eq!(set.poses[0], Pose2::new(1.0, 0.0, 0.0));
        assert_eq!(set.poses[1], Pose2::new(4.0, -1.0, 0.0));
    }

    #[test]
    fn zero_speed_leaves_particles() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let before = ParticleSet::uniform(vec![Pose2::new(1.0, 2.0, 0.3); 5]);
        let mut set = before.clone();
        motion_update(&mut set, 0.0, 0.2, 0.33, 0.5, &quiet(), &mut rng);
        assert_eq!(set, before);
    }

    #[test]
    fn estimate_examples() {
        let set = ParticleSet::uniform(vec![Pose2::new(0.0, 0.0, 0.0), Pose2::new(2.0, 0.0, 0.0)]);
        assert_eq!(estimate(&set), Pose2::new(1.0, 0.0, 0.0));
        let set = ParticleSet {
            poses: vec![Pose2::new(0.5, 0.7, 0.2), Pose2::new(2.0, 0.0, 1.0)],
            weights: vec![1.0, 0.0],
        };
        let e = estimate(&set);
        assert_eq!((e.x, e.y), (0.5, 0.7));
        assert!((e.theta - 0.2).abs() < 1e-15);
        let set = ParticleSet::uniform(vec![Pose2::new(0.0, 0.0, 3.1), Pose2::new(0.0, 0.0, -3.1)]);
        assert!((estimate(&set).theta.abs() - PI).abs() < 1e-12);
    }

    #[test]
    fn systematic_resampling_counts() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let poses: Vec<Pose2> = (0..6).map(|i| Pose2::new(i as f64, 0.0, 0.0)).collect();
        let mut set = ParticleSet::uniform(poses.clone());
        resample(&mut set, &mut rng);
        assert_eq!(set.poses, poses);

        let mut set = ParticleSet {
            poses: poses.clone(),
            weights: vec![1.0, 0.0, 0.0, 0.0, 0.0, 0.0],
        };
        resample(&mut set, &mut rng);
        assert!(set.poses.iter().all(|p| p.x == 0.0));

        for seed in 0..50 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut set = ParticleSet {
                poses: vec![Pose2::new(0.0, 0.0, 0.0), Pose2::new(1.0, 0.0, 0.0)],
                weights: vec![0.75, 0.25],
            };
            resample_to(&mut set, 4, &mut rng);
            assert_eq!(set.len(), 4);
            assert_eq!(set.poses.iter().filter(|p| p.x == 0.0).count(), 3);
        }
    }
}
