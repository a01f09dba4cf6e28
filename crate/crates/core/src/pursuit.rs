//! Pure pursuit on a raceline with a speed-dependent lookahead and a
//! steering-limited speed cap.

use crate::config::KvConfig;
use crate::dynamics::VehicleParams;
use crate::error::{Error, Result};
use crate::geometry::{wrap_angle, Pose2};
use crate::raceline::Raceline;
use crate::sim::{Action, Observation, Planner};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PursuitParams {
    /// Constant part of the lookahead (m).
    pub l_d0: f64,
    /// Speed gain of the lookahead (s).
    pub k_ld: f64,
    /// Allowed lateral force over weight.
    pub ratio_cap: f64,
}

impl Default for PursuitParams {
    fn default() -> Self {
        Self {
            l_d0: 0.3,
            k_ld: 0.1,
            ratio_cap: 1.5,
        }
    }
}

impl PursuitParams {
    pub fn from_config(cfg: &KvConfig) -> Result<Self> {
        cfg.reject_unknown(&["l_d0", "k_ld", "ratio_cap"])?;
        let mut p = Self::default();
        cfg.read_f64("l_d0", &mut p.l_d0)?;
        cfg.read_f64("k_ld", &mut p.k_ld)?;
        cfg.read_f64("ratio_cap", &mut p.ratio_cap)?;
        if !(p.l_d0 > 0.0 && p.k_ld >= 0.0 && p.ratio_cap > 0.0) {
            return Err(Error::Config(format!("invalid pursuit parameters {p:?}")));
        }
        Ok(p)
    }

    pub fn lookahead(&self, speed: f64) -> f64 {
        self.l_d0 + self.k_ld * speed.max(0.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Lookahead {
    pub closest: usize,
    pub target: usize,
    pub point: [f64; 2],
    /// Bearing of the target in the vehicle frame.
    pub phi: f64,
}

const WINDOW_BACK: usize = 20;
const WINDOW_AHEAD: usize = 80;
/// Beyond this distance from the windowed match the search goes global (m).
const RELOCATE_DIST: f64 = 2.0;

fn dist2(rl: &Raceline, i: usize, x: f64, y: f64) -> f64 {
    (rl.x[i] - x).powi(2) + (rl.y[i] - y).powi(2)
}

/// Closest waypoint, searched around `hint` when given.
pub fn closest_waypoint(rl: &Raceline, x: f64, y: f64, hint: Option<usize>) -> usize {
    let n = rl.len();
    let global = || (0..n).min_by(|&a, &b| dist2(rl, a, x, y).total_cmp(&dist2(rl, b, x, y))).expect("non-empty raceline");
    match hint {
        Some(h) if n > WINDOW_BACK + WINDOW_AHEAD + 1 => {
            let best = (0..=WINDOW_BACK + WINDOW_AHEAD)
                .map(|k| (h + n + k - WINDOW_BACK) % n)
                .min_by(|&a, &b| dist2(rl, a, x, y).total_cmp(&dist2(rl, b, x, y)))
                .expect("non-empty window");
            if dist2(rl, best, x, y) > RELOCATE_DIST * RELOCATE_DIST {
                global()
            } else {
                best
            }
        }
        _ => global(),
    }
}

/// First waypoint at least `l_d` of arc ahead of the closest one.
pub fn lookahead_point(pose: &Pose2, rl: &Raceline, l_d: f64, hint: Option<usize>) -> Lookahead {
    let n = rl.len();
    let closest = closest_waypoint(rl, pose.x, pose.y, hint);
    let mut target = closest;
    let mut arc = 0.0;
    for _ in 0..n {
        if arc >= l_d {
            break;
        }
        arc += rl.segment_length(target);
        target = (target + 1) % n;
    }
    let point = [rl.x[target], rl.y[target]];
    let (lx, ly) = pose.to_local(point[0], point[1]);
    Lookahead {
        closest,
        target,
        point,
        phi: wrap_angle(ly.atan2(lx)),
    }
}

/// Speed at which steering angle `delta` produces the capped lateral force.
pub fn steering_speed_cap(delta: f64, p: &VehicleParams, pp: &PursuitParams) -> f64 {
    let t = delta.abs().tan();
    if t == 0.0 {
        f64::INFINITY
    } else {
        (pp.ratio_cap * p.g * p.wheelbase() / t).sqrt()
    }
}

/// Steering from the lookahead bearing, clamped to the actuator limit.
pub fn pursuit_steering(phi: f64, l_d: f64, p: &VehicleParams) -> f64 {
    (p.wheelbase() * phi.sin() / l_d).atan().clamp(-p.delta_max, p.delta_max)
}

/// Returns `(target_speed, target_delta, lookahead)`.
pub fn pursuit_action(
    pose: &Pose2,
    speed: f64,
    rl: &Raceline,
    p: &VehicleParams,
    pp: &PursuitParams,
    hint: Option<usize>,
) -> (f64, f64, Lookahead) {
    let l_d = pp.lookahead(speed);
    let la = lookahead_point(pose, rl, l_d, hint);
    let delta = pursuit_steering(la.phi, l_d, p);
    let v = rl.v[la.closest].min(steering_speed_cap(delta, p, pp));
    (v, delta, la)
}

/// Pure-pursuit planner with a warm-started waypoint search.
#[derive(Clone, Debug)]
pub struct PurePursuit {
    raceline: Raceline,
    params: VehicleParams,
    pp: PursuitParams,
    cache: Option<usize>,
}

impl PurePursuit {
    pub fn new(raceline: Raceline, params: VehicleParams, pp: PursuitParams) -> Self {
        Self {
            raceline,
            params,
            pp,
            cache: None,
        }
    }

    pub fn raceline(&self) -> &Raceline {
        &self.raceline
    }

    pub fn act(&mut self, pose: &Pose2, speed: f64) -> Action {
        let (v, delta, la) = pursuit_action(pose, speed, &self.raceline, &self.params, &self.pp, self.cache);
        self.cache = Some(la.closest);
        Action::new(v, delta)
    }
}

impl Planner for PurePursuit {
    fn reset(&mut self) {
        self.cache = None;
    }

    fn plan(&mut self, obs: &Observation<'_>) -> Result<Action> {
        Ok(self.act(&obs.pose, obs.speed))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn straight_line() -> Raceline {
        // long thin loop; only the bottom edge matters
        let mut pts: Vec<[f64; 2]> = (0..200).map(|i| [i as f64 * 0.1, 0.0]).collect();
        pts.extend((0..200).map(|i| [20.0 - i as f64 * 0.1, 5.0]));
        Raceline::from_points(&pts, vec![4.0; 400]).unwrap()
    }

    #[test]
    fn aligned_on_line_goes_straight() {
        let rl = straight_line();
        let p = VehicleParams::default();
        let (v, d, la) = pursuit_action(&Pose2::new(5.0, 0.0, 0.0), 2.0, &rl, &p, &PursuitParams::default(), None);
        assert_eq!(la.phi, 0.0);
        assert_eq!(d, 0.0);
        assert_eq!(v, 4.0);
    }

    #[test]
    fn left_offset_steers_right() {
        let rl = straight_line();
        let pose = Pose2::new(5.0, 0.5, 0.0);
        let la = lookahead_point(&pose, &rl, 1.0, None);
        let dist = ((la.point[0] - pose.x).powi(2) + (la.point[1] - pose.y).powi(2)).sqrt();
        assert!((la.phi + (0.5 / dist).asin()).abs() < 1e-12);
        assert!(pursuit_steering(la.phi, 1.0, &VehicleParams::default()) < 0.0);
    }

    #[test]
    fn lookahead_wraps_past_last_index() {
        let rl = straight_line();
        let pose = Pose2::new(0.0, 0.1, 0.0);
        let la = lookahead_point(&pose, &rl, 1.0, Some(rl.len() - 1));
        assert!(la.target < 20);
    }

    #[test]
    fn steering_formula() {
        let p = VehicleParams::default();
        let d = pursuit_steering(std::f64::consts::PI / 6.0, 1.0, &p);
        assert!((d - 0.165f64.atan()).abs() < 1e-15);
    }

    #[test]
    fn cap_formula() {
        let p = VehicleParams::default();
        let cap = steering_speed_cap(0.4, &p, &PursuitParams::default());
        assert!((cap - 3.3890119224619024).abs() < 1e-12);
        assert_eq!(steering_speed_cap(0.0, &p, &PursuitParams::default()), f64::INFINITY);
    }
}
