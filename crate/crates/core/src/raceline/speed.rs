use crate::dynamics::VehicleParams;

const MAX_SWEEPS: usize = 100_000;
/// Sweeps stop once no speed moves more than this (m/s).
const SWEEP_TOL: f64 = 1e-10;
const MIN_SPEED: f64 = 1e-3;

#[derive(Clone, Debug, PartialEq)]
pub struct SpeedProfile {
    pub v: Vec<f64>,
    /// Indices where the recursion's radicand went negative.
    pub flagged: Vec<usize>,
    pub sweeps: usize,
}

/// Lateral-acceleration seed `min(v_max, √(μ a_max / |κ|))`.
pub fn curvature_speed(kappa: f64, p: &VehicleParams) -> f64 {
    if kappa == 0.0 {
        p.v_max
    } else {
        (p.mu * p.a_max / kappa.abs()).sqrt().min(p.v_max)
    }
}

/// One step of the friction-limited recursion from speed `v` over a segment
/// of length `l` at curvature `kappa`; `None` when the radicand is negative.
pub fn recursion_step(v: f64, kappa: f64, l: f64, p: &VehicleParams) -> Option<f64> {
    let rad = v * v + 2.0 * l * p.mu * p.a_max * (1.0 - v * kappa.abs());
    (rad >= 0.0).then(|| rad.sqrt())
}

/// Forward and backward passes around the closed loop until nothing changes.
///
/// `seg_len[i]` is the distance from point `i` to point `i + 1`.
pub fn speed_profile_values(kappa: &[f64], seg_len: &[f64], p: &VehicleParams) -> SpeedProfile {
    let n = kappa.len();
    let mut v: Vec<f64> = kappa.iter().map(|&k| curvature_speed(k, p)).collect();
    let mut flagged = vec![false; n];
    let mut sweeps = 0;
    while sweeps < MAX_SWEEPS {
        sweeps += 1;
        let mut change = 0.0f64;
        for i in 0..n {
            let j = (i + 1) % n;
            let cand = recursion_step(v[i], kappa[i], seg_len[i], p).unwrap_or_else(|| {
                flagged[j] = true;
                v[i]
            });
            if cand < v[j] {
                change = change.max(v[j] - cand);
                v[j] = cand;
            }
        }
        for i in (0..n).rev() {
            let j = (i + 1) % n;
            let cand = recursion_step(v[j], kappa[j], seg_len[i], p).unwrap_or_else(|| {
                flagged[i] = true;
                v[j]
            });
            if cand < v[i] {
                change = change.max(v[i] - cand);
                v[i] = cand;
            }
        }
        if change < SWEEP_TOL {
            break;
        }
    }
    for s in &mut v {
        *s = s.clamp(MIN_SPEED, p.v_max);
    }
    SpeedProfile {
        v,
        flagged: (0..n).filter(|&i| flagged[i]).collect(),
        sweeps,
    }
}
