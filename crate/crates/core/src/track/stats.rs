use super::PathParameterization;

pub const STRAIGHT_KAPPA: f64 = 0.1;
pub const CORNER_KAPPA: f64 = 0.6;
const SMOOTHING_POINTS: usize = 5;

/// Length, straight share and corner count of a track.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrackStats {
    pub length: f64,
    pub straight_pct: f64,
    pub corner_count: usize,
}

/// Vertex curvature after a centered periodic moving average.
pub fn smoothed_curvature(param: &PathParameterization) -> Vec<f64> {
    let k = param.vertex_kappa();
    let n = k.len();
    let half = SMOOTHING_POINTS / 2;
    (0..n)
        .map(|i| {
            let sum: f64 = (0..SMOOTHING_POINTS)
                .map(|j| k[(i + n + j - half) % n])
                .sum();
            sum / SMOOTHING_POINTS as f64
        })
        .collect()
}

pub fn track_stats(param: &PathParameterization) -> TrackStats {
    let kappa = smoothed_curvature(param);
    let seg = param.segment_lengths();
    let n = kappa.len();
    let mut straight = 0.0;
    for i in 0..n {
        if kappa[i].abs() < STRAIGHT_KAPPA {
            straight += 0.5 * (seg[(i + n - 1) % n] + seg[i]);
        }
    }
    let in_corner: Vec<bool> = kappa.iter().map(|k| k.abs() > CORNER_KAPPA).collect();
    let corner_count = if in_corner.iter().all(|&c| c) {
        1
    } else {
        // count rising edges around the loop
        (0..n)
            .filter(|&i| in_corner[i] && !in_corner[(i + n - 1) % n])
            .count()
    };
    TrackStats {
        length: param.length(),
        straight_pct: (100.0 * straight / param.length()).clamp(0.0, 100.0),
        corner_count,
    }
}
