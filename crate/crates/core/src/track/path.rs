use super::CenterlineTrack;
use crate::geometry::wrap_angle;

/// Arc-length lookup `s -> (X, Y, Φ, κ)` over a closed centerline.
///
/// Position is piecewise linear between points. Heading is interpolated
/// linearly between segment midpoints, so Φ is continuous and its slope on
/// the interval around point `i` is the vertex curvature κ_i.
#[derive(Clone, Debug)]
pub struct PathParameterization {
    x: Vec<f64>,
    y: Vec<f64>,
    s: Vec<f64>,
    seg_len: Vec<f64>,
    heading: Vec<f64>,
    kappa: Vec<f64>,
    w_left: Vec<f64>,
    w_right: Vec<f64>,
    length: f64,
}

/// Result of projecting a point onto the centerline.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Projection {
    pub s: f64,
    pub segment: usize,
    /// Signed lateral offset, positive to the left of the direction of travel.
    pub lateral: f64,
    pub distance: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PathPoint {
    pub x: f64,
    pub y: f64,
    pub phi: f64,
    pub kappa: f64,
}

impl PathParameterization {
    pub fn new(track: &CenterlineTrack) -> Self {
        let n = track.len();
        let pts = track.points();
        let x: Vec<f64> = pts.iter().map(|p| p[0]).collect();
        let y: Vec<f64> = pts.iter().map(|p| p[1]).collect();
        let seg_len: Vec<f64> = (0..n).map(|i| track.segment_length(i)).collect();
        let mut heading = Vec::with_capacity(n);
        for i in 0..n {
            let j = (i + 1) % n;
            let h = (y[j] - y[i]).atan2(x[j] - x[i]);
            let h = match heading.last() {
                Some(&prev) => prev + wrap_angle(h - prev),
                None => h,
            };
            heading.push(h);
        }
        let kappa = (0..n)
            .map(|i| {
                let p = (i + n - 1) % n;
                let dh = wrap_angle(heading[i] - heading[p]);
                dh / (0.5 * (seg_len[p] + seg_len[i]))
            })
            .collect();
        Self {
            x,
            y,
            s: track.arc_lengths().to_vec(),
            seg_len,
            heading,
            kappa,
            w_left: track.w_left().to_vec(),
            w_right: track.w_right().to_vec(),
            length: track.length(),
        }
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    /// Reduces `s` into `[0, L)`.
    pub fn wrap_s(&self, s: f64) -> f64 {
        let r = s.rem_euclid(self.length);
        if r >= self.length {
            0.0
        } else {
            r
        }
    }

    /// Index of the segment containing wrapped `s`.
    pub fn segment_at(&self, s: f64) -> usize {
        let s = self.wrap_s(s);
        match self.s.binary_search_by(|v| v.total_cmp(&s)) {
            Ok(i) => i,
            Err(i) => i - 1,
        }
    }

    pub fn vertex_s(&self) -> &[f64] {
        &self.s
    }

    pub fn vertex_kappa(&self) -> &[f64] {
        &self.kappa
    }

    pub fn segment_lengths(&self) -> &[f64] {
        &self.seg_len
    }

    pub fn vertex(&self, i: usize) -> [f64; 2] {
        [self.x[i], self.y[i]]
    }

    pub fn position(&self, s: f64) -> [f64; 2] {
        let i = self.segment_at(s);
        let j = (i + 1) % self.len();
        let t = (self.wrap_s(s) - self.s[i]) / self.seg_len[i];
        [
            self.x[i] + t * (self.x[j] - self.x[i]),
            self.y[i] + t * (self.y[j] - self.y[i]),
        ]
    }

    /// Continuous heading, unwrapped within one lap.
    fn phi_and_kappa(&self, s: f64) -> (f64, f64) {
        let n = self.len();
        let s = self.wrap_s(s);
        let i = self.segment_at(s);
        let mid = self.s[i] + 0.5 * self.seg_len[i];
        // interval between the midpoint of segment a and that of segment a+1
        let (a, s_a) = if s >= mid {
            (i, mid)
        } else {
            let p = (i + n - 1) % n;
            (p, mid - 0.5 * (self.seg_len[p] + self.seg_len[i]))
        };
        let b = (a + 1) % n;
        let span = 0.5 * (self.seg_len[a] + self.seg_len[b]);
        let dh = wrap_angle(self.heading[b] - self.heading[a]);
        let t = (s - s_a) / span;
        (self.heading[a] + t * dh, self.kappa[b])
    }

    pub fn heading(&self, s: f64) -> f64 {
        self.phi_and_kappa(s).0
    }

    pub fn curvature(&self, s: f64) -> f64 {
        self.phi_and_kappa(s).1
    }

    pub fn point(&self, s: f64) -> PathPoint {
        let [x, y] = self.position(s);
        let (phi, kappa) = self.phi_and_kappa(s);
        PathPoint { x, y, phi, kappa }
    }

    /// Left and right widths interpolated along the segment.
    pub fn widths(&self, s: f64) -> (f64, f64) {
        let i = self.segment_at(s);
        let j = (i + 1) % self.len();
        let t = (self.wrap_s(s) - self.s[i]) / self.seg_len[i];
        (
            self.w_left[i] + t * (self.w_left[j] - self.w_left[i]),
            self.w_right[i] + t * (self.w_right[j] - self.w_right[i]),
        )
    }

    fn project_onto(&self, i: usize, px: f64, py: f64) -> Projection {
        let j = (i + 1) % self.len();
        let dx = self.x[j] - self.x[i];
        let dy = self.y[j] - self.y[i];
        let l2 = dx * dx + dy * dy;
        let t = (((px - self.x[i]) * dx + (py - self.y[i]) * dy) / l2).clamp(0.0, 1.0);
        let cx = self.x[i] + t * dx;
        let cy = self.y[i] + t * dy;
        let ex = px - cx;
        let ey = py - cy;
        let cross = dx * ey - dy * ex;
        let distance = ex.hypot(ey);
        Projection {
            s: self.s[i] + t * self.seg_len[i],
            segment: i,
            lateral: distance.copysign(cross),
            distance,
        }
    }

    /// Closest point over the whole centerline.
    pub fn project(&self, px: f64, py: f64) -> Projection {
        (0..self.len())
            .map(|i| self.project_onto(i, px, py))
            .min_by(|a, b| a.distance.total_cmp(&b.distance))
            .expect("non-empty path")
    }

    /// Closest point searched outward from segment `hint`; falls back to the
    /// global search when the local minimum sits on the window edge.
    pub fn project_near(&self, px: f64, py: f64, hint: usize, window: usize) -> Projection {
        let n = self.len();
        if 2 * window + 1 >= n {
            return self.project(px, py);
        }
        let mut best = self.project_onto(hint % n, px, py);
        let mut best_k: isize = 0;
        for k in 1..=window as isize {
            for idx in [hint as isize + k, hint as isize - k] {
                let i = idx.rem_euclid(n as isize) as usize;
                let p = self.project_onto(i, px, py);
                if p.distance < best.distance {
                    best = p;
                    best_k = k;
                }
            }
        }
        if best_k as usize == window {
            return self.project(px, py);
        }
        best
    }

    /// Signed distance along the path from `from` to `to`, in `(-L/2, L/2]`.
    pub fn delta_s(&self, from: f64, to: f64) -> f64 {
        let d = (to - from).rem_euclid(self.length);
        if d > 0.5 * self.length {
            d - self.length
        } else {
            d
        }
    }
}
