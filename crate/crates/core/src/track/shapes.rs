//! Synthetic track generators, including the three shipped benchmark tracks.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};

use super::CenterlineTrack;
use crate::error::{Error, Result};

/// Half-width of every shipped track (m).
pub const SHIPPED_HALF_WIDTH: f64 = 1.25;
/// Point spacing of every shipped track (m).
pub const SHIPPED_SPACING: f64 = 0.1;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ShippedTrack {
    Oval,
    Stadium,
    Wiggle,
}

impl ShippedTrack {
    pub const ALL: [ShippedTrack; 3] = [ShippedTrack::Oval, ShippedTrack::Stadium, ShippedTrack::Wiggle];

    pub fn name(self) -> &'static str {
        match self {
            ShippedTrack::Oval => "oval",
            ShippedTrack::Stadium => "stadium",
            ShippedTrack::Wiggle => "wiggle",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|t| t.name() == name)
    }

    pub fn build(self) -> CenterlineTrack {
        let hw = SHIPPED_HALF_WIDTH;
        let ds = SHIPPED_SPACING;
        match self {
            ShippedTrack::Oval => ellipse(15.0, 8.0, ds, hw),
            ShippedTrack::Stadium => stadium(20.0, 5.0, ds, hw),
            ShippedTrack::Wiggle => wiggle(ds, hw),
        }
        .expect("shipped track geometry is valid")
    }
}

/// Resamples a closed polyline to equally spaced points, spacing close to `spacing`.
pub fn resample_closed(points: &[[f64; 2]], spacing: f64) -> Vec<[f64; 2]> {
    let n = points.len();
    let mut cum = Vec::with_capacity(n + 1);
    cum.push(0.0);
    for i in 0..n {
        let a = points[i];
        let b = points[(i + 1) % n];
        cum.push(cum[i] + (b[0] - a[0]).hypot(b[1] - a[1]));
    }
    let total = cum[n];
    let m = ((total / spacing).round() as usize).max(4);
    let step = total / m as f64;
    let mut out = Vec::with_capacity(m);
    let mut seg = 0;
    for k in 0..m {
        let s = k as f64 * step;
        while cum[seg + 1] < s {
            seg += 1;
        }
        let a = points[seg];
        let b = points[(seg + 1) % n];
        let t = (s - cum[seg]) / (cum[seg + 1] - cum[seg]);
        out.push([a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])]);
    }
    out
}

/// Regular polygon approximating a circle of radius `r` centred at the origin, CCW.
pub fn circle(r: f64, n: usize, half_width: f64) -> Result<CenterlineTrack> {
    let pts = (0..n)
        .map(|i| {
            let a = 2.0 * PI * i as f64 / n as f64;
            [r * a.cos(), r * a.sin()]
        })
        .collect();
    CenterlineTrack::with_uniform_width(pts, half_width)
}

pub fn ellipse(a: f64, b: f64, spacing: f64, half_width: f64) -> Result<CenterlineTrack> {
    let dense: Vec<[f64; 2]> = (0..20_000)
        .map(|i| {
            let t = 2.0 * PI * i as f64 / 20_000.0;
            [a * t.cos(), b * t.sin()]
        })
        .collect();
    CenterlineTrack::with_uniform_width(resample_closed(&dense, spacing), half_width)
}

/// Axis-aligned rectangle with sharp corners, starting at the origin heading +x.
pub fn rectangle(w: f64, h: f64, spacing: f64, half_width: f64) -> Result<CenterlineTrack> {
    let corners = [[0.0, 0.0], [w, 0.0], [w, h], [0.0, h]];
    CenterlineTrack::with_uniform_width(resample_closed(&corners, spacing), half_width)
}

/// Two semicircles of radius `r` joined by straights of length `straight`.
pub fn stadium(straight: f64, r: f64, spacing: f64, half_width: f64) -> Result<CenterlineTrack> {
    let mut t = Turtle::new();
    t.straight(straight);
    t.arc(PI, r);
    t.straight(straight);
    t.arc(PI, r);
    t.finish(spacing, half_width)
}

/// Rounded rectangle with two S-bends on each long side: twelve corners.
pub fn wiggle(spacing: f64, half_width: f64) -> Result<CenterlineTrack> {
    const R: f64 = 1.5;
    const LINK: f64 = 1.0;
    let s_bend_len = 2.0 * R * FRAC_PI_4.sin() + LINK * FRAC_PI_4.cos();
    let long_inner = 28.0 - 2.0 * R;
    let short_inner = 14.0 - 2.0 * R;
    let edge = 4.0;
    let middle = long_inner - 2.0 * edge - 2.0 * s_bend_len;
    let mut t = Turtle::new();
    for _ in 0..2 {
        t.straight(edge);
        // out to the right and back
        t.arc(-FRAC_PI_4, R);
        t.straight(LINK);
        t.arc(FRAC_PI_4, R);
        t.straight(middle);
        t.arc(FRAC_PI_4, R);
        t.straight(LINK);
        t.arc(-FRAC_PI_4, R);
        t.straight(edge);
        t.arc(FRAC_PI_2, R);
        t.straight(short_inner);
        t.arc(FRAC_PI_2, R);
    }
    t.finish(spacing, half_width)
}

/// Dense polyline builder from straight and arc primitives.
struct Turtle {
    x: f64,
    y: f64,
    heading: f64,
    points: Vec<[f64; 2]>,
}

const TURTLE_STEP: f64 = 0.002;

impl Turtle {
    fn new() -> Self {
        Self {
            x: 0.0,
            y: 0.0,
            heading: 0.0,
            points: vec![[0.0, 0.0]],
        }
    }

    fn straight(&mut self, len: f64) {
        let n = (len / TURTLE_STEP).ceil().max(1.0) as usize;
        let (x0, y0) = (self.x, self.y);
        for k in 1..=n {
            let d = len * k as f64 / n as f64;
            self.points.push([x0 + d * self.heading.cos(), y0 + d * self.heading.sin()]);
        }
        self.x = x0 + len * self.heading.cos();
        self.y = y0 + len * self.heading.sin();
    }

    /// Positive `angle` turns left.
    fn arc(&mut self, angle: f64, r: f64) {
        let side = angle.signum();
        let cx = self.x - side * r * self.heading.sin();
        let cy = self.y + side * r * self.heading.cos();
        let start = (self.y - cy).atan2(self.x - cx);
        let n = (angle.abs() * r / TURTLE_STEP).ceil().max(1.0) as usize;
        for k in 1..=n {
            let a = start + angle * k as f64 / n as f64;
            self.points.push([cx + r * a.cos(), cy + r * a.sin()]);
        }
        let end = start + angle;
        self.x = cx + r * end.cos();
        self.y = cy + r * end.sin();
        self.heading += angle;
    }

    fn finish(mut self, spacing: f64, half_width: f64) -> Result<CenterlineTrack> {
        let gap = self.x.hypot(self.y);
        if gap > 1e-6 {
            return Err(Error::InvalidTrack(format!("turtle path does not close (gap {gap:.3e} m)")));
        }
        self.points.pop();
        CenterlineTrack::with_uniform_width(resample_closed(&self.points, spacing), half_width)
    }
}
