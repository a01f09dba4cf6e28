//! Offline global planning: minimum-curvature path plus a friction-limited
//! speed profile, and the waypoint file format shared with the trackers.

mod mincurv;
mod speed;

use std::path::Path;

pub use mincurv::{
    curvature_jacobian, curvature_objective, minimum_curvature, offset_bounds, right_normals, vertex_curvature,
    MinCurvConfig, MinCurvResult,
};
pub use speed::{curvature_speed, recursion_step, speed_profile_values, SpeedProfile};

use crate::csvio::{fmt_sig, parse_fields, Header};
use crate::dynamics::VehicleParams;
use crate::error::{Error, Result};
use crate::track::CenterlineTrack;

pub const RACELINE_HEADER: &str = "s_m,x_m,y_m,psi_rad,kappa_radpm,vx_mps";
const CSV_DIGITS: usize = 9;

/// Closed waypoint path with heading, curvature and target speed.
#[derive(Clone, Debug, PartialEq)]
pub struct Raceline {
    pub s: Vec<f64>,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub psi: Vec<f64>,
    pub kappa: Vec<f64>,
    pub v: Vec<f64>,
    length: f64,
}

fn closed_length(s_last: f64, first: [f64; 2], last: [f64; 2]) -> f64 {
    s_last + (first[0] - last[0]).hypot(first[1] - last[1])
}

impl Raceline {
    /// Builds geometry from points; `v` gives the speed of each point.
    pub fn from_points(points: &[[f64; 2]], v: Vec<f64>) -> Result<Self> {
        let n = points.len();
        if n == 0 {
            return Err(Error::EmptyRaceline);
        }
        let mut s = Vec::with_capacity(n);
        let mut psi = Vec::with_capacity(n);
        let mut acc = 0.0;
        for i in 0..n {
            let a = points[i];
            let b = points[(i + 1) % n];
            s.push(acc);
            acc += (b[0] - a[0]).hypot(b[1] - a[1]);
            psi.push((b[1] - a[1]).atan2(b[0] - a[0]));
        }
        Ok(Self {
            s,
            x: points.iter().map(|p| p[0]).collect(),
            y: points.iter().map(|p| p[1]).collect(),
            psi,
            kappa: vertex_curvature(points),
            v,
            length: acc,
        })
    }

    /// The centerline itself driven at a constant speed.
    pub fn from_centerline(track: &CenterlineTrack, speed: f64) -> Result<Self> {
        Self::from_points(track.points(), vec![speed; track.len()])
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn points(&self) -> Vec<[f64; 2]> {
        self.x.iter().zip(&self.y).map(|(&x, &y)| [x, y]).collect()
    }

    /// Distance from point `i` to point `i + 1`.
    pub fn segment_length(&self, i: usize) -> f64 {
        let n = self.len();
        if i + 1 == n {
            self.length - self.s[i]
        } else {
            self.s[i + 1] - self.s[i]
        }
    }

    /// Time to drive one lap at the profile speeds.
    pub fn lap_time(&self) -> f64 {
        (0..self.len())
            .map(|i| {
                let j = (i + 1) % self.len();
                2.0 * self.segment_length(i) / (self.v[i] + self.v[j])
            })
            .sum()
    }

    /// Copy with the speed profile recomputed for `params`.
    pub fn with_speed_profile(&self, params: &VehicleParams) -> SpeedProfiled {
        let seg: Vec<f64> = (0..self.len()).map(|i| self.segment_length(i)).collect();
        let prof = speed_profile_values(&self.kappa, &seg, params);
        let mut r = self.clone();
        r.v = prof.v;
        SpeedProfiled {
            raceline: r,
            flagged: prof.flagged,
            sweeps: prof.sweeps,
        }
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(RACELINE_HEADER);
        out.push('\n');
        for i in 0..self.len() {
            let row = [self.s[i], self.x[i], self.y[i], self.psi[i], self.kappa[i], self.v[i]];
            let cells: Vec<String> = row.iter().map(|v| fmt_sig(*v, CSV_DIGITS)).collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }

    pub fn parse(text: &str, context: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (_, head) = lines.next().ok_or(Error::EmptyRaceline)?;
        let header = Header::parse(head);
        let cols = [
            header.require(&["s_m"], context)?,
            header.require(&["x_m"], context)?,
            header.require(&["y_m"], context)?,
            header.require(&["psi_rad"], context)?,
            header.require(&["kappa_radpm"], context)?,
            header.require(&["vx_mps"], context)?,
        ];
        let mut cols_out: [Vec<f64>; 6] = Default::default();
        for (idx, line) in lines {
            if line.trim_start().starts_with('#') {
                continue;
            }
            let f = parse_fields(line, idx + 1, header.len(), context)?;
            for (k, &c) in cols.iter().enumerate() {
                cols_out[k].push(f[c]);
            }
        }
        let [s, x, y, psi, kappa, v] = cols_out;
        if s.is_empty() {
            return Err(Error::EmptyRaceline);
        }
        if s.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::schema(context, 0, "s_m must be strictly increasing"));
        }
        let n = s.len();
        let length = closed_length(s[n - 1], [x[0], y[0]], [x[n - 1], y[n - 1]]);
        Ok(Self {
            s,
            x,
            y,
            psi,
            kappa,
            v,
            length,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, &path.display().to_string())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SpeedProfiled {
    pub raceline: Raceline,
    pub flagged: Vec<usize>,
    pub sweeps: usize,
}

/// Full offline pipeline result.
#[derive(Clone, Debug, PartialEq)]
pub struct PlanReport {
    pub raceline: Raceline,
    pub path: MinCurvResult,
    pub flagged: Vec<usize>,
}

impl PlanReport {
    pub fn summary(&self) -> String {
        format!(
            "points={} length_m={:.3} objective_centerline={:.6} objective={:.6} iterations={} converged={} lap_time_s={:.3} flagged={}",
            self.raceline.len(),
            self.raceline.length(),
            self.path.centerline_objective,
            self.path.objective,
            self.path.iterations,
            self.path.converged,
            self.raceline.lap_time(),
            self.flagged.len()
        )
    }
}

/// Minimum-curvature path followed by the speed profile.
pub fn plan_raceline(track: &CenterlineTrack, params: &VehicleParams, cfg: &MinCurvConfig) -> Result<PlanReport> {
    let path = minimum_curvature(track, params, cfg)?;
    let geometry = Raceline::from_points(&path.points, vec![0.0; path.points.len()])?;
    let profiled = geometry.with_speed_profile(params);
    Ok(PlanReport {
        raceline: profiled.raceline,
        path,
        flagged: profiled.flagged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::track::shapes;

    #[test]
    fn csv_round_trip() {
        let track = shapes::ellipse(5.0, 3.0, 0.3, 1.0).unwrap();
        let rl = Raceline::from_centerline(&track, 2.5).unwrap();
        let once = Raceline::parse(&rl.to_csv(), "rl").unwrap();
        // nine significant digits: half a unit in the ninth digit
        // first pass within relative 5e-9, later passes bit-exact
        for i in 0..rl.len() {
            assert!((once.x[i] - rl.x[i]).abs() <= 5e-9 * rl.x[i].abs());
            assert!((once.kappa[i] - rl.kappa[i]).abs() <= 5e-9 * rl.kappa[i].abs());
        }
        let twice = Raceline::parse(&once.to_csv(), "rl").unwrap();
        assert_eq!(once, twice);
    }

    #[test]
    fn missing_column_is_schema_error() {
        let err = Raceline::parse("s_m,x_m,y_m,psi_rad,vx_mps\n0,0,0,0,1\n", "rl").unwrap_err();
        assert!(matches!(err, Error::Schema { .. }), "{err}");
    }

    #[test]
    fn header_only_is_empty() {
        let err = Raceline::parse(&format!("{RACELINE_HEADER}\n"), "rl").unwrap_err();
        assert!(matches!(err, Error::EmptyRaceline));
    }
}
