use std::path::Path;

use crate::csvio::{fmt_sig, parse_fields, Header};
use crate::error::{Error, Result};

/// Closed centerline with per-point left and right widths.
///
/// The last point connects back to the first; `s[i]` is the arc length at
/// point `i` and `length` includes the closing segment.
#[derive(Clone, Debug, PartialEq)]
pub struct CenterlineTrack {
    points: Vec<[f64; 2]>,
    w_left: Vec<f64>,
    w_right: Vec<f64>,
    s: Vec<f64>,
    length: f64,
}

fn segments_intersect(a: [f64; 2], b: [f64; 2], c: [f64; 2], d: [f64; 2]) -> bool {
    let orient = |p: [f64; 2], q: [f64; 2], r: [f64; 2]| {
        (q[0] - p[0]) * (r[1] - p[1]) - (q[1] - p[1]) * (r[0] - p[0])
    };
    let o1 = orient(a, b, c);
    let o2 = orient(a, b, d);
    let o3 = orient(c, d, a);
    let o4 = orient(c, d, b);
    o1 * o2 < 0.0 && o3 * o4 < 0.0
}

impl CenterlineTrack {
    pub fn new(mut points: Vec<[f64; 2]>, mut w_left: Vec<f64>, mut w_right: Vec<f64>) -> Result<Self> {
        if points.len() != w_left.len() || points.len() != w_right.len() {
            return Err(Error::InvalidTrack("column lengths differ".into()));
        }
        // an explicitly repeated first point closes the loop
        if points.len() > 1 && points[0] == points[points.len() - 1] {
            points.pop();
            w_left.pop();
            w_right.pop();
        }
        if points.len() < 4 {
            return Err(Error::InvalidTrack(format!(
                "too few points: {} (need at least 4)",
                points.len()
            )));
        }
        for (i, (&l, &r)) in w_left.iter().zip(&w_right).enumerate() {
            if !(l > 0.0 && r > 0.0) {
                return Err(Error::InvalidTrack(format!("non-positive width at point {i}")));
            }
        }
        let n = points.len();
        let mut seg = Vec::with_capacity(n);
        for i in 0..n {
            let a = points[i];
            let b = points[(i + 1) % n];
            let l = (b[0] - a[0]).hypot(b[1] - a[1]);
            if !(l > 0.0) {
                return Err(Error::InvalidTrack(format!(
                    "consecutive points {i} and {} coincide",
                    (i + 1) % n
                )));
            }
            seg.push(l);
        }
        let mut sorted = seg[..n - 1].to_vec();
        sorted.sort_by(f64::total_cmp);
        let median = sorted[sorted.len() / 2];
        if seg[n - 1] > 5.0 * median.max(sorted[sorted.len() - 1] * 0.5) {
            return Err(Error::InvalidTrack(format!(
                "open loop: closing gap {:.3} m vs typical spacing {:.3} m",
                seg[n - 1], median
            )));
        }
        for i in 0..n {
            for j in (i + 2)..n {
                if i == 0 && j == n - 1 {
                    continue;
                }
                if segments_intersect(points[i], points[(i + 1) % n], points[j], points[(j + 1) % n]) {
                    return Err(Error::InvalidTrack(format!(
                        "self-crossing between segments {i} and {j}"
                    )));
                }
            }
        }
        let mut s = Vec::with_capacity(n);
        let mut acc = 0.0;
        for l in &seg {
            s.push(acc);
            acc += l;
        }
        Ok(Self {
            points,
            w_left,
            w_right,
            s,
            length: acc,
        })
    }

    /// Constant-width track.
    pub fn with_uniform_width(points: Vec<[f64; 2]>, half_width: f64) -> Result<Self> {
        let n = points.len();
        Self::new(points, vec![half_width; n], vec![half_width; n])
    }

    pub fn parse(text: &str, context: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty());
        let (_, header_line) = lines
            .next()
            .ok_or_else(|| Error::schema(context, 1, "empty file"))?;
        let header = Header::parse(header_line);
        let ix = header.require(&["x_m", "x"], context)?;
        let iy = header.require(&["y_m", "y"], context)?;
        let il = header.require(&["w_left_m", "w_tr_left_m"], context)?;
        let ir = header.require(&["w_right_m", "w_tr_right_m"], context)?;
        let mut points = Vec::new();
        let mut wl = Vec::new();
        let mut wr = Vec::new();
        for (idx, line) in lines {
            if line.trim_start().starts_with('#') {
                continue;
            }
            let f = parse_fields(line, idx + 1, header.len(), context)?;
            points.push([f[ix], f[iy]]);
            wl.push(f[il]);
            wr.push(f[ir]);
        }
        Self::new(points, wl, wr)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, &path.display().to_string())
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("x_m,y_m,w_left_m,w_right_m\n");
        for i in 0..self.len() {
            out.push_str(&format!(
                "{},{},{},{}\n",
                fmt_sig(self.points[i][0], 12),
                fmt_sig(self.points[i][1], 12),
                fmt_sig(self.w_left[i], 12),
                fmt_sig(self.w_right[i], 12)
            ));
        }
        out
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[[f64; 2]] {
        &self.points
    }

    pub fn w_left(&self) -> &[f64] {
        &self.w_left
    }

    pub fn w_right(&self) -> &[f64] {
        &self.w_right
    }

    pub fn arc_lengths(&self) -> &[f64] {
        &self.s
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn min_width(&self) -> f64 {
        self.w_left
            .iter()
            .chain(&self.w_right)
            .copied()
            .fold(f64::INFINITY, f64::min)
    }

    /// Length of the segment from point `i` to point `i + 1` (wrapping).
    pub fn segment_length(&self, i: usize) -> f64 {
        let n = self.len();
        let next = if i + 1 == n { self.length } else { self.s[i + 1] };
        next - self.s[i]
    }

    /// Same loop with indexing rotated so that point `k` comes first.
    pub fn rotated(&self, k: usize) -> Result<Self> {
        let n = self.len();
        let idx: Vec<usize> = (0..n).map(|i| (i + k) % n).collect();
        Self::new(
            idx.iter().map(|&i| self.points[i]).collect(),
            idx.iter().map(|&i| self.w_left[i]).collect(),
            idx.iter().map(|&i| self.w_right[i]).collect(),
        )
    }

    /// Fails unless every width clears `half_width`.
    pub fn check_clearance(&self, half_width: f64) -> Result<()> {
        if self.min_width() <= half_width {
            return Err(Error::InvalidTrack(format!(
                "track width {:.3} m does not clear vehicle half-width {:.3} m",
                self.min_width(),
                half_width
            )));
        }
        Ok(())
    }
}
