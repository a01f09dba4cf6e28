use super::grid::{GridGeometry, OccupancyGrid};

/// Euclidean distance from each cell centre to the nearest occupied cell centre (m).
#[derive(Clone, Debug)]
pub struct DistanceField {
    geometry: GridGeometry,
    dist: Vec<f64>,
    occupied: Vec<bool>,
}

const INF: f64 = 1e20;

/// One-dimensional squared distance transform of Felzenszwalb and Huttenlocher.
fn edt_1d(f: &[f64], d: &mut [f64], v: &mut [usize], z: &mut [f64]) {
    let n = f.len();
    let mut k = 0;
    v[0] = 0;
    z[0] = -INF;
    z[1] = INF;
    for q in 1..n {
        let qf = q as f64;
        loop {
            let p = v[k];
            let pf = p as f64;
            let s = ((f[q] + qf * qf) - (f[p] + pf * pf)) / (2.0 * (qf - pf));
            if s <= z[k] {
                if k == 0 {
                    // every earlier parabola is dominated
                    v[0] = q;
                    z[0] = -INF;
                    z[1] = INF;
                    break;
                }
                k -= 1;
            } else {
                k += 1;
                v[k] = q;
                z[k] = s;
                z[k + 1] = INF;
                break;
            }
        }
    }
    k = 0;
    for q in 0..n {
        let qf = q as f64;
        while z[k + 1] < qf {
            k += 1;
        }
        let p = v[k] as f64;
        d[q] = (qf - p) * (qf - p) + f[v[k]];
    }
}

impl DistanceField {
    pub fn new(grid: &OccupancyGrid) -> Self {
        let g = *grid.geometry();
        let (w, h) = (g.width, g.height);
        let mut sq: Vec<f64> = grid.cells().iter().map(|&o| if o { 0.0 } else { INF }).collect();
        let m = w.max(h);
        let mut f = vec![0.0; m];
        let mut d = vec![0.0; m];
        let mut v = vec![0usize; m];
        let mut z = vec![0.0; m + 1];
        for c in 0..w {
            for r in 0..h {
                f[r] = sq[r * w + c];
            }
            edt_1d(&f[..h], &mut d[..h], &mut v, &mut z);
            for r in 0..h {
                sq[r * w + c] = d[r];
            }
        }
        for r in 0..h {
            f[..w].copy_from_slice(&sq[r * w..(r + 1) * w]);
            edt_1d(&f[..w], &mut d[..w], &mut v, &mut z);
            sq[r * w..(r + 1) * w].copy_from_slice(&d[..w]);
        }
        let dist = sq
            .into_iter()
            .map(|s| if s >= INF * 0.5 { f64::INFINITY } else { s.sqrt() * g.resolution })
            .collect();
        Self {
            geometry: g,
            dist,
            occupied: grid.cells().to_vec(),
        }
    }

    pub fn geometry(&self) -> &GridGeometry {
        &self.geometry
    }

    pub fn cell(&self, col: usize, row: usize) -> f64 {
        self.dist[self.geometry.index(col, row)]
    }

    pub fn values(&self) -> &[f64] {
        &self.dist
    }

    /// Value of the cell containing a world point; zero off the raster.
    #[inline]
    pub fn at(&self, x: f64, y: f64) -> f64 {
        match self.geometry.cell_of(x, y) {
            Some((c, r)) => self.dist[self.geometry.index(c, r)],
            None => 0.0,
        }
    }

    #[inline]
    fn blocked_grid(&self, gx: f64, gy: f64) -> bool {
        match self.geometry.cell_of_grid(gx, gy) {
            Some((c, r)) => self.occupied[self.geometry.index(c, r)],
            None => true,
        }
    }

    #[inline]
    fn dist_grid(&self, gx: f64, gy: f64) -> f64 {
        match self.geometry.cell_of_grid(gx, gy) {
            Some((c, r)) => self.dist[self.geometry.index(c, r)],
            None => 0.0,
        }
    }

    /// Range to the first occupied cell along a ray, clipped to `max_range`.
    ///
    /// Marches in steps of the local clearance and refines the final crossing
    /// by bisection to the boundary of the hit cell.
    pub fn ray_march(&self, x: f64, y: f64, angle: f64, max_range: f64) -> f64 {
        let g = &self.geometry;
        let res = g.resolution;
        let (gx0, gy0) = g.to_grid(x, y);
        let (s, c) = (angle - g.origin_yaw).sin_cos();
        let max_cells = max_range / res;
        let mut t = 0.0;
        let mut prev = 0.0;
        loop {
            let gx = gx0 + c * t;
            let gy = gy0 + s * t;
            if self.blocked_grid(gx, gy) {
                break;
            }
            if t >= max_cells {
                return max_range;
            }
            let d = self.dist_grid(gx, gy) / res;
            prev = t;
            t += (d - 0.5).max(0.5);
            if t > max_cells {
                // last probe exactly at the range limit
                t = max_cells;
                if !self.blocked_grid(gx0 + c * t, gy0 + s * t) {
                    return max_range;
                }
                break;
            }
        }
        let (mut lo, mut hi) = (prev, t);
        for _ in 0..12 {
            let mid = 0.5 * (lo + hi);
            if self.blocked_grid(gx0 + c * mid, gy0 + s * mid) {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        (0.5 * (lo + hi) * res).min(max_range)
    }
}
