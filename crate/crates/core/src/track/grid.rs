use std::path::Path;

use super::CenterlineTrack;
use crate::config::KvConfig;
use crate::error::{Error, Result};

/// Default raster resolution for grids generated from a centerline (m/cell).
pub const DEFAULT_RESOLUTION: f64 = 0.05;

/// Pose of cell (0, 0)'s lower-left corner and the cell size.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GridGeometry {
    pub width: usize,
    pub height: usize,
    pub resolution: f64,
    pub origin_x: f64,
    pub origin_y: f64,
    pub origin_yaw: f64,
}

impl GridGeometry {
    /// World point to continuous grid coordinates in cells.
    #[inline]
    pub fn to_grid(&self, x: f64, y: f64) -> (f64, f64) {
        let dx = x - self.origin_x;
        let dy = y - self.origin_y;
        let (s, c) = self.origin_yaw.sin_cos();
        ((c * dx + s * dy) / self.resolution, (-s * dx + c * dy) / self.resolution)
    }

    /// Cell containing a world point, `None` outside the raster.
    #[inline]
    pub fn cell_of(&self, x: f64, y: f64) -> Option<(usize, usize)> {
        let (gx, gy) = self.to_grid(x, y);
        self.cell_of_grid(gx, gy)
    }

    #[inline]
    pub fn cell_of_grid(&self, gx: f64, gy: f64) -> Option<(usize, usize)> {
        if gx < 0.0 || gy < 0.0 {
            return None;
        }
        let (c, r) = (gx as usize, gy as usize);
        (c < self.width && r < self.height).then_some((c, r))
    }

    pub fn cell_center(&self, col: usize, row: usize) -> (f64, f64) {
        let gx = (col as f64 + 0.5) * self.resolution;
        let gy = (row as f64 + 0.5) * self.resolution;
        let (s, c) = self.origin_yaw.sin_cos();
        (self.origin_x + c * gx - s * gy, self.origin_y + s * gx + c * gy)
    }

    #[inline]
    pub fn index(&self, col: usize, row: usize) -> usize {
        row * self.width + col
    }
}

/// Boolean occupancy raster; row 0 is the bottom of the map.
#[derive(Clone, Debug, PartialEq)]
pub struct OccupancyGrid {
    geometry: GridGeometry,
    occupied: Vec<bool>,
}

impl OccupancyGrid {
    pub fn new(geometry: GridGeometry, occupied: Vec<bool>) -> Result<Self> {
        if !(geometry.resolution > 0.0) || !geometry.resolution.is_finite() {
            return Err(Error::InvalidGrid(format!("resolution must be positive, got {}", geometry.resolution)));
        }
        if geometry.width == 0 || geometry.height == 0 {
            return Err(Error::InvalidGrid("empty raster".into()));
        }
        if occupied.len() != geometry.width * geometry.height {
            return Err(Error::InvalidGrid(format!(
                "cell count {} does not match {}x{}",
                occupied.len(),
                geometry.width,
                geometry.height
            )));
        }
        if occupied.iter().all(|&o| o) {
            return Err(Error::InvalidGrid("no free space".into()));
        }
        Ok(Self { geometry, occupied })
    }

    pub fn geometry(&self) -> &GridGeometry {
        &self.geometry
    }

    pub fn cells(&self) -> &[bool] {
        &self.occupied
    }

    pub fn free_count(&self) -> usize {
        self.occupied.iter().filter(|&&o| !o).count()
    }

    pub fn is_occupied_cell(&self, col: usize, row: usize) -> bool {
        self.occupied[self.geometry.index(col, row)]
    }

    /// Occupancy of a world point; anything off the raster counts as occupied.
    pub fn is_occupied(&self, x: f64, y: f64) -> bool {
        match self.geometry.cell_of(x, y) {
            Some((c, r)) => self.is_occupied_cell(c, r),
            None => true,
        }
    }

    /// Reads a PGM image and its `key=value` sidecar.
    pub fn load(image_path: impl AsRef<Path>, metadata_path: impl AsRef<Path>) -> Result<Self> {
        let image_path = image_path.as_ref();
        let bytes = std::fs::read(image_path).map_err(|e| Error::io(image_path, e))?;
        let meta = KvConfig::load(metadata_path)?;
        Self::from_pgm(&bytes, &meta, &image_path.display().to_string())
    }

    pub fn from_pgm(bytes: &[u8], meta: &KvConfig, context: &str) -> Result<Self> {
        let img = Pgm::parse(bytes, context)?;
        for (key, expected) in [("width", img.width), ("height", img.height)] {
            if let Some(v) = meta.get(key) {
                if v.parse::<usize>().ok() != Some(expected) {
                    return Err(Error::InvalidGrid(format!(
                        "metadata {key}={v} disagrees with image size {}x{}",
                        img.width, img.height
                    )));
                }
            }
        }
        meta.reject_unknown(&[
            "image",
            "width",
            "height",
            "resolution",
            "origin_x",
            "origin_y",
            "origin_yaw",
            "occupied_thresh",
        ])?;
        let resolution = meta
            .get("resolution")
            .ok_or_else(|| Error::Config("grid metadata lacks `resolution`".into()))?;
        let mut geometry = GridGeometry {
            width: img.width,
            height: img.height,
            resolution: resolution
                .parse()
                .map_err(|_| Error::Config(format!("bad resolution `{resolution}`")))?,
            origin_x: 0.0,
            origin_y: 0.0,
            origin_yaw: 0.0,
        };
        meta.read_f64("origin_x", &mut geometry.origin_x)?;
        meta.read_f64("origin_y", &mut geometry.origin_y)?;
        meta.read_f64("origin_yaw", &mut geometry.origin_yaw)?;
        let mut thresh = 0.5;
        meta.read_f64("occupied_thresh", &mut thresh)?;
        let maxval = img.maxval as f64;
        let mut occupied = vec![false; img.width * img.height];
        for row in 0..img.height {
            // image row 0 is the top
            let src = img.height - 1 - row;
            for col in 0..img.width {
                let v = img.pixels[src * img.width + col] as f64;
                occupied[geometry.index(col, row)] = v / maxval <= thresh;
            }
        }
        Self::new(geometry, occupied)
    }

    /// Binary PGM (P5) with free cells white and occupied cells black.
    pub fn to_pgm(&self) -> Vec<u8> {
        let g = &self.geometry;
        let mut out = format!("P5\n{} {}\n255\n", g.width, g.height).into_bytes();
        for src in (0..g.height).rev() {
            for col in 0..g.width {
                out.push(if self.is_occupied_cell(col, src) { 0 } else { 254 });
            }
        }
        out
    }

    pub fn metadata(&self) -> KvConfig {
        let g = &self.geometry;
        let mut m = KvConfig::default();
        m.insert("resolution", g.resolution);
        m.insert("origin_x", g.origin_x);
        m.insert("origin_y", g.origin_y);
        m.insert("origin_yaw", g.origin_yaw);
        m.insert("occupied_thresh", 0.5);
        m
    }

    pub fn save(&self, image_path: impl AsRef<Path>, metadata_path: impl AsRef<Path>) -> Result<()> {
        let image_path = image_path.as_ref();
        std::fs::write(image_path, self.to_pgm()).map_err(|e| Error::io(image_path, e))?;
        let meta_path = metadata_path.as_ref();
        std::fs::write(meta_path, self.metadata().to_text()).map_err(|e| Error::io(meta_path, e))
    }

    /// Rasterises the drivable corridor of a centerline track.
    ///
    /// A cell is free when its distance to the closest centerline segment is
    /// within the width on that side, interpolated along the segment.
    pub fn from_centerline(track: &CenterlineTrack, resolution: f64) -> Result<Self> {
        let pts = track.points();
        let n = pts.len();
        let max_w = track
            .w_left()
            .iter()
            .chain(track.w_right())
            .copied()
            .fold(0.0, f64::max);
        let pad = max_w + 1.0;
        let (mut x0, mut y0, mut x1, mut y1) = (f64::MAX, f64::MAX, f64::MIN, f64::MIN);
        for p in pts {
            x0 = x0.min(p[0]);
            y0 = y0.min(p[1]);
            x1 = x1.max(p[0]);
            y1 = y1.max(p[1]);
        }
        let geometry = GridGeometry {
            width: ((x1 - x0 + 2.0 * pad) / resolution).ceil() as usize,
            height: ((y1 - y0 + 2.0 * pad) / resolution).ceil() as usize,
            resolution,
            origin_x: x0 - pad,
            origin_y: y0 - pad,
            origin_yaw: 0.0,
        };
        let cells = geometry.width * geometry.height;
        let mut best = vec![f64::INFINITY; cells];
        let mut free = vec![false; cells];
        let (wl, wr) = (track.w_left(), track.w_right());
        for i in 0..n {
            let j = (i + 1) % n;
            let (a, b) = (pts[i], pts[j]);
            let reach = max_w + resolution;
            let c0 = (((a[0].min(b[0]) - reach - geometry.origin_x) / resolution).floor().max(0.0)) as usize;
            let r0 = (((a[1].min(b[1]) - reach - geometry.origin_y) / resolution).floor().max(0.0)) as usize;
            let c1 = ((((a[0].max(b[0]) + reach - geometry.origin_x) / resolution).ceil()) as usize).min(geometry.width);
            let r1 = ((((a[1].max(b[1]) + reach - geometry.origin_y) / resolution).ceil()) as usize).min(geometry.height);
            let (dx, dy) = (b[0] - a[0], b[1] - a[1]);
            let l2 = dx * dx + dy * dy;
            for row in r0..r1 {
                for col in c0..c1 {
                    let (px, py) = geometry.cell_center(col, row);
                    let t = (((px - a[0]) * dx + (py - a[1]) * dy) / l2).clamp(0.0, 1.0);
                    let ex = px - (a[0] + t * dx);
                    let ey = py - (a[1] + t * dy);
                    let d = ex.hypot(ey);
                    let k = geometry.index(col, row);
                    if d < best[k] {
                        best[k] = d;
                        let left = dx * ey - dy * ex >= 0.0;
                        let w = if left {
                            wl[i] + t * (wl[j] - wl[i])
                        } else {
                            wr[i] + t * (wr[j] - wr[i])
                        };
                        free[k] = d <= w;
                    }
                }
            }
        }
        Self::new(geometry, free.into_iter().map(|f| !f).collect())
    }

}

struct Pgm {
    width: usize,
    height: usize,
    maxval: u16,
    pixels: Vec<u16>,
}

impl Pgm {
    fn parse(bytes: &[u8], context: &str) -> Result<Self> {
        let err = |offset: usize, message: &str| Error::Parse {
            context: context.to_string(),
            offset,
            message: message.to_string(),
        };
        let mut pos = 0;
        let token = |pos: &mut usize| -> Result<(usize, String)> {
            loop {
                while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
                    *pos += 1;
                }
                if *pos < bytes.len() && bytes[*pos] == b'#' {
                    while *pos < bytes.len() && bytes[*pos] != b'\n' {
                        *pos += 1;
                    }
                    continue;
                }
                break;
            }
            let start = *pos;
            while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() {
                *pos += 1;
            }
            if start == *pos {
                return Err(err(start, "unexpected end of file"));
            }
            Ok((start, String::from_utf8_lossy(&bytes[start..*pos]).into_owned()))
        };
        let (_, magic) = token(&mut pos)?;
        let binary = match magic.as_str() {
            "P5" => true,
            "P2" => false,
            _ => return Err(err(0, "expected magic `P2` or `P5`")),
        };
        let number = |pos: &mut usize, what: &str| -> Result<usize> {
            let (at, t) = token(pos)?;
            t.parse::<usize>()
                .map_err(|_| err(at, &format!("invalid {what} `{t}`")))
        };
        let width = number(&mut pos, "width")?;
        let height = number(&mut pos, "height")?;
        let maxval_at = pos;
        let maxval = number(&mut pos, "maxval")?;
        if width == 0 || height == 0 {
            return Err(err(0, "zero image dimension"));
        }
        if maxval == 0 || maxval > 65535 {
            return Err(err(maxval_at, "maxval out of range"));
        }
        let count = width * height;
        let mut pixels = Vec::with_capacity(count);
        if binary {
            // exactly one whitespace byte separates the header from the raster
            pos += 1;
            let wide = maxval > 255;
            let need = count * if wide { 2 } else { 1 };
            if bytes.len() < pos + need {
                return Err(err(bytes.len(), "raster data truncated"));
            }
            for k in 0..count {
                let v = if wide {
                    u16::from_be_bytes([bytes[pos + 2 * k], bytes[pos + 2 * k + 1]])
                } else {
                    bytes[pos + k] as u16
                };
                pixels.push(v);
            }
        } else {
            for _ in 0..count {
                let v = number(&mut pos, "pixel")?;
                if v > maxval {
                    return Err(err(pos, "pixel exceeds maxval"));
                }
                pixels.push(v as u16);
            }
        }
        Ok(Self {
            width,
            height,
            maxval: maxval as u16,
            pixels,
        })
    }
}
