//! Track geometry: centerlines, arc-length parameterisation, occupancy rasters.

mod centerline;
mod edt;
pub mod grid;
mod path;
pub mod shapes;
mod stats;

pub use centerline::CenterlineTrack;
pub use edt::DistanceField;
pub use grid::{GridGeometry, OccupancyGrid, DEFAULT_RESOLUTION};
pub use path::{PathParameterization, PathPoint, Projection};
pub use shapes::ShippedTrack;
pub use stats::{smoothed_curvature, track_stats, TrackStats, CORNER_KAPPA, STRAIGHT_KAPPA};

/// A centerline together with its parameterisation, raster and distance field.
#[derive(Clone, Debug)]
pub struct TrackMap {
    pub name: String,
    pub centerline: CenterlineTrack,
    pub path: PathParameterization,
    pub grid: OccupancyGrid,
    pub field: DistanceField,
}

impl TrackMap {
    pub fn from_centerline(name: impl Into<String>, centerline: CenterlineTrack) -> crate::Result<Self> {
        let grid = OccupancyGrid::from_centerline(&centerline, DEFAULT_RESOLUTION)?;
        Ok(Self::with_grid(name, centerline, grid))
    }

    pub fn with_grid(name: impl Into<String>, centerline: CenterlineTrack, grid: OccupancyGrid) -> Self {
        let path = PathParameterization::new(&centerline);
        let field = DistanceField::new(&grid);
        Self {
            name: name.into(),
            centerline,
            path,
            grid,
            field,
        }
    }

    pub fn shipped(track: ShippedTrack) -> Self {
        Self::from_centerline(track.name(), track.build()).expect("shipped track rasterises")
    }
}
