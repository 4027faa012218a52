//! Road surface reconstruction: semantic road points from the sparse model
//! and ego poses, a smooth elevation grid, and a majority-vote BEV raster.

mod elevation;
mod grid;
mod raster;

use nalgebra::{Vector2, Vector3};
use serde::{Deserialize, Serialize};

pub use elevation::{elevation_objective, fit_elevation, query_elevation, ElevationField};
pub use grid::GridSpec;
pub use raster::{rasterize_semantics, BevRaster};

use crate::error::{Error, Result};
use crate::scenario::{PoseTable, TrackClass};
use crate::sfm::SparseModel;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(into = "u8", try_from = "u8")]
#[repr(u8)]
pub enum SurfaceClass {
    #[default]
    Empty = 0,
    Road = 1,
    LaneMarking = 2,
    PedCrossing = 3,
}

impl From<SurfaceClass> for u8 {
    fn from(c: SurfaceClass) -> u8 {
        c as u8
    }
}

impl TryFrom<u8> for SurfaceClass {
    type Error = Error;
    fn try_from(v: u8) -> Result<Self> {
        match v {
            0 => Ok(SurfaceClass::Empty),
            1 => Ok(SurfaceClass::Road),
            2 => Ok(SurfaceClass::LaneMarking),
            3 => Ok(SurfaceClass::PedCrossing),
            _ => Err(Error::InvalidSpec(format!("unknown surface class {v}"))),
        }
    }
}

impl SurfaceClass {
    pub fn from_track(c: TrackClass) -> Option<Self> {
        match c {
            TrackClass::Road => Some(SurfaceClass::Road),
            TrackClass::LaneMarking => Some(SurfaceClass::LaneMarking),
            TrackClass::PedCrossing => Some(SurfaceClass::PedCrossing),
            TrackClass::OffRoad => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SurfacePoint {
    pub position: [f64; 3],
    pub class: SurfaceClass,
}

impl SurfacePoint {
    pub fn position_vec(&self) -> Vector3<f64> {
        Vector3::from(self.position)
    }
}

/// Road-surface points of the sparse model plus one ground contact point
/// under every body pose.
pub fn collect_surface_points(model: &SparseModel, poses: &PoseTable, wheel_offset: f64) -> Vec<SurfacePoint> {
    let mut out: Vec<SurfacePoint> = model
        .points
        .iter()
        .filter_map(|p| SurfaceClass::from_track(p.class).map(|class| SurfacePoint { position: p.position, class }))
        .collect();
    out.extend(poses.values().map(|p| {
        let t = p.translation;
        SurfacePoint { position: [t.x, t.y, t.z - wheel_offset], class: SurfaceClass::Road }
    }));
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SurfaceConfig {
    /// BEV raster cell size, meters.
    pub cell_size: f64,
    /// Elevation node spacing, meters.
    pub elevation_cell_size: f64,
    /// Laplacian smoothing weight.
    pub lambda: f64,
    /// Padding around the data, meters.
    pub margin: f64,
}

impl Default for SurfaceConfig {
    fn default() -> Self {
        Self { cell_size: 0.5, elevation_cell_size: 1.0, lambda: 1.0, margin: 4.0 }
    }
}

impl SurfaceConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("cell_size", self.cell_size),
            ("elevation_cell_size", self.elevation_cell_size),
            ("lambda", self.lambda),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::InvalidSpec(format!("surface.{name}")));
            }
        }
        if !(self.margin >= 0.0) {
            return Err(Error::InvalidSpec("surface.margin".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoadSurfaceModel {
    pub elevation: ElevationField,
    pub semantics: BevRaster,
}

/// Fits the elevation field and rasterizes the semantics over a grid that
/// covers every point with `margin` to spare.
pub fn reconstruct_surface(points: &[SurfacePoint], cfg: &SurfaceConfig) -> Result<RoadSurfaceModel> {
    cfg.validate()?;
    let xy: Vec<Vector2<f64>> = points.iter().map(|p| Vector2::new(p.position[0], p.position[1])).collect();
    let raster_grid = GridSpec::covering(&xy, cfg.cell_size, cfg.margin)?;
    // the elevation grid spans at least the raster
    let corners = [
        raster_grid.node(0, 0),
        raster_grid.node(raster_grid.nx, raster_grid.ny),
    ];
    let elev_grid = GridSpec::covering(&corners, cfg.elevation_cell_size, 0.0)?;
    let xyz: Vec<Vector3<f64>> = points.iter().map(|p| p.position_vec()).collect();
    let elevation = fit_elevation(&xyz, &elev_grid, cfg.lambda)?;
    let semantics = rasterize_semantics(points, &raster_grid)?;
    Ok(RoadSurfaceModel { elevation, semantics })
}
