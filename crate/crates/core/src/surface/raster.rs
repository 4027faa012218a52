use nalgebra::Vector2;
use serde::{Deserialize, Serialize};

use super::grid::GridSpec;
use super::{SurfaceClass, SurfacePoint};
use crate::error::{Error, Result};

/// Majority-vote semantic raster. Cell `(i, j)` covers
/// `[origin + (i, j)·cell_size, origin + (i + 1, j + 1)·cell_size)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BevRaster {
    #[serde(flatten)]
    pub grid: GridSpec,
    /// Row-major, y outer: 0 empty, 1 road, 2 lane marking, 3 pedestrian crossing.
    pub class: Vec<SurfaceClass>,
    /// Total votes per cell.
    pub count: Vec<u32>,
    /// Mean position of the votes of the winning class.
    pub centroid: Vec<Option<[f64; 2]>>,
}

impl BevRaster {
    pub fn empty(grid: GridSpec) -> Result<Self> {
        grid.validate()?;
        let n = grid.len();
        Ok(Self { grid, class: vec![SurfaceClass::Empty; n], count: vec![0; n], centroid: vec![None; n] })
    }

    pub fn class_at(&self, i: usize, j: usize) -> SurfaceClass {
        self.class[self.grid.index(i, j)]
    }

    /// Centroid of a cell, falling back to its center.
    pub fn anchor(&self, i: usize, j: usize) -> Vector2<f64> {
        self.centroid[self.grid.index(i, j)].map_or_else(|| self.grid.cell_center(i, j), Vector2::from)
    }

    pub fn validate(&self) -> Result<()> {
        self.grid.validate()?;
        let n = self.grid.len();
        if self.class.len() != n || self.count.len() != n || self.centroid.len() != n {
            return Err(Error::InvalidSpec("raster array length".into()));
        }
        if self.class.iter().zip(&self.count).any(|(c, n)| *c != SurfaceClass::Empty && *n == 0) {
            return Err(Error::InvalidSpec("raster class without votes".into()));
        }
        Ok(())
    }
}

/// Tie-break priority: the rarer class wins.
fn priority(c: SurfaceClass) -> u8 {
    match c {
        SurfaceClass::Empty => 0,
        SurfaceClass::Road => 1,
        SurfaceClass::LaneMarking => 2,
        SurfaceClass::PedCrossing => 3,
    }
}

pub fn rasterize_semantics(points: &[SurfacePoint], grid: &GridSpec) -> Result<BevRaster> {
    let mut out = BevRaster::empty(*grid)?;
    let mut members: Vec<Vec<(SurfaceClass, [f64; 2])>> = vec![Vec::new(); grid.len()];
    for p in points {
        if p.class == SurfaceClass::Empty {
            continue;
        }
        if let Some((i, j)) = grid.cell_of(&Vector2::new(p.position[0], p.position[1])) {
            members[grid.index(i, j)].push((p.class, [p.position[0], p.position[1]]));
        }
    }
    for (k, m) in members.iter_mut().enumerate() {
        if m.is_empty() {
            continue;
        }
        let mut votes = [0u32; 4];
        for (c, _) in m.iter() {
            votes[*c as usize] += 1;
        }
        let winner = [SurfaceClass::Road, SurfaceClass::LaneMarking, SurfaceClass::PedCrossing]
            .into_iter()
            .max_by_key(|c| (votes[*c as usize], priority(*c)))
            .expect("nonempty");
        // sorted summation keeps the centroid independent of input order
        let mut xy: Vec<[f64; 2]> = m.iter().filter(|(c, _)| *c == winner).map(|(_, p)| *p).collect();
        xy.sort_by(|a, b| a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])));
        let n = xy.len() as f64;
        let sx: f64 = xy.iter().map(|p| p[0]).sum();
        let sy: f64 = xy.iter().map(|p| p[1]).sum();
        out.class[k] = winner;
        out.count[k] = m.len() as u32;
        out.centroid[k] = Some([sx / n, sy / n]);
    }
    Ok(out)
}
