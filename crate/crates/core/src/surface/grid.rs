use nalgebra::Vector2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Axis-aligned regular grid. `origin` is the minimum-x, minimum-y corner;
/// arrays over the grid are row-major with y as the outer index.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub origin: [f64; 2],
    pub cell_size: f64,
    pub nx: usize,
    pub ny: usize,
}

impl GridSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.cell_size > 0.0) || !self.cell_size.is_finite() {
            return Err(Error::InvalidSpec("grid.cell_size".into()));
        }
        if self.nx == 0 || self.ny == 0 {
            return Err(Error::InvalidSpec("grid.size".into()));
        }
        if !self.origin.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidSpec("grid.origin".into()));
        }
        Ok(())
    }

    /// Smallest grid aligned to multiples of `cell_size` that covers every
    /// point expanded by `margin`.
    pub fn covering<'a>(points: impl IntoIterator<Item = &'a Vector2<f64>>, cell_size: f64, margin: f64) -> Result<Self> {
        let mut lo = Vector2::repeat(f64::INFINITY);
        let mut hi = Vector2::repeat(f64::NEG_INFINITY);
        for p in points {
            lo = lo.inf(p);
            hi = hi.sup(p);
        }
        if !lo.x.is_finite() {
            return Err(Error::NoSupport);
        }
        let x0 = ((lo.x - margin) / cell_size).floor() * cell_size;
        let y0 = ((lo.y - margin) / cell_size).floor() * cell_size;
        let nx = ((hi.x + margin - x0) / cell_size).ceil() as usize + 1;
        let ny = ((hi.y + margin - y0) / cell_size).ceil() as usize + 1;
        let g = Self { origin: [x0, y0], cell_size, nx, ny };
        g.validate()?;
        Ok(g)
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn index(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }

    /// Location of grid index `(i, j)` (a node, or a cell's minimum corner).
    pub fn node(&self, i: usize, j: usize) -> Vector2<f64> {
        Vector2::new(self.origin[0] + i as f64 * self.cell_size, self.origin[1] + j as f64 * self.cell_size)
    }

    pub fn cell_center(&self, i: usize, j: usize) -> Vector2<f64> {
        self.node(i, j) + Vector2::repeat(0.5 * self.cell_size)
    }

    /// Cell containing `p`, treating the grid as `nx × ny` cells.
    pub fn cell_of(&self, p: &Vector2<f64>) -> Option<(usize, usize)> {
        let u = (p.x - self.origin[0]) / self.cell_size;
        let v = (p.y - self.origin[1]) / self.cell_size;
        if u < 0.0 || v < 0.0 || !u.is_finite() || !v.is_finite() {
            return None;
        }
        let (i, j) = (u.floor() as usize, v.floor() as usize);
        (i < self.nx && j < self.ny).then_some((i, j))
    }

    /// Continuous cell coordinates of `p`.
    pub fn to_cell_coords(&self, p: &Vector2<f64>) -> Vector2<f64> {
        Vector2::new((p.x - self.origin[0]) / self.cell_size, (p.y - self.origin[1]) / self.cell_size)
    }

    pub fn from_cell_coords(&self, c: &Vector2<f64>) -> Vector2<f64> {
        Vector2::new(self.origin[0] + c.x * self.cell_size, self.origin[1] + c.y * self.cell_size)
    }
}
