use nalgebra::{DVector, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use super::grid::GridSpec;
use crate::error::{Error, Result};
use crate::linalg::ProfileMatrix;

/// Heights on the nodes of a grid; node `(i, j)` sits at `grid.node(i, j)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ElevationField {
    #[serde(flatten)]
    pub grid: GridSpec,
    /// Row-major, y outer.
    pub heights: Vec<f64>,
}

/// Bilinear stencil: node indices and weights.
fn stencil(grid: &GridSpec, p: &Vector2<f64>) -> Option<[(usize, usize, f64); 4]> {
    let c = grid.to_cell_coords(p);
    let (mx, my) = ((grid.nx - 1) as f64, (grid.ny - 1) as f64);
    if !(c.x >= 0.0 && c.y >= 0.0 && c.x <= mx && c.y <= my) {
        return None;
    }
    let i = (c.x.floor() as usize).min(grid.nx - 2);
    let j = (c.y.floor() as usize).min(grid.ny - 2);
    let (u, v) = (c.x - i as f64, c.y - j as f64);
    Some([
        (i, j, (1.0 - u) * (1.0 - v)),
        (i + 1, j, u * (1.0 - v)),
        (i, j + 1, (1.0 - u) * v),
        (i + 1, j + 1, u * v),
    ])
}

impl ElevationField {
    pub fn new(grid: GridSpec, heights: Vec<f64>) -> Result<Self> {
        grid.validate()?;
        if grid.nx < 2 || grid.ny < 2 {
            return Err(Error::InvalidSpec("elevation grid needs at least 2×2 nodes".into()));
        }
        if heights.len() != grid.len() || !heights.iter().all(|h| h.is_finite()) {
            return Err(Error::InvalidSpec("elevation heights".into()));
        }
        Ok(Self { grid, heights })
    }

    pub fn constant(grid: GridSpec, z: f64) -> Result<Self> {
        Self::new(grid, vec![z; grid.len()])
    }

    pub fn height(&self, i: usize, j: usize) -> f64 {
        self.heights[self.grid.index(i, j)]
    }

    pub fn contains(&self, p: &Vector2<f64>) -> bool {
        stencil(&self.grid, p).is_some()
    }

    /// Graph-Laplacian energy `Σ_nodes (Σ_neighbors (h_n − h_i))²`.
    pub fn laplacian_energy(&self) -> f64 {
        let g = &self.grid;
        let mut e = 0.0;
        for j in 0..g.ny {
            for i in 0..g.nx {
                let h = self.height(i, j);
                let mut l = 0.0;
                for (ni, nj) in neighbors(g, i, j) {
                    l += self.height(ni, nj) - h;
                }
                e += l * l;
            }
        }
        e
    }
}

fn neighbors(g: &GridSpec, i: usize, j: usize) -> impl Iterator<Item = (usize, usize)> {
    let (nx, ny) = (g.nx, g.ny);
    [(i.wrapping_sub(1), j), (i + 1, j), (i, j.wrapping_sub(1)), (i, j + 1)].into_iter().filter(move |&(a, b)| a < nx && b < ny)
}

/// Bilinear interpolation of the field at `xy`.
pub fn query_elevation(field: &ElevationField, xy: &Vector2<f64>) -> Result<f64> {
    let s = stencil(&field.grid, xy).ok_or(Error::OutOfExtent { x: xy.x, y: xy.y })?;
    Ok(s.iter().map(|&(i, j, w)| w * field.height(i, j)).sum())
}

/// Objective minimized by [`fit_elevation`].
pub fn elevation_objective(field: &ElevationField, points: &[Vector3<f64>], lambda: f64) -> f64 {
    let data: f64 = points
        .iter()
        .filter_map(|p| query_elevation(field, &p.xy()).ok().map(|z| (z - p.z).powi(2)))
        .sum();
    data + lambda * field.laplacian_energy()
}

/// Least-squares bilinear grid fit with graph-Laplacian smoothing. Points
/// outside the grid are ignored.
pub fn fit_elevation(points: &[Vector3<f64>], grid: &GridSpec, lambda: f64) -> Result<ElevationField> {
    grid.validate()?;
    if !(lambda > 0.0) || !lambda.is_finite() {
        return Err(Error::InvalidSpec("surface.lambda".into()));
    }
    if grid.nx < 2 || grid.ny < 2 {
        return Err(Error::InvalidSpec("elevation grid needs at least 2×2 nodes".into()));
    }
    // order unknowns along the longer axis so the band is as narrow as possible
    let x_inner = grid.nx <= grid.ny;
    let inner = if x_inner { grid.nx } else { grid.ny };
    let unknown = |i: usize, j: usize| if x_inner { j * grid.nx + i } else { i * grid.ny + j };
    let n = grid.len();
    let first: Vec<usize> = (0..n).map(|k| k.saturating_sub(2 * inner)).collect();
    let mut h = ProfileMatrix::new(first);
    let mut rhs = DVector::zeros(n);
    let mut supported = 0usize;

    for p in points {
        let Some(s) = stencil(grid, &p.xy()) else { continue };
        supported += 1;
        let idx = s.map(|(i, j, w)| (unknown(i, j), w));
        for (a, wa) in idx {
            rhs[a] += wa * p.z;
            for (b, wb) in idx {
                if b <= a {
                    h.add(a, b, wa * wb);
                }
            }
        }
    }
    if supported == 0 {
        return Err(Error::NoSupport);
    }
    for j in 0..grid.ny {
        for i in 0..grid.nx {
            let mut row: Vec<(usize, f64)> = neighbors(grid, i, j).map(|(a, b)| (unknown(a, b), 1.0)).collect();
            let deg = row.len() as f64;
            row.push((unknown(i, j), -deg));
            for &(a, ca) in &row {
                for &(b, cb) in &row {
                    if b <= a {
                        h.add(a, b, lambda * ca * cb);
                    }
                }
            }
        }
    }
    let sol = h.cholesky().ok_or(Error::NoSupport)?.solve(&rhs);
    let mut heights = vec![0.0; n];
    for j in 0..grid.ny {
        for i in 0..grid.nx {
            heights[grid.index(i, j)] = sol[unknown(i, j)];
        }
    }
    ElevationField::new(*grid, heights)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn grid(nx: usize, ny: usize, cell: f64) -> GridSpec {
        GridSpec { origin: [0.0, 0.0], cell_size: cell, nx, ny }
    }

    #[test]
    fn constant_surface() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let pts: Vec<Vector3<f64>> =
            (0..50).map(|_| Vector3::new(rng.random_range(0.0..9.0), rng.random_range(0.0..4.0), 1.7)).collect();
        let f = fit_elevation(&pts, &grid(19, 9, 0.5), 1.0).unwrap();
        assert!(f.heights.iter().all(|h| (h - 1.7).abs() <= 1e-9));
        // a single point still pins the constant mode
        let f = fit_elevation(&pts[..1], &grid(19, 9, 0.5), 1.0).unwrap();
        assert!(f.heights.iter().all(|h| (h - 1.7).abs() <= 1e-9));
    }

    #[test]
    fn sinusoid_with_noise() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let noise = Normal::new(0.0, 0.01).unwrap();
        let g = grid(81, 41, 0.5);
        let truth = |x: f64| 0.1 * (x / 10.0).sin();
        let pts: Vec<Vector3<f64>> = (0..2000)
            .map(|_| {
                let (x, y) = (rng.random_range(0.0..40.0), rng.random_range(0.0..20.0));
                Vector3::new(x, y, truth(x) + noise.sample(&mut rng))
            })
            .collect();
        let f = fit_elevation(&pts, &g, 1.0).unwrap();
        let mut supported = vec![false; g.len()];
        for p in &pts {
            if let Some((i, j)) = g.cell_of(&p.xy()) {
                supported[g.index(i, j)] = true;
            }
        }
        let (mut sum, mut n) = (0.0, 0);
        for j in 0..g.ny - 1 {
            for i in 0..g.nx - 1 {
                if supported[g.index(i, j)] {
                    let c = g.cell_center(i, j);
                    sum += (query_elevation(&f, &c).unwrap() - truth(c.x)).powi(2);
                    n += 1;
                }
            }
        }
        let rms = (sum / n as f64).sqrt();
        assert!(rms <= 0.02, "rms {rms}");
    }

    #[test]
    fn errors() {
        let g = grid(5, 5, 1.0);
        assert!(matches!(fit_elevation(&[Vector3::new(50.0, 0.0, 0.0)], &g, 1.0), Err(Error::NoSupport)));
        assert!(matches!(fit_elevation(&[Vector3::new(1.0, 1.0, 0.0)], &g, 0.0), Err(Error::InvalidSpec(_))));
        let f = ElevationField::constant(g, 0.0).unwrap();
        assert!(matches!(query_elevation(&f, &Vector2::new(-0.1, 1.0)), Err(Error::OutOfExtent { .. })));
        assert!(matches!(query_elevation(&f, &Vector2::new(1.0, 4.01)), Err(Error::OutOfExtent { .. })));
    }

    #[test]
    fn bilinear_queries() {
        let g = grid(2, 2, 1.0);
        let f = ElevationField::new(g, vec![0.0, 0.0, 0.0, 4.0]).unwrap();
        assert_eq!(query_elevation(&f, &Vector2::new(0.5, 0.5)).unwrap(), 1.0);
        assert_eq!(query_elevation(&f, &Vector2::new(1.0, 1.0)).unwrap(), 4.0);
        let g = grid(4, 3, 0.5);
        let f = ElevationField::new(g, (0..12).map(|k| k as f64 * 0.37).collect()).unwrap();
        for j in 0..3 {
            for i in 0..4 {
                assert_eq!(query_elevation(&f, &g.node(i, j)).unwrap(), f.height(i, j));
            }
        }
    }

    fn scattered(seed: u64) -> (GridSpec, Vec<Vector3<f64>>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = grid(12, 7, 1.0);
        let pts = (0..60)
            .map(|_| {
                let (x, y) = (rng.random_range(0.0..11.0), rng.random_range(0.0..6.0));
                Vector3::new(x, y, 0.3 * x - 0.2 * y + rng.random_range(-0.5..0.5))
            })
            .collect();
        (g, pts)
    }

    #[test]
    fn solution_is_a_strict_minimum() {
        let (g, pts) = scattered(3);
        let f = fit_elevation(&pts, &g, 0.5).unwrap();
        let base = elevation_objective(&f, &pts, 0.5);
        for k in 0..g.len() {
            for d in [1e-3, -1e-3] {
                let mut p = f.clone();
                p.heights[k] += d;
                assert!(elevation_objective(&p, &pts, 0.5) > base);
            }
        }
    }

    #[test]
    fn smoothing_is_monotone() {
        let (g, pts) = scattered(4);
        let energies: Vec<f64> =
            [0.1, 1.0, 10.0].iter().map(|l| fit_elevation(&pts, &g, *l).unwrap().laplacian_energy()).collect();
        assert!(energies[1] <= energies[0] && energies[2] <= energies[1], "{energies:?}");
    }

    #[test]
    fn ordering_does_not_change_the_solution() {
        let (g, pts) = scattered(5);
        let f = fit_elevation(&pts, &g, 1.0).unwrap();
        // swap axes: the internal ordering flips, the answer must not
        let gt = GridSpec { nx: g.ny, ny: g.nx, ..g };
        let swapped: Vec<Vector3<f64>> = pts.iter().map(|p| Vector3::new(p.y, p.x, p.z)).collect();
        let ft = fit_elevation(&swapped, &gt, 1.0).unwrap();
        for j in 0..g.ny {
            for i in 0..g.nx {
                assert!((f.height(i, j) - ft.height(j, i)).abs() < 1e-9);
            }
        }
    }
}
