use std::cmp::Ordering;

use nalgebra::Vector2;
use serde::{Deserialize, Serialize};

use super::morph::{trace_paths, Mask, RING};
use super::ElementClass;
use crate::error::{Error, Result};
use crate::geometry::polygon::polygon_area;
use crate::geometry::Polyline2;
use crate::surface::{BevRaster, SurfaceClass};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VectorizeConfig {
    /// Douglas-Peucker tolerance, meters.
    pub simplify_eps: f64,
    /// Shorter paths are discarded, meters.
    pub min_length: f64,
    /// Half-width of the moving average along traced paths, in vertices.
    pub smoothing: usize,
    /// Largest gap closed between aligned path ends, meters.
    pub bridge_gap: f64,
    /// Largest misalignment of a bridged gap, degrees.
    pub bridge_angle: f64,
    /// Largest sideways offset across a bridged gap, meters.
    pub bridge_lateral: f64,
    /// Lateral search window for neighboring lines, meters.
    pub probe_min: f64,
    pub probe_max: f64,
    /// Crossing cells closer than this are grouped into one crossing, meters.
    pub crossing_gap: f64,
    /// Crossings with fewer marked cells are dropped.
    pub crossing_min_cells: usize,
}

impl Default for VectorizeConfig {
    fn default() -> Self {
        Self {
            simplify_eps: 0.05,
            min_length: 2.0,
            smoothing: 3,
            bridge_gap: 4.0,
            bridge_angle: 20.0,
            bridge_lateral: 0.6,
            probe_min: 1.0,
            probe_max: 5.0,
            crossing_gap: 1.5,
            crossing_min_cells: 6,
        }
    }
}

impl VectorizeConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.simplify_eps > 0.0) || !self.simplify_eps.is_finite() {
            return Err(Error::InvalidSpec("vectorize.simplify_eps".into()));
        }
        if !(self.min_length >= 0.0) {
            return Err(Error::InvalidSpec("vectorize.min_length".into()));
        }
        if !(self.bridge_gap >= 0.0) {
            return Err(Error::InvalidSpec("vectorize.bridge_gap".into()));
        }
        if !(self.bridge_angle >= 0.0 && self.bridge_angle <= 90.0) {
            return Err(Error::InvalidSpec("vectorize.bridge_angle".into()));
        }
        if !(self.bridge_lateral >= 0.0) {
            return Err(Error::InvalidSpec("vectorize.bridge_lateral".into()));
        }
        if !(self.crossing_gap >= 0.0) {
            return Err(Error::InvalidSpec("vectorize.crossing_gap".into()));
        }
        if !(self.probe_min >= 0.0 && self.probe_max > self.probe_min) {
            return Err(Error::InvalidSpec("vectorize.probe".into()));
        }
        Ok(())
    }
}

const EXTEND_MAX: f64 = 3.0;

fn class_mask(raster: &BevRaster, class: SurfaceClass) -> Mask {
    let g = &raster.grid;
    Mask { nx: g.nx, ny: g.ny, data: raster.class.iter().map(|c| *c == class).collect() }
}

/// The cell's own centroid if it is marked, else the vote-weighted mean of
/// the centroids of marked cells around it.
fn refined_anchor(raster: &BevRaster, mask: &Mask, i: usize, j: usize) -> Vector2<f64> {
    if mask.get(i as i64, j as i64) {
        return raster.anchor(i, j);
    }
    let mut sum = Vector2::zeros();
    let mut w = 0.0;
    for (di, dj) in RING.iter().copied().chain(std::iter::once((0, 0))) {
        let (a, b) = (i as i64 + di, j as i64 + dj);
        if mask.get(a, b) {
            let (a, b) = (a as usize, b as usize);
            let c = raster.count[raster.grid.index(a, b)].max(1) as f64;
            sum += raster.anchor(a, b) * c;
            w += c;
        }
    }
    if w > 0.0 {
        sum / w
    } else {
        raster.grid.cell_center(i, j)
    }
}

fn smooth(points: &[Vector2<f64>], half: usize) -> Vec<Vector2<f64>> {
    let n = points.len();
    (0..n)
        .map(|k| {
            // symmetric window shrinking at the ends keeps endpoints fixed
            let h = half.min(k).min(n - 1 - k);
            let s: Vector2<f64> = points[k - h..=k + h].iter().sum();
            s / (2 * h + 1) as f64
        })
        .collect()
}

/// Pushes both ends of a thinned path outward while the region continues.
fn extend_ends(path: &mut Vec<Vector2<f64>>, raster: &BevRaster, region: &Mask, max: f64) {
    let g = &raster.grid;
    for at_start in [true, false] {
        let Some(dir) = end_direction(path, at_start) else { continue };
        let tip = if at_start { path[0] } else { *path.last().unwrap() };
        let start_cell = g.cell_of(&tip);
        let mut reach = 0.0;
        let mut d = 0.25 * g.cell_size;
        while d <= max {
            match g.cell_of(&(tip + dir * d)) {
                Some((i, j)) if region.get(i as i64, j as i64) => {
                    if Some((i, j)) != start_cell {
                        reach = (raster.anchor(i, j) - tip).dot(&dir).max(reach);
                    }
                }
                _ => break,
            }
            d += 0.25 * g.cell_size;
        }
        if reach > 1e-6 {
            let p = tip + dir * reach;
            if at_start {
                path.insert(0, p);
            } else {
                path.push(p);
            }
        }
    }
}

fn path_length(p: &[Vector2<f64>]) -> f64 {
    p.windows(2).map(|w| (w[1] - w[0]).norm()).sum()
}

/// Outward unit direction at the end of `p` (or at its start if `at_start`),
/// measured over roughly the last meter.
fn end_direction(p: &[Vector2<f64>], at_start: bool) -> Option<Vector2<f64>> {
    let seq: Vec<&Vector2<f64>> = if at_start { p.iter().collect() } else { p.iter().rev().collect() };
    let tip = seq[0];
    let mut back = seq[seq.len() - 1];
    for q in &seq[1..] {
        if (*q - tip).norm() >= 1.0 {
            back = q;
            break;
        }
    }
    let d = tip - back;
    (d.norm() > 1e-9).then(|| d.normalize())
}

/// Greedily joins path ends that face each other across a short gap.
fn bridge(mut paths: Vec<Vec<Vector2<f64>>>, cfg: &VectorizeConfig) -> Vec<Vec<Vector2<f64>>> {
    let (max_gap, max_lateral) = (cfg.bridge_gap, cfg.bridge_lateral);
    let cos_min = cfg.bridge_angle.to_radians().cos();
    loop {
        let mut best: Option<(f64, usize, bool, usize, bool)> = None;
        for a in 0..paths.len() {
            for b in a + 1..paths.len() {
                for a_start in [false, true] {
                    for b_start in [false, true] {
                        let pa = if a_start { paths[a][0] } else { *paths[a].last().unwrap() };
                        let pb = if b_start { paths[b][0] } else { *paths[b].last().unwrap() };
                        let gap = pb - pa;
                        let d = gap.norm();
                        if d > max_gap || d < 1e-9 {
                            continue;
                        }
                        let (Some(da), Some(db)) = (end_direction(&paths[a], a_start), end_direction(&paths[b], b_start))
                        else {
                            continue;
                        };
                        let u = gap / d;
                        if da.dot(&u) < cos_min || db.dot(&-u) < cos_min {
                            continue;
                        }
                        if da.perp(&gap).abs() > max_lateral || db.perp(&gap).abs() > max_lateral {
                            continue;
                        }
                        if best.is_none_or(|bst| d < bst.0) {
                            best = Some((d, a, a_start, b, b_start));
                        }
                    }
                }
            }
        }
        let Some((_, a, a_start, b, b_start)) = best else { return paths };
        let mut pb = paths.remove(b);
        let mut pa = std::mem::take(&mut paths[a]);
        if a_start {
            pa.reverse();
        }
        if !b_start {
            pb.reverse();
        }
        pa.extend(pb);
        paths[a] = pa;
    }
}

fn perpendicular_distance(p: &Vector2<f64>, a: &Vector2<f64>, b: &Vector2<f64>) -> f64 {
    crate::geometry::point_segment_distance(p, a, b)
}

/// Recursive farthest-point simplification of an open chain.
pub fn douglas_peucker(points: &[Vector2<f64>], eps: f64) -> Vec<Vector2<f64>> {
    if points.len() <= 2 {
        return points.to_vec();
    }
    let mut keep = vec![false; points.len()];
    keep[0] = true;
    keep[points.len() - 1] = true;
    let mut stack = vec![(0, points.len() - 1)];
    while let Some((s, e)) = stack.pop() {
        let mut best = (0.0, 0);
        for k in s + 1..e {
            let d = perpendicular_distance(&points[k], &points[s], &points[e]);
            if d > best.0 {
                best = (d, k);
            }
        }
        if best.0 > eps {
            keep[best.1] = true;
            stack.push((s, best.1));
            stack.push((best.1, e));
        }
    }
    points.iter().zip(&keep).filter(|(_, k)| **k).map(|(p, _)| *p).collect()
}

fn douglas_peucker_closed(points: &[Vector2<f64>], eps: f64) -> Vec<Vector2<f64>> {
    if points.len() <= 3 {
        return points.to_vec();
    }
    let far = (1..points.len())
        .max_by(|&a, &b| (points[a] - points[0]).norm().total_cmp(&(points[b] - points[0]).norm()))
        .expect("nonempty");
    let mut first = douglas_peucker(&points[..=far], eps);
    let mut tail: Vec<Vector2<f64>> = points[far..].to_vec();
    tail.push(points[0]);
    let second = douglas_peucker(&tail, eps);
    first.pop();
    first.extend(&second[..second.len() - 1]);
    first
}

/// Counter-clockwise convex hull (monotone chain), collinear points dropped.
pub fn convex_hull(points: &[Vector2<f64>]) -> Vec<Vector2<f64>> {
    let mut p = points.to_vec();
    p.sort_by(|a, b| a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y)));
    p.dedup();
    if p.len() < 3 {
        return p;
    }
    let cross = |o: &Vector2<f64>, a: &Vector2<f64>, b: &Vector2<f64>| (a - o).perp(&(b - o));
    let mut lower: Vec<Vector2<f64>> = Vec::new();
    for q in &p {
        while lower.len() >= 2 && cross(&lower[lower.len() - 2], &lower[lower.len() - 1], q) <= 0.0 {
            lower.pop();
        }
        lower.push(*q);
    }
    let mut upper: Vec<Vector2<f64>> = Vec::new();
    for q in p.iter().rev() {
        while upper.len() >= 2 && cross(&upper[upper.len() - 2], &upper[upper.len() - 1], q) <= 0.0 {
            upper.pop();
        }
        upper.push(*q);
    }
    lower.pop();
    upper.pop();
    lower.extend(upper);
    lower
}

/// Divider when other lines lie on both sides along most of its length.
fn classify_line(k: usize, lines: &[Polyline2], cfg: &VectorizeConfig) -> ElementClass {
    let (mut both, mut one) = (0, 0);
    let samples = lines[k].densified(2.0);
    for w in samples.windows(2) {
        let t = (w[1] - w[0]).normalize();
        let mid = 0.5 * (w[0] + w[1]);
        let (mut left, mut right) = (false, false);
        for (m, other) in lines.iter().enumerate() {
            if m == k {
                continue;
            }
            for (a, b) in other.segments() {
                let q = closest_on_segment(&mid, &a, &b);
                let d = q - mid;
                let lateral = t.perp(&d);
                // the neighbor has to sit across the line, not ahead of it
                if d.dot(&t).abs() > 0.5 * lateral.abs() {
                    continue;
                }
                if (cfg.probe_min..=cfg.probe_max).contains(&lateral.abs()) {
                    if lateral > 0.0 {
                        left = true;
                    } else {
                        right = true;
                    }
                }
            }
        }
        match (left, right) {
            (true, true) => both += 1,
            (true, false) | (false, true) => one += 1,
            _ => {}
        }
    }
    if both > one {
        ElementClass::Divider
    } else {
        ElementClass::Boundary
    }
}

fn closest_on_segment(p: &Vector2<f64>, a: &Vector2<f64>, b: &Vector2<f64>) -> Vector2<f64> {
    let d = b - a;
    let l2 = d.norm_squared();
    if l2 == 0.0 {
        return *a;
    }
    a + d * ((p - a).dot(&d) / l2).clamp(0.0, 1.0)
}

fn cmp_elements(a: &(ElementClass, Polyline2), b: &(ElementClass, Polyline2)) -> Ordering {
    let (pa, pb) = (a.1.points()[0], b.1.points()[0]);
    a.0.cmp(&b.0).then(pa.x.total_cmp(&pb.x)).then(pa.y.total_cmp(&pb.y))
}

/// Classed BEV polylines: lane markings are thinned, traced, bridged,
/// simplified and typed as divider or boundary; pedestrian-crossing regions
/// become closed outlines. Sorted by class, then first vertex.
pub fn extract_polylines(raster: &BevRaster, cfg: &VectorizeConfig) -> Result<Vec<(ElementClass, Polyline2)>> {
    cfg.validate()?;
    raster.validate()?;
    let mut out = Vec::new();

    let lane = class_mask(raster, SurfaceClass::LaneMarking);
    if lane.count() > 0 {
        let closed = lane.close();
        let skel = closed.thin();
        let paths: Vec<Vec<Vector2<f64>>> = trace_paths(&skel)
            .into_iter()
            .filter(|p| p.len() >= 2)
            .map(|p| {
                let anchors: Vec<Vector2<f64>> = p.iter().map(|&(i, j)| refined_anchor(raster, &lane, i, j)).collect();
                let mut path = smooth(&anchors, cfg.smoothing);
                extend_ends(&mut path, raster, &closed, EXTEND_MAX);
                path
            })
            .collect();
        let mut lines = Vec::new();
        for p in bridge(paths, cfg) {
            let simple = douglas_peucker(&p, cfg.simplify_eps);
            if path_length(&simple) < cfg.min_length {
                continue;
            }
            let Ok(pl) = Polyline2::from_points_dedup(simple, false) else { continue };
            if pl.len() >= 2 {
                lines.push(pl);
            }
        }
        for k in 0..lines.len() {
            out.push((classify_line(k, &lines, cfg), lines[k].clone()));
        }
    }

    let ped = class_mask(raster, SurfaceClass::PedCrossing);
    if ped.count() > 0 {
        // grow until nearby cells touch, then group the original cells
        let steps = (0.5 * cfg.crossing_gap / raster.grid.cell_size).ceil() as usize;
        let mut region = ped.clone();
        for _ in 0..steps {
            region = region.dilate();
        }
        for comp in region.components() {
            let pts: Vec<Vector2<f64>> = comp
                .iter()
                .filter(|&&(i, j)| ped.get(i as i64, j as i64))
                .map(|&(i, j)| raster.anchor(i, j))
                .collect();
            if pts.len() < cfg.crossing_min_cells {
                continue;
            }
            let hull = convex_hull(&pts);
            if hull.len() < 3 {
                continue;
            }
            let simple = douglas_peucker_closed(&hull, cfg.simplify_eps);
            if simple.len() < 3 || polygon_area(&simple) <= 0.0 {
                continue;
            }
            let Ok(pl) = Polyline2::from_points_dedup(simple, true) else { continue };
            if pl.len() < 3 || pl.length() < cfg.min_length {
                continue;
            }
            out.push((ElementClass::PedCrossing, pl));
        }
    }
    out.sort_by(cmp_elements);
    Ok(out)
}
