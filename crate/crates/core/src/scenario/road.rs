//! Road centerline built from piecewise-constant curvature, with exact
//! closest-point projection so the elevation field is an analytic function of
//! `(x, y)`.

use nalgebra::{Vector2, Vector3};
use std::f64::consts::TAU;

#[derive(Clone, Copy, Debug)]
struct Segment {
    s0: f64,
    s1: f64,
    origin: Vector2<f64>,
    heading: f64,
    curvature: f64,
}

impl Segment {
    fn heading_at(&self, s: f64) -> f64 {
        self.heading + self.curvature * (s - self.s0)
    }

    fn position_at(&self, s: f64) -> Vector2<f64> {
        let ds = s - self.s0;
        if self.curvature.abs() < 1e-12 {
            self.origin + ds * Vector2::new(self.heading.cos(), self.heading.sin())
        } else {
            let k = self.curvature;
            let th = self.heading_at(s);
            self.origin + Vector2::new(th.sin() - self.heading.sin(), -th.cos() + self.heading.cos()) / k
        }
    }

    /// Unclamped arc-length parameter of the foot point of `p`.
    fn foot(&self, p: &Vector2<f64>) -> f64 {
        if self.curvature.abs() < 1e-12 {
            self.s0 + (p - self.origin).dot(&Vector2::new(self.heading.cos(), self.heading.sin()))
        } else {
            let k = self.curvature;
            let center = self.origin + Vector2::new(-self.heading.sin(), self.heading.cos()) / k;
            let d = p - center;
            let sg = k.signum();
            let th = (sg * d.x).atan2(-sg * d.y);
            // pick the branch closest to the middle of the segment
            let mid = 0.5 * (self.s0 + self.s1);
            let th_mid = self.heading_at(mid);
            let th = th + TAU * ((th_mid - th) / TAU).round();
            self.s0 + (th - self.heading) / k
        }
    }
}

#[derive(Clone, Debug)]
pub struct Centerline {
    segments: Vec<Segment>,
    length: f64,
}

impl Centerline {
    /// `knots` are `(arc_length, curvature)` pairs; curvature is held constant
    /// from one knot to the next. The road starts at the origin heading +x.
    pub fn new(length: f64, knots: &[(f64, f64)]) -> Self {
        let mut breaks: Vec<(f64, f64)> = vec![(0.0, 0.0)];
        for &(s, k) in knots {
            if s <= 0.0 {
                breaks[0].1 = k;
            } else if s < length {
                breaks.push((s, k));
            }
        }
        let mut segments = Vec::with_capacity(breaks.len());
        let mut origin = Vector2::zeros();
        let mut heading = 0.0;
        for (i, &(s0, k)) in breaks.iter().enumerate() {
            let s1 = breaks.get(i + 1).map_or(length, |b| b.0);
            let seg = Segment { s0, s1, origin, heading, curvature: k };
            origin = seg.position_at(s1);
            heading = seg.heading_at(s1);
            segments.push(seg);
        }
        Self { segments, length }
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    fn segment(&self, s: f64) -> &Segment {
        let idx = self.segments.partition_point(|seg| seg.s1 <= s);
        &self.segments[idx.min(self.segments.len() - 1)]
    }

    pub fn position(&self, s: f64) -> Vector2<f64> {
        self.segment(s).position_at(s)
    }

    pub fn heading(&self, s: f64) -> f64 {
        self.segment(s).heading_at(s)
    }

    pub fn curvature(&self, s: f64) -> f64 {
        self.segment(s).curvature
    }

    /// Left-pointing unit normal.
    pub fn normal(&self, s: f64) -> Vector2<f64> {
        let h = self.heading(s);
        Vector2::new(-h.sin(), h.cos())
    }

    /// Point at arc length `s` displaced `lateral` meters to the left.
    pub fn offset_point(&self, s: f64, lateral: f64) -> Vector2<f64> {
        self.position(s) + lateral * self.normal(s)
    }

    /// `(s, lateral)` of the closest centerline point. The first and last
    /// segments extend past the road ends.
    pub fn project(&self, p: &Vector2<f64>) -> (f64, f64) {
        let n = self.segments.len();
        let mut best = (f64::INFINITY, 0.0);
        for (i, seg) in self.segments.iter().enumerate() {
            let lo = if i == 0 { f64::NEG_INFINITY } else { seg.s0 };
            let hi = if i + 1 == n { f64::INFINITY } else { seg.s1 };
            let s = seg.foot(p).clamp(lo, hi);
            let d = (seg.position_at(s) - p).norm();
            if d < best.0 {
                best = (d, s);
            }
        }
        let s = best.1;
        let seg = self.segment(s.clamp(0.0, self.length));
        let h = seg.heading_at(s);
        let lat = (p - seg.position_at(s)).dot(&Vector2::new(-h.sin(), h.cos()));
        (s, lat)
    }
}

/// Sinusoidal road elevation along arc length.
#[derive(Clone, Copy, Debug)]
pub struct ElevationProfile {
    pub amplitude: f64,
    pub wavelength: f64,
}

impl ElevationProfile {
    pub fn height(&self, s: f64) -> f64 {
        self.amplitude * (TAU * s / self.wavelength).sin()
    }

    pub fn slope(&self, s: f64) -> f64 {
        self.amplitude * TAU / self.wavelength * (TAU * s / self.wavelength).cos()
    }
}

/// Road surface: centerline plus elevation, evaluable at any `(x, y)`.
#[derive(Clone, Debug)]
pub struct RoadSurface {
    pub centerline: Centerline,
    pub elevation: ElevationProfile,
}

impl RoadSurface {
    pub fn point(&self, s: f64, lateral: f64) -> Vector3<f64> {
        let xy = self.centerline.offset_point(s, lateral);
        Vector3::new(xy.x, xy.y, self.elevation.height(s))
    }

    pub fn height_at(&self, x: f64, y: f64) -> f64 {
        let (s, _) = self.centerline.project(&Vector2::new(x, y));
        self.elevation.height(s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn straight_road_projection() {
        let c = Centerline::new(100.0, &[]);
        let (s, lat) = c.project(&Vector2::new(12.5, -3.0));
        assert!((s - 12.5).abs() < 1e-12 && (lat + 3.0).abs() < 1e-12);
        let (s, _) = c.project(&Vector2::new(-4.0, 1.0));
        assert!((s + 4.0).abs() < 1e-12);
    }

    #[test]
    fn curved_road_offsets_project_back() {
        let c = Centerline::new(240.0, &[(0.0, 0.0), (60.0, 0.004), (120.0, -0.003), (200.0, 0.0)]);
        for i in 0..=480 {
            let s = i as f64 * 0.5;
            for lat in [-5.25, -1.75, 0.0, 3.5, 9.0] {
                let p = c.offset_point(s, lat);
                let (s2, lat2) = c.project(&p);
                assert!((s2 - s).abs() < 1e-9, "s {s} -> {s2}");
                assert!((lat2 - lat).abs() < 1e-9);
            }
        }
        // continuity at knots
        for s in [60.0, 120.0, 200.0] {
            assert!((c.position(s - 1e-9) - c.position(s + 1e-9)).norm() < 1e-6);
        }
    }

    #[test]
    fn arc_length_is_consistent() {
        let c = Centerline::new(200.0, &[(0.0, 0.01)]);
        let n = 20000;
        let mut len = 0.0;
        for i in 0..n {
            let a = c.position(200.0 * i as f64 / n as f64);
            let b = c.position(200.0 * (i + 1) as f64 / n as f64);
            len += (b - a).norm();
        }
        assert!((len - 200.0).abs() < 1e-3);
    }
}
