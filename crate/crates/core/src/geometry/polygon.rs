//! Convex polygon helpers for ground footprints.

use nalgebra::Vector2;

/// `a·x + b·y + c >= 0`
#[derive(Clone, Copy, Debug)]
pub struct HalfPlane {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl HalfPlane {
    fn eval(&self, p: &Vector2<f64>) -> f64 {
        self.a * p.x + self.b * p.y + self.c
    }

    /// Left side of the directed edge `p -> q`.
    fn left_of(p: &Vector2<f64>, q: &Vector2<f64>) -> Self {
        let d = q - p;
        HalfPlane { a: -d.y, b: d.x, c: d.y * p.x - d.x * p.y }
    }
}

/// Sutherland-Hodgman clip of a convex polygon against one half-plane.
pub fn clip_half_plane(poly: &[Vector2<f64>], hp: &HalfPlane) -> Vec<Vector2<f64>> {
    let n = poly.len();
    let mut out = Vec::with_capacity(n + 1);
    for i in 0..n {
        let p = poly[i];
        let q = poly[(i + 1) % n];
        let fp = hp.eval(&p);
        let fq = hp.eval(&q);
        if fp >= 0.0 {
            out.push(p);
        }
        if (fp >= 0.0) != (fq >= 0.0) {
            let t = fp / (fp - fq);
            out.push(p + (q - p) * t);
        }
    }
    out
}

/// Signed shoelace area, positive for counter-clockwise order.
pub fn signed_area(poly: &[Vector2<f64>]) -> f64 {
    let n = poly.len();
    if n < 3 {
        return 0.0;
    }
    let mut s = 0.0;
    for i in 0..n {
        let p = poly[i];
        let q = poly[(i + 1) % n];
        s += p.x * q.y - q.x * p.y;
    }
    0.5 * s
}

pub fn polygon_area(poly: &[Vector2<f64>]) -> f64 {
    signed_area(poly).abs()
}

pub fn convex_intersection_area(a: &[Vector2<f64>], b: &[Vector2<f64>]) -> f64 {
    let mut clip: Vec<Vector2<f64>> = b.to_vec();
    if signed_area(&clip) < 0.0 {
        clip.reverse();
    }
    let mut poly = a.to_vec();
    let n = clip.len();
    for i in 0..n {
        let hp = HalfPlane::left_of(&clip[i], &clip[(i + 1) % n]);
        poly = clip_half_plane(&poly, &hp);
        if poly.len() < 3 {
            return 0.0;
        }
    }
    polygon_area(&poly)
}
