use nalgebra::Vector2;
use serde::{Deserialize, Serialize};

use crate::geometry::{point_segment_distance, Polyline2};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistanceMode {
    /// Mean of both directed distances.
    #[default]
    Symmetric,
    /// Samples of the projected polyline against the observed one.
    ProjectedToObserved,
    /// Samples of the observed polyline against the projected one.
    ObservedToProjected,
}

/// Midpoints of `ceil(length / spacing)` equal arc-length pieces (a closed
/// polyline includes its closing segment).
pub fn arc_length_samples(p: &Polyline2, spacing: f64) -> Vec<Vector2<f64>> {
    let segs: Vec<(Vector2<f64>, Vector2<f64>)> = p.segments().collect();
    let total: f64 = segs.iter().map(|(a, b)| (b - a).norm()).sum();
    let n = (total / spacing).ceil().max(1.0) as usize;
    let step = total / n as f64;
    let mut out = Vec::with_capacity(n);
    let mut seg = 0;
    let mut seg_start = 0.0;
    for k in 0..n {
        let target = ((k as f64 + 0.5) * step).min(total);
        while seg + 1 < segs.len() && seg_start + (segs[seg].1 - segs[seg].0).norm() < target {
            seg_start += (segs[seg].1 - segs[seg].0).norm();
            seg += 1;
        }
        let (a, b) = segs[seg];
        let len = (b - a).norm();
        let t = if len > 0.0 { ((target - seg_start) / len).clamp(0.0, 1.0) } else { 0.0 };
        out.push(a + (b - a) * t);
    }
    out
}

pub fn distance_to_polyline(q: &Vector2<f64>, p: &Polyline2) -> f64 {
    p.segments().map(|(a, b)| point_segment_distance(q, &a, &b)).fold(f64::INFINITY, f64::min)
}

/// Mean distance from samples of `a` to the polyline `b`.
pub fn directed_distance(a: &Polyline2, b: &Polyline2, spacing: f64) -> f64 {
    let samples = arc_length_samples(a, spacing);
    samples.iter().map(|q| distance_to_polyline(q, b)).sum::<f64>() / samples.len() as f64
}

/// Symmetric mean of the two directed distances, sampled every `spacing` pixels.
pub fn polyline_distance(a: &Polyline2, b: &Polyline2, spacing: f64) -> f64 {
    if a == b {
        return 0.0;
    }
    0.5 * (directed_distance(a, b, spacing) + directed_distance(b, a, spacing))
}

pub(crate) fn instance_distance(projected: &Polyline2, observed: &Polyline2, spacing: f64, mode: DistanceMode) -> f64 {
    match mode {
        DistanceMode::Symmetric => polyline_distance(projected, observed, spacing),
        DistanceMode::ProjectedToObserved => directed_distance(projected, observed, spacing),
        DistanceMode::ObservedToProjected => directed_distance(observed, projected, spacing),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn pl(pts: &[(f64, f64)]) -> Polyline2 {
        Polyline2::new(pts.iter().map(|&(x, y)| Vector2::new(x, y)).collect(), false).unwrap()
    }

    #[test]
    fn identical_and_parallel() {
        let a = pl(&[(0.0, 0.0), (100.0, 0.0), (150.0, 40.0)]);
        assert_eq!(polyline_distance(&a, &a, 10.0), 0.0);
        let b = pl(&[(0.0, 5.0), (100.0, 5.0)]);
        let c = pl(&[(0.0, 0.0), (100.0, 0.0)]);
        assert!((polyline_distance(&b, &c, 10.0) - 5.0).abs() < 1e-12);
    }

    #[test]
    fn symmetric_exactly() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..100 {
            let a = random_polyline(&mut rng);
            let b = random_polyline(&mut rng);
            assert_eq!(polyline_distance(&a, &b, 10.0), polyline_distance(&b, &a, 10.0));
        }
    }

    fn random_polyline(rng: &mut ChaCha8Rng) -> Polyline2 {
        let n = rng.random_range(2..6);
        let mut p = Vector2::new(rng.random_range(0.0..1600.0), rng.random_range(0.0..900.0));
        let mut pts = vec![p];
        for _ in 1..n {
            p += Vector2::new(rng.random_range(-200.0..200.0), rng.random_range(-200.0..200.0));
            pts.push(p);
        }
        Polyline2::new(pts, false).unwrap()
    }

    /// Independent oracle: length-weighted midpoints of <= 1 px pieces per
    /// segment, nearest distance by brute force.
    fn fine_directed(a: &Polyline2, b: &Polyline2) -> f64 {
        let mut pts = Vec::new();
        let mut weights = Vec::new();
        for (p, q) in a.segments() {
            let n = (q - p).norm().ceil() as usize;
            for k in 0..n {
                pts.push(p + (q - p) * ((k as f64 + 0.5) / n as f64));
                weights.push((q - p).norm() / n as f64);
            }
        }
        let d = |x: &Vector2<f64>| {
            b.segments().map(|(p, q)| point_segment_distance(x, &p, &q)).fold(f64::INFINITY, f64::min)
        };
        pts.iter().zip(&weights).map(|(p, w)| d(p) * w).sum::<f64>() / weights.iter().sum::<f64>()
    }

    #[test]
    fn agrees_with_fine_sampling() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..100 {
            let a = random_polyline(&mut rng);
            let b = random_polyline(&mut rng);
            let coarse = polyline_distance(&a, &b, 10.0);
            let fine = 0.5 * (fine_directed(&a, &b) + fine_directed(&b, &a));
            assert!((coarse - fine).abs() < 0.5, "{coarse} vs {fine}");
        }
    }

    #[test]
    fn samples_cover_closed_loop() {
        let sq = Polyline2::new(
            vec![Vector2::new(0.0, 0.0), Vector2::new(10.0, 0.0), Vector2::new(10.0, 10.0), Vector2::new(0.0, 10.0)],
            true,
        )
        .unwrap();
        let s = arc_length_samples(&sq, 5.0);
        assert_eq!(s.len(), 8);
        assert!((s[0] - Vector2::new(2.5, 0.0)).norm() < 1e-12);
        assert!((s[7] - Vector2::new(0.0, 2.5)).norm() < 1e-12);
    }
}
