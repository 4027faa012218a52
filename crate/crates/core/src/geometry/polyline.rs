use nalgebra::{Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Minimum separation between consecutive vertices.
pub const MIN_VERTEX_SEPARATION: f64 = 1e-9;

/// Ordered 2D vertices (pixels or BEV meters).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PolylineRepr<2>", into = "PolylineRepr<2>")]
pub struct Polyline2 {
    points: Vec<Vector2<f64>>,
    closed: bool,
}

/// Ordered 3D vertices in meters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PolylineRepr<3>", into = "PolylineRepr<3>")]
pub struct Polyline3 {
    points: Vec<Vector3<f64>>,
    closed: bool,
}

#[derive(Serialize, Deserialize)]
struct PolylineRepr<const D: usize> {
    #[serde(default)]
    closed: bool,
    #[serde(with = "points_serde")]
    points: Vec<[f64; D]>,
}

mod points_serde {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer, const D: usize>(v: &[[f64; D]], s: S) -> Result<S::Ok, S::Error> {
        let rows: Vec<Vec<f64>> = v.iter().map(|p| p.to_vec()).collect();
        rows.serialize(s)
    }

    pub fn deserialize<'de, De: Deserializer<'de>, const D: usize>(d: De) -> Result<Vec<[f64; D]>, De::Error> {
        let rows: Vec<Vec<f64>> = Vec::deserialize(d)?;
        rows.into_iter()
            .map(|r| {
                <[f64; D]>::try_from(r.as_slice())
                    .map_err(|_| serde::de::Error::custom(format!("expected {D} coordinates per point")))
            })
            .collect()
    }
}

fn check_separation<I: Iterator<Item = f64>>(n: usize, gaps: I) -> Result<()> {
    if n < 2 {
        return Err(Error::InvalidSpec(format!("polyline needs at least 2 points, got {n}")));
    }
    if gaps.into_iter().any(|g| g <= MIN_VERTEX_SEPARATION) {
        return Err(Error::InvalidSpec("polyline has coincident consecutive points".into()));
    }
    Ok(())
}

macro_rules! polyline_impl {
    ($name:ident, $vec:ident, $dim:literal) => {
        impl $name {
            pub fn new(points: Vec<$vec<f64>>, closed: bool) -> Result<Self> {
                check_separation(points.len(), points.windows(2).map(|w| (w[1] - w[0]).norm()))?;
                Ok(Self { points, closed })
            }

            /// Drops vertices that coincide with their predecessor, then validates.
            pub fn from_points_dedup(points: Vec<$vec<f64>>, closed: bool) -> Result<Self> {
                let mut out: Vec<$vec<f64>> = Vec::with_capacity(points.len());
                for p in points {
                    if out.last().map_or(true, |q| (p - q).norm() > MIN_VERTEX_SEPARATION) {
                        out.push(p);
                    }
                }
                if closed && out.len() > 2 {
                    while out.len() > 2 && (out[0] - out[out.len() - 1]).norm() <= MIN_VERTEX_SEPARATION {
                        out.pop();
                    }
                }
                Self::new(out, closed)
            }

            pub fn points(&self) -> &[$vec<f64>] {
                &self.points
            }

            pub fn into_points(self) -> Vec<$vec<f64>> {
                self.points
            }

            pub fn is_closed(&self) -> bool {
                self.closed
            }

            pub fn len(&self) -> usize {
                self.points.len()
            }

            pub fn is_empty(&self) -> bool {
                self.points.is_empty()
            }

            /// Segments as vertex pairs, including the closing segment when closed.
            pub fn segments(&self) -> impl Iterator<Item = ($vec<f64>, $vec<f64>)> + '_ {
                let n = self.points.len();
                let count = if self.closed && n > 2 { n } else { n - 1 };
                (0..count).map(move |i| (self.points[i], self.points[(i + 1) % n]))
            }

            pub fn length(&self) -> f64 {
                self.segments().map(|(a, b)| (b - a).norm()).sum()
            }

            /// Splits every segment into equal pieces no longer than `spacing`,
            /// keeping the original vertices. The closing segment of a closed
            /// polyline is subdivided too, without repeating the first vertex.
            pub fn densified(&self, spacing: f64) -> Vec<$vec<f64>> {
                let mut out = Vec::new();
                for (a, b) in self.segments() {
                    let n = ((b - a).norm() / spacing).ceil().max(1.0) as usize;
                    for k in 0..n {
                        out.push(a + (b - a) * (k as f64 / n as f64));
                    }
                }
                if !self.closed || self.points.len() <= 2 {
                    out.push(*self.points.last().unwrap());
                }
                out
            }
        }

        impl TryFrom<PolylineRepr<$dim>> for $name {
            type Error = Error;
            fn try_from(r: PolylineRepr<$dim>) -> Result<Self> {
                Self::new(r.points.into_iter().map($vec::from).collect(), r.closed)
            }
        }

        impl From<$name> for PolylineRepr<$dim> {
            fn from(p: $name) -> Self {
                PolylineRepr { closed: p.closed, points: p.points.iter().map(|v| (*v).into()).collect() }
            }
        }
    };
}

polyline_impl!(Polyline2, Vector2, 2);
polyline_impl!(Polyline3, Vector3, 3);

impl Polyline3 {
    pub fn xy(&self) -> Polyline2 {
        Polyline2 { points: self.points.iter().map(|p| p.xy()).collect(), closed: self.closed }
    }
}

pub fn point_segment_distance(p: &Vector2<f64>, a: &Vector2<f64>, b: &Vector2<f64>) -> f64 {
    let d = b - a;
    let len2 = d.norm_squared();
    if len2 == 0.0 {
        return (p - a).norm();
    }
    let t = ((p - a).dot(&d) / len2).clamp(0.0, 1.0);
    (a + d * t - p).norm()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_short_and_coincident() {
        assert!(Polyline2::new(vec![Vector2::new(0.0, 0.0)], false).is_err());
        assert!(Polyline2::new(vec![Vector2::new(0.0, 0.0), Vector2::new(0.0, 0.0)], false).is_err());
    }

    #[test]
    fn densify_keeps_vertices_and_closes() {
        let p = Polyline2::new(
            vec![Vector2::new(0.0, 0.0), Vector2::new(1.0, 0.0), Vector2::new(1.0, 1.0)],
            true,
        )
        .unwrap();
        let d = p.densified(0.5);
        // 2 + 2 + 3 pieces (closing diagonal is sqrt 2 long)
        assert_eq!(d.len(), 7);
        assert_eq!(d[2], Vector2::new(1.0, 0.0));
        assert!((p.length() - (2.0 + 2f64.sqrt())).abs() < 1e-12);
    }

    #[test]
    fn json_shape() {
        let p = Polyline3::new(vec![Vector3::new(0.0, 1.0, 2.0), Vector3::new(3.0, 4.0, 5.0)], false).unwrap();
        let s = serde_json::to_string(&p).unwrap();
        assert_eq!(s, r#"{"closed":false,"points":[[0.0,1.0,2.0],[3.0,4.0,5.0]]}"#);
        let back: Polyline3 = serde_json::from_str(&s).unwrap();
        assert_eq!(back, p);
    }
}
