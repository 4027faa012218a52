use nalgebra::Vector3;

use super::{ElementClass, MapElement, VectorMap};
use crate::error::Result;
use crate::geometry::{Polyline2, Polyline3};
use crate::surface::{query_elevation, ElevationField};

/// Drapes BEV polylines onto the elevation field. Segments are densified to
/// at most twice the node spacing so the lifted shape follows the terrain.
/// Element ids follow input order.
pub fn lift_to_3d(elements: &[(ElementClass, Polyline2)], field: &ElevationField) -> Result<VectorMap> {
    let spacing = 2.0 * field.grid.cell_size;
    let mut out = Vec::with_capacity(elements.len());
    for (id, (class, pl)) in elements.iter().enumerate() {
        let pts = pl
            .densified(spacing)
            .into_iter()
            .map(|p| query_elevation(field, &p).map(|z| Vector3::new(p.x, p.y, z)))
            .collect::<Result<Vec<_>>>()?;
        out.push(MapElement::new(id as u32, *class, Polyline3::new(pts, pl.is_closed())?)?);
    }
    Ok(VectorMap { elements: out })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::Error;
    use crate::surface::GridSpec;
    use nalgebra::Vector2;

    fn field(f: impl Fn(f64, f64) -> f64) -> ElevationField {
        let g = GridSpec { origin: [0.0, 0.0], cell_size: 1.0, nx: 21, ny: 11 };
        let h = (0..g.ny).flat_map(|j| (0..g.nx).map(move |i| (i, j))).map(|(i, j)| {
            let n = g.node(i, j);
            f(n.x, n.y)
        });
        ElevationField::new(g, h.collect()).unwrap()
    }

    fn line() -> (ElementClass, Polyline2) {
        let pl = Polyline2::new(vec![Vector2::new(1.0, 1.0), Vector2::new(15.0, 6.0), Vector2::new(18.0, 9.5)], false).unwrap();
        (ElementClass::Divider, pl)
    }

    #[test]
    fn flat_field_lifts_to_constant_height() {
        let m = lift_to_3d(&[line()], &field(|_, _| 0.8)).unwrap();
        let e = &m.elements[0];
        assert!(e.polyline.points().iter().all(|p| (p.z - 0.8).abs() < 1e-12));
        let back = e.polyline.xy();
        assert!(back.points().len() >= 3);
        assert!((back.length() - line().1.length()).abs() < 1e-9);
    }

    #[test]
    fn planar_field_is_exact_and_segments_are_short() {
        let m = lift_to_3d(&[line()], &field(|x, y| 0.05 * x - 0.02 * y + 1.0)).unwrap();
        let pl = &m.elements[0].polyline;
        for p in pl.points() {
            assert!((p.z - (0.05 * p.x - 0.02 * p.y + 1.0)).abs() < 1e-12);
        }
        assert!(pl.segments().all(|(a, b)| (b.xy() - a.xy()).norm() <= 2.0 + 1e-12));
    }

    #[test]
    fn outside_the_field_fails() {
        let pl = Polyline2::new(vec![Vector2::new(1.0, 1.0), Vector2::new(30.0, 1.0)], false).unwrap();
        let r = lift_to_3d(&[(ElementClass::Boundary, pl)], &field(|_, _| 0.0));
        assert!(matches!(r, Err(Error::OutOfExtent { .. })));
    }
}
