use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Polyline3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ElementClass {
    Divider,
    Boundary,
    PedCrossing,
}

impl ElementClass {
    pub const ALL: [ElementClass; 3] = [ElementClass::Divider, ElementClass::Boundary, ElementClass::PedCrossing];

    pub fn name(self) -> &'static str {
        match self {
            ElementClass::Divider => "divider",
            ElementClass::Boundary => "boundary",
            ElementClass::PedCrossing => "ped_crossing",
        }
    }
}

/// One classed 3D polyline. Pedestrian crossings are closed, lines open.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ElementRepr", into = "ElementRepr")]
pub struct MapElement {
    pub id: u32,
    pub class: ElementClass,
    pub polyline: Polyline3,
}

impl MapElement {
    pub fn new(id: u32, class: ElementClass, polyline: Polyline3) -> Result<Self> {
        let want_closed = class == ElementClass::PedCrossing;
        if polyline.is_closed() != want_closed {
            return Err(Error::InvalidSpec(format!(
                "element {id}: {} must be {}",
                class.name(),
                if want_closed { "closed" } else { "open" }
            )));
        }
        Ok(Self { id, class, polyline })
    }
}

#[derive(Serialize, Deserialize)]
struct ElementRepr {
    id: u32,
    class: ElementClass,
    closed: bool,
    points: Vec<[f64; 3]>,
}

impl TryFrom<ElementRepr> for MapElement {
    type Error = Error;
    fn try_from(r: ElementRepr) -> Result<Self> {
        let pl = Polyline3::new(r.points.into_iter().map(Vector3::from).collect(), r.closed)?;
        MapElement::new(r.id, r.class, pl)
    }
}

impl From<MapElement> for ElementRepr {
    fn from(e: MapElement) -> Self {
        ElementRepr {
            id: e.id,
            class: e.class,
            closed: e.polyline.is_closed(),
            points: e.polyline.points().iter().map(|p| [p.x, p.y, p.z]).collect(),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct VectorMap {
    pub elements: Vec<MapElement>,
}

impl VectorMap {
    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    /// Same map with every vertex dropped to `z = 0`.
    pub fn flattened(&self) -> VectorMap {
        let elements = self
            .elements
            .iter()
            .map(|e| {
                let pts = e.polyline.points().iter().map(|p| Vector3::new(p.x, p.y, 0.0)).collect();
                MapElement {
                    id: e.id,
                    class: e.class,
                    polyline: Polyline3::from_points_dedup(pts, e.polyline.is_closed())
                        .expect("flattening keeps distinct xy vertices"),
                }
            })
            .collect();
        VectorMap { elements }
    }
}
