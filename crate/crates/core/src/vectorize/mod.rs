//! BEV raster to classed polylines, and lifting onto an elevation field.

mod extract;
mod lift;
mod map;
mod morph;

pub use extract::{convex_hull, douglas_peucker, extract_polylines, VectorizeConfig};
pub use lift::lift_to_3d;
pub use map::{ElementClass, MapElement, VectorMap};
pub use morph::{trace_paths, Mask};
