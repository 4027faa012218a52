use rayon::prelude::*;

use super::world::{GroundTruthWorld, PoseTable};
use crate::error::Result;
use crate::evaluate::{reproject_map, ObservationSet, ObservedInstance, ReprojectConfig};
use crate::geometry::CameraRig;

/// Instances a perfect segmentation network would report for one image: the
/// ground-truth map projected with `poses`.
pub fn render_observed_instances(
    world: &GroundTruthWorld,
    frame: u32,
    camera: &str,
    rig: &CameraRig,
    poses: &PoseTable,
    cfg: &ReprojectConfig,
) -> Result<Vec<ObservedInstance>> {
    Ok(reproject_map(&world.map, poses, rig, frame, camera, cfg)?
        .into_iter()
        .map(|p| ObservedInstance { class: p.class, polyline: p.polyline })
        .collect())
}

/// Renders every `(frame, camera)` of the trajectory.
pub fn render_all_instances(
    world: &GroundTruthWorld,
    rig: &CameraRig,
    poses: &PoseTable,
    cfg: &ReprojectConfig,
) -> Result<ObservationSet> {
    let keys: Vec<(u32, String)> =
        world.trajectory.iter().flat_map(|t| rig.ids().map(move |c| (t.frame, c.to_string()))).collect();
    let rendered: Vec<Result<Vec<ObservedInstance>>> =
        keys.par_iter().map(|(f, c)| render_observed_instances(world, *f, c, rig, poses, cfg)).collect();
    keys.into_iter().zip(rendered).map(|(k, r)| r.map(|v| (k, v))).collect()
}
