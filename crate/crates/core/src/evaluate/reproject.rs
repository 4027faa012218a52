use nalgebra::Vector2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{project_with_near, CameraRig, Polyline2, Pose, Projection};
use crate::scenario::PoseTable;
use crate::vectorize::{ElementClass, VectorMap};

/// An image-space fragment of a map element.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProjectedInstance {
    pub element_id: u32,
    pub class: ElementClass,
    pub frame: u32,
    pub camera: String,
    pub polyline: Polyline2,
}

/// A classed image polyline, as a segmentation network would report it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObservedInstance {
    pub class: ElementClass,
    #[serde(flatten)]
    pub polyline: Polyline2,
}

/// Contents of one `instances/<frame>_<camera>.json` file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InstanceFile {
    pub frame: u32,
    pub camera: String,
    pub instances: Vec<ObservedInstance>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ReprojectConfig {
    /// Arc-length spacing of samples along each element, meters.
    pub resample_spacing: f64,
    /// Fragments shorter than this many pixels are dropped.
    pub min_fragment_px: f64,
    pub z_near: f64,
}

impl Default for ReprojectConfig {
    fn default() -> Self {
        Self { resample_spacing: 0.5, min_fragment_px: 20.0, z_near: crate::geometry::DEFAULT_Z_NEAR }
    }
}

fn run_length(run: &[Vector2<f64>]) -> f64 {
    run.windows(2).map(|w| (w[1] - w[0]).norm()).sum()
}

/// Projects every element of `map` into `(frame, camera)` and splits it into
/// maximal runs of visible samples.
pub fn reproject_map(
    map: &VectorMap,
    poses: &PoseTable,
    rig: &CameraRig,
    frame: u32,
    camera: &str,
    cfg: &ReprojectConfig,
) -> Result<Vec<ProjectedInstance>> {
    let body = poses.get(&frame).ok_or(Error::UnknownFrame(frame))?;
    let cam = rig.camera(camera)?;
    let world_cam: Pose = body.compose(&cam.body_from_camera);
    let k = &cam.intrinsics;
    let mut out = Vec::new();

    for element in &map.elements {
        let samples = element.polyline.densified(cfg.resample_spacing);
        let pixels: Vec<Option<Vector2<f64>>> = samples
            .iter()
            .map(|p| match project_with_near(p, &world_cam, k, cfg.z_near) {
                Projection::Pixel(px) if k.contains(&px) => Some(px),
                _ => None,
            })
            .collect();
        let closed = element.polyline.is_closed();
        let mut runs: Vec<(Vec<Vector2<f64>>, bool)> = Vec::new();
        if closed && pixels.iter().all(Option::is_some) {
            runs.push((pixels.iter().flatten().copied().collect(), true));
        } else {
            // a closed loop is cut at its first hidden sample so no run wraps
            let n = pixels.len();
            let start = if closed { pixels.iter().position(Option::is_none).unwrap_or(0) } else { 0 };
            let mut current = Vec::new();
            for i in 0..n {
                match pixels[(start + i) % n] {
                    Some(px) => current.push(px),
                    None => {
                        if !current.is_empty() {
                            runs.push((std::mem::take(&mut current), false));
                        }
                    }
                }
            }
            if !current.is_empty() {
                runs.push((current, false));
            }
        }
        for (run, is_loop) in runs {
            let mut len = run_length(&run);
            if is_loop && run.len() > 1 {
                len += (run[run.len() - 1] - run[0]).norm();
            }
            if len < cfg.min_fragment_px {
                continue;
            }
            if let Ok(polyline) = Polyline2::from_points_dedup(run, is_loop) {
                out.push(ProjectedInstance {
                    element_id: element.id,
                    class: element.class,
                    frame,
                    camera: camera.to_string(),
                    polyline,
                });
            }
        }
    }
    Ok(out)
}
