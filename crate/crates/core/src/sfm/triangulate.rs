use nalgebra::{DMatrix, Vector2, Vector3, Vector4};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Intrinsics, Pose};

/// One view of a point: camera pose, intrinsics and measured pixel.
#[derive(Clone, Copy, Debug)]
pub struct RayObservation {
    pub world_from_camera: Pose,
    pub intrinsics: Intrinsics,
    pub pixel: Vector2<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Triangulation {
    Point {
        position: Vector3<f64>,
        /// Mean pixel distance over the observations.
        reproj_error: f64,
        /// Largest angle between any two viewing rays.
        angle: f64,
    },
    Degenerate,
}

/// Relative size of the second-smallest singular value below which the
/// design matrix is treated as rank deficient.
const RANK_TOL: f64 = 1e-10;

/// Linear multi-view triangulation from stacked DLT rows in normalized image
/// coordinates, centered on the mean camera center for conditioning.
pub fn triangulate(obs: &[RayObservation]) -> Result<Triangulation> {
    if obs.len() < 2 {
        return Err(Error::TooFewObservations(obs.len()));
    }
    let origin = obs.iter().map(|o| o.world_from_camera.translation).sum::<Vector3<f64>>() / obs.len() as f64;
    let mut a = DMatrix::zeros(2 * obs.len(), 4);
    for (i, o) in obs.iter().enumerate() {
        let k = &o.intrinsics;
        let x = (o.pixel.x - k.cx) / k.fx;
        let y = (o.pixel.y - k.cy) / k.fy;
        // camera_from_world with the world shifted to `origin`
        let r = o.world_from_camera.rotation.inverse().to_rotation_matrix().into_inner();
        let t = -(r * (o.world_from_camera.translation - origin));
        let p = |row: usize| Vector4::new(r[(row, 0)], r[(row, 1)], r[(row, 2)], t[row]);
        let r0 = p(2) * x - p(0);
        let r1 = p(2) * y - p(1);
        a.row_mut(2 * i).copy_from(&(r0 / r0.norm()).transpose());
        a.row_mut(2 * i + 1).copy_from(&(r1 / r1.norm()).transpose());
    }
    let svd = a.svd(false, true);
    let v_t = svd.v_t.expect("requested V");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&i, &j| svd.singular_values[j].total_cmp(&svd.singular_values[i]));
    let s = &svd.singular_values;
    if s[order[2]] <= RANK_TOL * s[order[0]] {
        return Ok(Triangulation::Degenerate);
    }
    let h = v_t.row(order[3]).transpose();
    if h[3].abs() < 1e-12 * h.norm() {
        return Ok(Triangulation::Degenerate);
    }
    let position = Vector3::new(h[0] / h[3], h[1] / h[3], h[2] / h[3]) + origin;

    let mut err = 0.0;
    for o in obs {
        let pc = o.world_from_camera.inverse_transform_point(&position);
        if pc.z <= 0.0 {
            return Ok(Triangulation::Degenerate);
        }
        let k = &o.intrinsics;
        let px = Vector2::new(k.fx * pc.x / pc.z + k.cx, k.fy * pc.y / pc.z + k.cy);
        err += (px - o.pixel).norm();
    }
    Ok(Triangulation::Point { position, reproj_error: err / obs.len() as f64, angle: max_ray_angle(&position, obs) })
}

pub fn max_ray_angle(point: &Vector3<f64>, obs: &[RayObservation]) -> f64 {
    let rays: Vec<Vector3<f64>> = obs.iter().map(|o| (point - o.world_from_camera.translation).normalize()).collect();
    let mut best: f64 = 0.0;
    for i in 0..rays.len() {
        for j in i + 1..rays.len() {
            // atan2 keeps precision for nearly parallel rays
            let ang = rays[i].cross(&rays[j]).norm().atan2(rays[i].dot(&rays[j]));
            best = best.max(ang);
        }
    }
    best
}
