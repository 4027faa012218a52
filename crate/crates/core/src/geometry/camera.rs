use std::collections::BTreeMap;

use nalgebra::{Matrix3, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use super::polygon::{clip_half_plane, convex_intersection_area, polygon_area, HalfPlane};
use super::Pose;
use crate::error::{Error, Result};

/// Points closer than this to the image plane are reported as [`Projection::Behind`].
pub const DEFAULT_Z_NEAR: f64 = 0.1;

/// Pinhole intrinsics, no distortion. Pixel origin is the top-left corner,
/// `u` grows right and `v` grows down.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Intrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    #[serde(rename = "w")]
    pub width: f64,
    #[serde(rename = "h")]
    pub height: f64,
}

impl Intrinsics {
    /// Centered principal point and square pixels for a given horizontal field of view.
    pub fn from_hfov(width: f64, height: f64, hfov: f64) -> Self {
        let f = 0.5 * width / (0.5 * hfov).tan();
        Self { fx: f, fy: f, cx: 0.5 * width, cy: 0.5 * height, width, height }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.fx > 0.0
            && self.fy > 0.0
            && self.cx > 0.0
            && self.cx < self.width
            && self.cy > 0.0
            && self.cy < self.height;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidSpec(format!("intrinsics out of range: {self:?}")))
        }
    }

    pub fn matrix(&self) -> Matrix3<f64> {
        Matrix3::new(self.fx, 0.0, self.cx, 0.0, self.fy, self.cy, 0.0, 0.0, 1.0)
    }

    pub fn contains(&self, px: &Vector2<f64>) -> bool {
        px.x >= 0.0 && px.x <= self.width && px.y >= 0.0 && px.y <= self.height
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Camera {
    pub intrinsics: Intrinsics,
    #[serde(rename = "T_body_camera")]
    pub body_from_camera: Pose,
}

/// Cameras rigidly mounted on the vehicle body. Camera frame: `x` right,
/// `y` down, `z` along the optical axis. Body frame: `x` forward, `y` left, `z` up.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CameraRig {
    pub cameras: BTreeMap<String, Camera>,
}

impl CameraRig {
    pub fn validate(&self) -> Result<()> {
        if self.cameras.is_empty() {
            return Err(Error::InvalidSpec("camera rig is empty".into()));
        }
        for cam in self.cameras.values() {
            cam.intrinsics.validate()?;
        }
        Ok(())
    }

    pub fn camera(&self, id: &str) -> Result<&Camera> {
        self.cameras.get(id).ok_or_else(|| Error::UnknownCamera(id.to_string()))
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.cameras.keys().map(String::as_str)
    }

    /// Six cameras at 60° yaw spacing, 1600×900 pixels, 70° horizontal field
    /// of view, pitched 10° toward the road.
    pub fn surround() -> Self {
        let names = [
            ("CAM_FRONT", 0.0),
            ("CAM_FRONT_LEFT", 60.0),
            ("CAM_BACK_LEFT", 120.0),
            ("CAM_BACK", 180.0),
            ("CAM_BACK_RIGHT", -120.0),
            ("CAM_FRONT_RIGHT", -60.0),
        ];
        let intrinsics = Intrinsics::from_hfov(1600.0, 900.0, 70f64.to_radians());
        let cameras = names
            .iter()
            .map(|&(name, yaw)| {
                let yaw = f64::to_radians(yaw);
                let offset = Vector3::new(1.0 * yaw.cos(), 1.0 * yaw.sin(), 1.25);
                let cam = Camera {
                    intrinsics,
                    body_from_camera: mount(yaw, 10f64.to_radians(), offset),
                };
                (name.to_string(), cam)
            })
            .collect();
        Self { cameras }
    }
}

/// Extrinsic of a camera looking along body yaw `yaw`, tilted down by `pitch_down`.
pub fn mount(yaw: f64, pitch_down: f64, position: Vector3<f64>) -> Pose {
    let forward = Vector3::new(
        yaw.cos() * pitch_down.cos(),
        yaw.sin() * pitch_down.cos(),
        -pitch_down.sin(),
    );
    let right = Vector3::new(yaw.sin(), -yaw.cos(), 0.0);
    let down = forward.cross(&right);
    let r = Matrix3::from_columns(&[right, down, forward]);
    Pose::from_rotation_matrix(&r, position)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Projection {
    Pixel(Vector2<f64>),
    Behind,
}

impl Projection {
    pub fn pixel(self) -> Option<Vector2<f64>> {
        match self {
            Projection::Pixel(p) => Some(p),
            Projection::Behind => None,
        }
    }
}

pub fn project(point_world: &Vector3<f64>, world_from_camera: &Pose, k: &Intrinsics) -> Projection {
    project_with_near(point_world, world_from_camera, k, DEFAULT_Z_NEAR)
}

pub fn project_with_near(
    point_world: &Vector3<f64>,
    world_from_camera: &Pose,
    k: &Intrinsics,
    z_near: f64,
) -> Projection {
    let pc = world_from_camera.inverse_transform_point(point_world);
    project_camera_point(&pc, k, z_near)
}

pub fn project_camera_point(pc: &Vector3<f64>, k: &Intrinsics, z_near: f64) -> Projection {
    if pc.z <= z_near {
        return Projection::Behind;
    }
    Projection::Pixel(Vector2::new(k.fx * pc.x / pc.z + k.cx, k.fy * pc.y / pc.z + k.cy))
}

/// World point at `depth` along the ray through `pixel`.
pub fn backproject(pixel: &Vector2<f64>, depth: f64, world_from_camera: &Pose, k: &Intrinsics) -> Vector3<f64> {
    let pc = Vector3::new((pixel.x - k.cx) / k.fx * depth, (pixel.y - k.cy) / k.fy * depth, depth);
    world_from_camera.transform_point(&pc)
}

/// Homography taking homogeneous ground coordinates `(x, y, 1)` on the plane
/// `z = plane_z` to homogeneous pixels.
pub fn ground_homography(world_from_camera: &Pose, k: &Intrinsics, plane_z: f64) -> Result<Matrix3<f64>> {
    let center = world_from_camera.translation;
    if center.z <= plane_z {
        return Err(Error::DegenerateView(format!(
            "camera center z={:.3} is not above the plane z={plane_z:.3}",
            center.z
        )));
    }
    let axis = world_from_camera.rotation * Vector3::z();
    if axis.z.abs() < 1e-6f64.sin() {
        return Err(Error::DegenerateView("optical axis parallel to the ground plane".into()));
    }
    let camera_from_world = world_from_camera.rotation.inverse().to_rotation_matrix().into_inner();
    let offset = camera_from_world * (Vector3::new(0.0, 0.0, plane_z) - center);
    let m = Matrix3::from_columns(&[
        camera_from_world.column(0).into_owned(),
        camera_from_world.column(1).into_owned(),
        offset,
    ]);
    Ok(k.matrix() * m)
}

/// Vertex count of the polygon that stands in for the range disk.
const RANGE_POLYGON_SIDES: usize = 128;

/// Ground region (convex, counter-clockwise) whose points lie in front of the
/// camera, inside the image, and within `max_range` horizontally of the camera.
/// `None` when the view is degenerate or the region is empty.
pub fn ground_footprint(
    world_from_camera: &Pose,
    k: &Intrinsics,
    plane_z: f64,
    max_range: f64,
) -> Option<Vec<Vector2<f64>>> {
    ground_homography(world_from_camera, k, plane_z).ok()?;
    let center = world_from_camera.translation;
    let r_cw = world_from_camera.rotation.inverse().to_rotation_matrix().into_inner();
    let b = r_cw * (Vector3::new(0.0, 0.0, plane_z) - center);
    // camera coordinates are affine in the ground coordinates: p_c = A (x, y) + b
    let row = |i: usize| (r_cw[(i, 0)], r_cw[(i, 1)], b[i]);
    let (xa, xb, xc) = row(0);
    let (ya, yb, yc) = row(1);
    let (za, zb, zc) = row(2);
    let lin = |ka: f64, kz: f64, a: (f64, f64, f64), z: (f64, f64, f64)| HalfPlane {
        a: ka * a.0 + kz * z.0,
        b: ka * a.1 + kz * z.1,
        c: ka * a.2 + kz * z.2,
    };
    let xr = (xa, xb, xc);
    let yr = (ya, yb, yc);
    let zr = (za, zb, zc);
    let planes = [
        HalfPlane { a: za, b: zb, c: zc - DEFAULT_Z_NEAR },
        lin(k.fx, k.cx, xr, zr),
        lin(-k.fx, k.width - k.cx, xr, zr),
        lin(k.fy, k.cy, yr, zr),
        lin(-k.fy, k.height - k.cy, yr, zr),
    ];
    let mut poly: Vec<Vector2<f64>> = (0..RANGE_POLYGON_SIDES)
        .map(|i| {
            let a = std::f64::consts::TAU * i as f64 / RANGE_POLYGON_SIDES as f64;
            Vector2::new(center.x + max_range * a.cos(), center.y + max_range * a.sin())
        })
        .collect();
    for hp in &planes {
        poly = clip_half_plane(&poly, hp);
        if poly.len() < 3 {
            return None;
        }
    }
    if polygon_area(&poly) <= 0.0 {
        return None;
    }
    Some(poly)
}

/// Intersection-over-union of the two cameras' ground footprints.
pub fn frustum_ground_overlap(
    cam_a: (&Pose, &Intrinsics),
    cam_b: (&Pose, &Intrinsics),
    plane_z: f64,
    max_range: f64,
) -> f64 {
    let (Some(fa), Some(fb)) = (
        ground_footprint(cam_a.0, cam_a.1, plane_z, max_range),
        ground_footprint(cam_b.0, cam_b.1, plane_z, max_range),
    ) else {
        return 0.0;
    };
    footprint_iou(&fa, &fb)
}

pub fn footprint_iou(fa: &[Vector2<f64>], fb: &[Vector2<f64>]) -> f64 {
    let area_a = polygon_area(fa);
    let area_b = polygon_area(fb);
    // average both clipping orders so the score is symmetric to rounding
    let inter = 0.5 * (convex_intersection_area(fa, fb) + convex_intersection_area(fb, fa));
    let union = area_a + area_b - inter;
    if union <= 0.0 {
        0.0
    } else {
        (inter / union).clamp(0.0, 1.0)
    }
}

/// Membership test used by footprint oracles: same constraints as
/// [`ground_footprint`] but with an exact range disk.
pub fn ground_point_visible(
    world_from_camera: &Pose,
    k: &Intrinsics,
    point: &Vector2<f64>,
    plane_z: f64,
    max_range: f64,
) -> bool {
    let c = world_from_camera.translation;
    if (Vector2::new(c.x, c.y) - point).norm() > max_range {
        return false;
    }
    match project(&Vector3::new(point.x, point.y, plane_z), world_from_camera, k) {
        Projection::Pixel(px) => k.contains(&px),
        Projection::Behind => false,
    }
}
