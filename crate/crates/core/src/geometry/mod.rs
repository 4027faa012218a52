//! Rigid transforms, pinhole projection and ground-plane footprints.

mod camera;
pub mod polygon;
mod polyline;
mod pose;

pub use camera::{
    backproject, footprint_iou, frustum_ground_overlap, ground_footprint, ground_homography,
    ground_point_visible, mount, project, project_camera_point, project_with_near, Camera, CameraRig,
    Intrinsics, Projection, DEFAULT_Z_NEAR,
};
pub use polyline::{point_segment_distance, Polyline2, Polyline3, MIN_VERTEX_SEPARATION};
pub use pose::{hat, right_jacobian_inv, so3_log, Pose};
