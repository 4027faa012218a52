//! Rig-aware structure from motion: camera initialization from fused body
//! poses, ground-overlap pair selection, triangulation and rigid bundle
//! adjustment with the camera extrinsics held fixed.

mod ba;
mod triangulate;

use std::collections::{BTreeMap, BTreeSet, HashSet};

use nalgebra::{Vector2, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use ba::{
    observation_jacobian, observation_residual, prior_jacobian, reprojection_error, rigid_bundle_adjust, BaConfig, BaRound, BaTrace, SparseModel, SparsePoint};
pub use triangulate::{max_ray_angle, triangulate, RayObservation, Triangulation};

use crate::error::{Error, Result};
use crate::geometry::{footprint_iou, ground_footprint, CameraRig, Pose};
use crate::scenario::{FeatureTrackSet, PoseTable, Track};

/// `(frame, camera id)`.
pub type ImageKey = (u32, String);
pub type CameraPoseTable = BTreeMap<ImageKey, Pose>;

/// Camera poses from body poses and the fixed extrinsics.
pub fn ogi_initialize(body_poses: &PoseTable, rig: &CameraRig) -> CameraPoseTable {
    let mut out = BTreeMap::new();
    for (frame, body) in body_poses {
        for (id, cam) in &rig.cameras {
            out.insert((*frame, id.clone()), body.compose(&cam.body_from_camera));
        }
    }
    out
}

/// Median ground height under the body poses.
pub fn ground_plane_z(body_poses: &PoseTable, wheel_offset: f64) -> f64 {
    let mut z: Vec<f64> = body_poses.values().map(|p| p.translation.z - wheel_offset).collect();
    if z.is_empty() {
        return 0.0;
    }
    z.sort_by(f64::total_cmp);
    let n = z.len();
    if n % 2 == 1 {
        z[n / 2]
    } else {
        0.5 * (z[n / 2 - 1] + z[n / 2])
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HspConfig {
    /// Minimum footprint IoU for a pair to be matched.
    pub overlap_min: f64,
    /// Footprint range in meters.
    pub max_range: f64,
}

impl Default for HspConfig {
    fn default() -> Self {
        Self { overlap_min: 0.001, max_range: 22.0 }
    }
}

impl HspConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.overlap_min) {
            return Err(Error::InvalidSpec("sfm.hsp.overlap_min".into()));
        }
        if !(self.max_range > 0.0 && self.max_range.is_finite()) {
            return Err(Error::InvalidSpec("sfm.hsp.max_range".into()));
        }
        Ok(())
    }
}

type Footprint = (Vec<Vector2<f64>>, [f64; 4]);

fn footprints(cameras: &CameraPoseTable, rig: &CameraRig, plane_z: f64, max_range: f64) -> Result<Vec<Option<Footprint>>> {
    let keys: Vec<&ImageKey> = cameras.keys().collect();
    let intr = keys.iter().map(|k| Ok(rig.camera(&k.1)?.intrinsics)).collect::<Result<Vec<_>>>()?;
    // the plane follows the vehicle: plane_z sits at the median body height
    let body_z = keys
        .iter()
        .map(|k| Ok(cameras[*k].compose(&rig.camera(&k.1)?.body_from_camera.inverse()).translation.z))
        .collect::<Result<Vec<f64>>>()?;
    let mut sorted = body_z.clone();
    sorted.sort_by(f64::total_cmp);
    let median = match sorted.len() {
        0 => 0.0,
        n if n % 2 == 1 => sorted[n / 2],
        n => 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]),
    };
    Ok(keys
        .par_iter()
        .zip(intr)
        .zip(body_z)
        .map(|((k, intr), z)| {
            let poly = ground_footprint(&cameras[*k], &intr, plane_z + z - median, max_range)?;
            let mut bb = [f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY];
            for p in &poly {
                bb = [bb[0].min(p.x), bb[1].min(p.y), bb[2].max(p.x), bb[3].max(p.y)];
            }
            Some((poly, bb))
        })
        .collect())
}

/// Unordered image pairs (sorted, first key smaller) whose ground footprints
/// overlap by at least `overlap_min` IoU.
pub fn hsp_pairs(
    cameras: &CameraPoseTable,
    rig: &CameraRig,
    plane_z: f64,
    cfg: &HspConfig,
) -> Result<Vec<(ImageKey, ImageKey)>> {
    cfg.validate()?;
    let keys: Vec<&ImageKey> = cameras.keys().collect();
    let fps = footprints(cameras, rig, plane_z, cfg.max_range)?;
    let pairs: Vec<Vec<usize>> = (0..keys.len())
        .into_par_iter()
        .map(|i| {
            let Some((fa, ba)) = &fps[i] else { return Vec::new() };
            (i + 1..keys.len())
                .filter(|&j| {
                    let Some((fb, bb)) = &fps[j] else { return false };
                    // disjoint boxes have zero IoU
                    if ba[2] < bb[0] || bb[2] < ba[0] || ba[3] < bb[1] || bb[3] < ba[1] {
                        return cfg.overlap_min <= 0.0;
                    }
                    footprint_iou(fa, fb) >= cfg.overlap_min
                })
                .collect()
        })
        .collect();
    Ok(pairs
        .into_iter()
        .enumerate()
        .flat_map(|(i, js)| js.into_iter().map(move |j| (i, j)))
        .map(|(i, j)| (keys[i].clone(), keys[j].clone()))
        .collect())
}

/// Number of tracks seen in both images, for every image pair that shares one.
pub fn covisibility(tracks: &FeatureTrackSet) -> BTreeMap<(ImageKey, ImageKey), usize> {
    let mut out = BTreeMap::new();
    for t in &tracks.tracks {
        let imgs: BTreeSet<ImageKey> = t.observations.iter().map(|o| (o.frame, o.camera.clone())).collect();
        let imgs: Vec<ImageKey> = imgs.into_iter().collect();
        for i in 0..imgs.len() {
            for j in i + 1..imgs.len() {
                *out.entry((imgs[i].clone(), imgs[j].clone())).or_insert(0) += 1;
            }
        }
    }
    out
}

/// Keeps an observation only if its image is paired with the image of another
/// observation of the same track; drops tracks left with fewer than two.
pub fn restrict_to_pairs(tracks: &[Track], pairs: &[(ImageKey, ImageKey)]) -> Vec<Track> {
    let set: HashSet<(&ImageKey, &ImageKey)> = pairs.iter().map(|(a, b)| (a, b)).collect();
    tracks
        .iter()
        .filter_map(|t| {
            let keys: Vec<ImageKey> = t.observations.iter().map(|o| (o.frame, o.camera.clone())).collect();
            let linked = |i: usize| {
                keys.iter().enumerate().any(|(j, kj)| {
                    let ki = &keys[i];
                    j != i && (set.contains(&(ki, kj)) || set.contains(&(kj, ki)))
                })
            };
            let observations: Vec<_> =
                t.observations.iter().enumerate().filter(|(i, _)| linked(*i)).map(|(_, o)| o.clone()).collect();
            (observations.len() >= 2).then(|| Track { observations, ..t.clone() })
        })
        .collect()
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SfmConfig {
    pub hsp: HspConfig,
    pub ba: BaConfig,
}

impl SfmConfig {
    pub fn validate(&self) -> Result<()> {
        self.hsp.validate()?;
        self.ba.validate()
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SfmStats {
    pub images: usize,
    pub plane_z: f64,
    pub hsp_pairs: usize,
    pub exhaustive_pairs: usize,
    pub tracks_in: usize,
    pub tracks_matched: usize,
    pub tracks_degenerate: usize,
    pub points_out: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SfmOutput {
    pub model: SparseModel,
    pub trace: BaTrace,
    pub stats: SfmStats,
}

/// Full sparse reconstruction seeded by fused body poses. The fused poses are
/// also the priors of the adjustment.
pub fn run_sfm(
    body_poses: &PoseTable,
    rig: &CameraRig,
    tracks: &FeatureTrackSet,
    wheel_offset: f64,
    cfg: &SfmConfig,
) -> Result<SfmOutput> {
    cfg.validate()?;
    rig.validate()?;
    let cameras = ogi_initialize(body_poses, rig);
    let plane_z = ground_plane_z(body_poses, wheel_offset);
    let pairs = hsp_pairs(&cameras, rig, plane_z, &cfg.hsp)?;
    let matched = restrict_to_pairs(&tracks.tracks, &pairs);

    let initial: Vec<Option<Vector3<f64>>> = matched
        .par_iter()
        .map(|t| {
            let obs = t
                .observations
                .iter()
                .map(|o| {
                    let pose = cameras.get(&(o.frame, o.camera.clone())).ok_or(Error::UnknownFrame(o.frame))?;
                    Ok(RayObservation { world_from_camera: *pose, intrinsics: rig.camera(&o.camera)?.intrinsics, pixel: o.pixel() })
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(match triangulate(&obs)? {
                Triangulation::Point { position, .. } => Some(position),
                Triangulation::Degenerate => None,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut kept = Vec::new();
    let mut points = BTreeMap::new();
    for (t, p) in matched.iter().zip(&initial) {
        if let Some(p) = p {
            points.insert(t.id, *p);
            kept.push(t.clone());
        }
    }
    let n = cameras.len();
    let mut stats = SfmStats {
        images: n,
        plane_z,
        hsp_pairs: pairs.len(),
        exhaustive_pairs: n * n.saturating_sub(1) / 2,
        tracks_in: tracks.tracks.len(),
        tracks_matched: matched.len(),
        tracks_degenerate: matched.len() - kept.len(),
        points_out: 0,
    };
    let (model, trace) = rigid_bundle_adjust(rig, body_poses, body_poses, &kept, &points, &cfg.ba)?;
    stats.points_out = model.points.len();
    Ok(SfmOutput { model, trace, stats })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::frustum_ground_overlap;
    use crate::scenario::{generate_tracks, generate_world, NoiseSpec, TrackSpec, WorldSpec};

    #[test]
    fn ogi_composes_extrinsics() {
        let world = generate_world(&WorldSpec { frame_count: 4, ..WorldSpec::default() }).unwrap();
        let rig = CameraRig::surround();
        let cams = ogi_initialize(&world.poses(), &rig);
        assert_eq!(cams.len(), 4 * rig.cameras.len());
        for ((f, id), pose) in &cams {
            let body = world.pose(*f).unwrap();
            let back = body.inverse().compose(pose);
            let (a, d) = back.distance_to(&rig.cameras[id].body_from_camera);
            assert!(a < 1e-12 && d < 1e-12);
        }
    }

    #[test]
    fn plane_is_median_ground_height() {
        let world = generate_world(&WorldSpec::default()).unwrap();
        let z = ground_plane_z(&world.poses(), world.spec.wheel_offset);
        let mut truth: Vec<f64> = world.trajectory.iter().map(|t| world.elevation(t.pose.translation.x, t.pose.translation.y)).collect();
        truth.sort_by(f64::total_cmp);
        assert!((z - truth[truth.len() / 2]).abs() < 0.05);
    }

    #[test]
    fn hsp_matches_exhaustive_scoring() {
        let world = generate_world(&WorldSpec { frame_count: 15, ..WorldSpec::default() }).unwrap();
        let rig = CameraRig::surround();
        let cams = ogi_initialize(&world.poses(), &rig);
        let cfg = HspConfig::default();
        let z = ground_plane_z(&world.poses(), world.spec.wheel_offset);
        let fast: BTreeSet<_> = hsp_pairs(&cams, &rig, z, &cfg).unwrap().into_iter().collect();
        let keys: Vec<&ImageKey> = cams.keys().collect();
        let mut slow = BTreeSet::new();
        for i in 0..keys.len() {
            for j in i + 1..keys.len() {
                let ka = &rig.cameras[&keys[i].1].intrinsics;
                let kb = &rig.cameras[&keys[j].1].intrinsics;
                if frustum_ground_overlap((&cams[keys[i]], ka), (&cams[keys[j]], kb), z, cfg.max_range) >= cfg.overlap_min {
                    slow.insert((keys[i].clone(), keys[j].clone()));
                }
            }
        }
        assert_eq!(fast, slow);
        assert!(!fast.is_empty());
    }

    #[test]
    fn restriction_keeps_linked_observations() {
        let world = generate_world(&WorldSpec { frame_count: 30, ..WorldSpec::default() }).unwrap();
        let rig = CameraRig::surround();
        let set = generate_tracks(&world, &rig, &NoiseSpec::zero(), &TrackSpec { density: 0.3, ..TrackSpec::default() }, 2).unwrap();
        let all: Vec<(ImageKey, ImageKey)> = covisibility(&set).into_keys().collect();
        let full = restrict_to_pairs(&set.tracks, &all);
        let multi = set.tracks.iter().filter(|t| {
            t.observations.iter().map(|o| (o.frame, &o.camera)).collect::<BTreeSet<_>>().len() >= 2
        });
        assert_eq!(full.len(), multi.count());
        assert!(restrict_to_pairs(&set.tracks, &[]).is_empty());
    }
}
