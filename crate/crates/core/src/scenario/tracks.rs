use nalgebra::{Vector2, Vector3};
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::world::{GroundTruthWorld, RoadLayout};
use crate::error::{Error, Result};
use crate::geometry::{project, CameraRig, Pose, Projection};

use super::sensors::NoiseSpec;

/// Half width of painted lines.
pub const MARKING_HALF_WIDTH: f64 = 0.075;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrackClass {
    Road,
    LaneMarking,
    PedCrossing,
    OffRoad,
}

impl TrackClass {
    pub fn is_road_surface(self) -> bool {
        self != TrackClass::OffRoad
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub frame: u32,
    pub camera: String,
    pub pixel: [f64; 2],
}

impl Observation {
    pub fn pixel(&self) -> Vector2<f64> {
        Vector2::from(self.pixel)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Track {
    pub id: u32,
    /// Ground-truth point, kept for oracles only.
    pub point: [f64; 3],
    pub class: TrackClass,
    pub observations: Vec<Observation>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FeatureTrackSet {
    pub tracks: Vec<Track>,
}

impl FeatureTrackSet {
    pub fn observation_count(&self) -> usize {
        self.tracks.iter().map(|t| t.observations.len()).sum()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrackSpec {
    /// Sampled points per square meter of road plus off-road band.
    pub density: f64,
    /// Maximum camera-to-point distance for an observation.
    pub max_range: f64,
    pub road_fraction: f64,
    /// Fraction of road points drawn on painted elements.
    pub paint_fraction: f64,
    /// Width of the off-road band on each side.
    pub off_road_width: f64,
}

impl Default for TrackSpec {
    fn default() -> Self {
        Self { density: 1.2, max_range: 20.0, road_fraction: 0.7, paint_fraction: 0.55, off_road_width: 6.0 }
    }
}

impl TrackSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.density > 0.0) || !self.density.is_finite() {
            return Err(Error::InvalidSpec("tracks.density".into()));
        }
        if !(self.max_range > 0.0) {
            return Err(Error::InvalidSpec("tracks.max_range".into()));
        }
        for (name, v) in [("road_fraction", self.road_fraction), ("paint_fraction", self.paint_fraction)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::InvalidSpec(format!("tracks.{name}")));
            }
        }
        if !(self.off_road_width > 0.0) {
            return Err(Error::InvalidSpec("tracks.off_road_width".into()));
        }
        Ok(())
    }
}

/// Draws `(s, lateral, class)` for one sampled point.
fn sample_point(
    rng: &mut ChaCha8Rng,
    layout: &RoadLayout,
    paint_length: f64,
    road_length: f64,
    half: f64,
    spec: &TrackSpec,
) -> (f64, f64, TrackClass) {
    if rng.random::<f64>() >= spec.road_fraction {
        let side = if rng.random::<bool>() { 1.0 } else { -1.0 };
        let lat = side * (half + rng.random_range(0.2..spec.off_road_width));
        return (rng.random_range(0.0..road_length), lat, TrackClass::OffRoad);
    }
    if rng.random::<f64>() < spec.paint_fraction && paint_length > 0.0 {
        let mut t = rng.random_range(0.0..paint_length);
        for line in &layout.lines {
            for &(a, b) in &line.s_ranges {
                if t < b - a {
                    let lat = line.lateral + rng.random_range(-MARKING_HALF_WIDTH..MARKING_HALF_WIDTH);
                    return (a + t, lat, TrackClass::LaneMarking);
                }
                t -= b - a;
            }
        }
        for c in &layout.crossings {
            if t < c.perimeter() {
                let (s, lat) = c.perimeter_point(t);
                return (s, lat, TrackClass::PedCrossing);
            }
            t -= c.perimeter();
        }
        let (s, lat) = layout.crossings.last().map_or((0.0, 0.0), |c| c.perimeter_point(0.0));
        return (s, lat, TrackClass::PedCrossing);
    }
    let s = rng.random_range(0.0..road_length);
    let lat = rng.random_range(-half..half);
    let painted = layout.lines.iter().any(|l| {
        (lat - l.lateral).abs() <= MARKING_HALF_WIDTH && l.s_ranges.iter().any(|&(a, b)| s >= a && s <= b)
    });
    (s, lat, if painted { TrackClass::LaneMarking } else { TrackClass::Road })
}

/// Every `(frame, camera, T_world_camera)` of the trajectory.
pub(crate) fn camera_table(poses: &[(u32, Pose)], rig: &CameraRig) -> Vec<(u32, String, Pose, Vector3<f64>)> {
    let mut out = Vec::new();
    for (frame, body) in poses {
        for (id, cam) in &rig.cameras {
            let world_cam = body.compose(&cam.body_from_camera);
            out.push((*frame, id.clone(), world_cam, body.translation));
        }
    }
    out
}

pub fn generate_tracks(
    world: &GroundTruthWorld,
    rig: &CameraRig,
    noise: &NoiseSpec,
    spec: &TrackSpec,
    seed: u64,
) -> Result<FeatureTrackSet> {
    spec.validate()?;
    noise.validate()?;
    rig.validate()?;
    let layout = world.spec.layout();
    let half = world.spec.half_width();
    let road_length = world.spec.road_length;
    let paint_length: f64 = layout.lines.iter().flat_map(|l| l.s_ranges.iter().map(|(a, b)| b - a)).sum::<f64>()
        + layout.crossings.iter().map(|c| c.perimeter()).sum::<f64>();
    let area = road_length * 2.0 * (half + spec.off_road_width);
    let count = (spec.density * area).round() as u64;
    let surface = world.surface();
    let poses: Vec<(u32, Pose)> = world.trajectory.iter().map(|t| (t.frame, t.pose)).collect();
    let cams = camera_table(&poses, rig);
    let reach = spec.max_range + 2.0;

    let tracks: Vec<Option<Track>> = (0..count)
        .into_par_iter()
        .map(|k| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(k);
            let (s, lat, class) = sample_point(&mut rng, &layout, paint_length, road_length, half, spec);
            let point = surface.point(s, lat);
            let mut observations = Vec::new();
            for (frame, cam_id, world_cam, body) in &cams {
                if (point.xy() - body.xy()).norm() > reach || (point - world_cam.translation).norm() > spec.max_range {
                    continue;
                }
                let k = &rig.cameras[cam_id].intrinsics;
                let Projection::Pixel(px) = project(&point, world_cam, k) else { continue };
                if !k.contains(&px) {
                    continue;
                }
                let nu: f64 = StandardNormal.sample(&mut rng);
                let nv: f64 = StandardNormal.sample(&mut rng);
                let drop = rng.random::<f64>() < noise.track_dropout;
                if drop {
                    continue;
                }
                let px = px + Vector2::new(nu, nv) * noise.pixel_sigma;
                observations.push(Observation { frame: *frame, camera: cam_id.clone(), pixel: [px.x, px.y] });
            }
            (observations.len() >= 2).then(|| Track { id: 0, point: point.into(), class, observations })
        })
        .collect();

    let tracks = tracks
        .into_iter()
        .flatten()
        .enumerate()
        .map(|(i, mut t)| {
            t.id = i as u32;
            t
        })
        .collect();
    Ok(FeatureTrackSet { tracks })
}

/// Displaces every observation of `fraction` of the tracks by `magnitude`
/// pixels in a random direction. Returns the affected track ids, sorted.
pub fn contaminate_tracks(set: &mut FeatureTrackSet, fraction: f64, magnitude: f64, seed: u64) -> Vec<u32> {
    let n = set.tracks.len();
    let m = ((fraction * n as f64).ceil() as usize).min(n);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked: Vec<usize> = index::sample(&mut rng, n, m).into_vec();
    picked.sort_unstable();
    for &i in &picked {
        for obs in &mut set.tracks[i].observations {
            let a = rng.random_range(0.0..std::f64::consts::TAU);
            obs.pixel[0] += magnitude * a.cos();
            obs.pixel[1] += magnitude * a.sin();
        }
    }
    picked.into_iter().map(|i| set.tracks[i].id).collect()
}
