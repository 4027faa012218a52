use std::collections::BTreeMap;

use nalgebra::{UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use super::road::{Centerline, ElevationProfile, RoadSurface};
use crate::error::{Error, Result};
use crate::geometry::{Polyline3, Pose};
use crate::vectorize::{ElementClass, MapElement, VectorMap};

/// Longitudinal gap left in dividers on both sides of a crossing.
pub const DIVIDER_GAP: f64 = 2.0;
/// Lateral inset of crossings from the road boundaries.
pub const CROSSING_INSET: f64 = 0.3;
/// Arc-length spacing of ground-truth polyline vertices.
pub const MAP_SAMPLE_SPACING: f64 = 0.5;

/// Frame id to `T_world_body`.
pub type PoseTable = BTreeMap<u32, Pose>;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WorldSpec {
    pub seed: u64,
    pub road_length: f64,
    pub lane_count: u32,
    pub lane_width: f64,
    /// `(arc_length, curvature)` knots, curvature constant between knots.
    pub curvature_profile: Vec<(f64, f64)>,
    pub elevation_amplitude: f64,
    pub elevation_wavelength: f64,
    pub ped_crossing_count: u32,
    pub crossing_depth: f64,
    pub frame_count: u32,
    pub frame_rate: f64,
    /// Distance driven between frames.
    pub frame_spacing: f64,
    /// Arc length of the first frame.
    pub trajectory_start: f64,
    /// Height of the body origin above the road.
    pub wheel_offset: f64,
}

impl Default for WorldSpec {
    fn default() -> Self {
        Self {
            seed: 0,
            road_length: 240.0,
            lane_count: 2,
            lane_width: 3.5,
            curvature_profile: vec![(0.0, 0.0), (40.0, 0.004), (110.0, -0.003), (170.0, 0.0)],
            elevation_amplitude: 0.6,
            elevation_wavelength: 100.0,
            ped_crossing_count: 2,
            crossing_depth: 4.0,
            frame_count: 200,
            frame_rate: 10.0,
            frame_spacing: 1.0,
            trajectory_start: 20.0,
            wheel_offset: 0.35,
        }
    }
}

impl WorldSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |f: &str| Err(Error::InvalidSpec(format!("world.{f}")));
        if !(self.road_length > 0.0) || !self.road_length.is_finite() {
            return bad("road_length");
        }
        if self.lane_count < 1 {
            return bad("lane_count");
        }
        if !(self.lane_width > 0.0) {
            return bad("lane_width");
        }
        if !(self.elevation_wavelength > 0.0) {
            return bad("elevation_wavelength");
        }
        if !self.elevation_amplitude.is_finite() {
            return bad("elevation_amplitude");
        }
        if self.curvature_profile.windows(2).any(|w| !(w[1].0 > w[0].0))
            || self.curvature_profile.iter().any(|(s, k)| !s.is_finite() || !k.is_finite())
        {
            return bad("curvature_profile");
        }
        if !(self.crossing_depth > 0.0) {
            return bad("crossing_depth");
        }
        let slot = self.road_length / (self.ped_crossing_count as f64 + 1.0);
        if self.ped_crossing_count > 0 && self.crossing_depth + 2.0 * DIVIDER_GAP >= slot {
            return bad("ped_crossing_count");
        }
        if self.frame_count < 2 {
            return bad("frame_count");
        }
        if !(self.frame_rate > 0.0) {
            return bad("frame_rate");
        }
        if !(self.frame_spacing > 0.0) {
            return bad("frame_spacing");
        }
        let end = self.trajectory_start + (self.frame_count - 1) as f64 * self.frame_spacing;
        if !(self.trajectory_start >= 0.0) || end > self.road_length {
            return bad("trajectory_start");
        }
        if !(self.wheel_offset >= 0.0) {
            return bad("wheel_offset");
        }
        Ok(())
    }

    pub fn half_width(&self) -> f64 {
        0.5 * self.lane_count as f64 * self.lane_width
    }

    /// Lateral offset of the lane the vehicle drives in (rightmost lane).
    pub fn vehicle_lateral(&self) -> f64 {
        -self.half_width() + 0.5 * self.lane_width
    }

    pub fn surface(&self) -> RoadSurface {
        RoadSurface {
            centerline: Centerline::new(self.road_length, &self.curvature_profile),
            elevation: ElevationProfile { amplitude: self.elevation_amplitude, wavelength: self.elevation_wavelength },
        }
    }

    /// Painted elements in road coordinates.
    pub fn layout(&self) -> RoadLayout {
        let half = self.half_width();
        let crossings: Vec<CrossingLayout> = (0..self.ped_crossing_count)
            .map(|k| {
                let center = self.road_length * (k + 1) as f64 / (self.ped_crossing_count as f64 + 1.0);
                CrossingLayout {
                    s0: center - 0.5 * self.crossing_depth,
                    s1: center + 0.5 * self.crossing_depth,
                    half_span: half - CROSSING_INSET,
                }
            })
            .collect();
        let lines = (0..=self.lane_count)
            .map(|i| {
                let lateral = -half + i as f64 * self.lane_width;
                let outer = i == 0 || i == self.lane_count;
                let s_ranges = if outer {
                    vec![(0.0, self.road_length)]
                } else {
                    let mut ranges = Vec::new();
                    let mut s = 0.0;
                    for c in &crossings {
                        ranges.push((s, c.s0 - DIVIDER_GAP));
                        s = c.s1 + DIVIDER_GAP;
                    }
                    ranges.push((s, self.road_length));
                    ranges
                };
                LineLayout {
                    class: if outer { ElementClass::Boundary } else { ElementClass::Divider },
                    lateral,
                    s_ranges,
                }
            })
            .collect();
        RoadLayout { lines, crossings }
    }
}

#[derive(Clone, Debug)]
pub struct LineLayout {
    pub class: ElementClass,
    pub lateral: f64,
    pub s_ranges: Vec<(f64, f64)>,
}

/// Crossing rectangle in `(s, lateral)`: `[s0, s1] × [-half_span, half_span]`.
#[derive(Clone, Copy, Debug)]
pub struct CrossingLayout {
    pub s0: f64,
    pub s1: f64,
    pub half_span: f64,
}

impl CrossingLayout {
    pub fn contains(&self, s: f64, lateral: f64) -> bool {
        s >= self.s0 && s <= self.s1 && lateral.abs() <= self.half_span
    }

    pub fn perimeter(&self) -> f64 {
        2.0 * (self.s1 - self.s0) + 4.0 * self.half_span
    }

    /// Point at distance `d` along the counter-clockwise perimeter.
    pub fn perimeter_point(&self, d: f64) -> (f64, f64) {
        let depth = self.s1 - self.s0;
        let span = 2.0 * self.half_span;
        let d = d.rem_euclid(self.perimeter());
        if d < depth {
            (self.s0 + d, -self.half_span)
        } else if d < depth + span {
            (self.s1, -self.half_span + (d - depth))
        } else if d < 2.0 * depth + span {
            (self.s1 - (d - depth - span), self.half_span)
        } else {
            (self.s0, self.half_span - (d - 2.0 * depth - span))
        }
    }
}

#[derive(Clone, Debug)]
pub struct RoadLayout {
    pub lines: Vec<LineLayout>,
    pub crossings: Vec<CrossingLayout>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySample {
    pub frame: u32,
    pub timestamp: f64,
    /// `T_world_body`
    pub pose: Pose,
}

#[derive(Clone, Debug)]
pub struct GroundTruthWorld {
    pub spec: WorldSpec,
    pub map: VectorMap,
    pub trajectory: Vec<TrajectorySample>,
    surface: RoadSurface,
}

#[derive(Serialize)]
struct WorldReprRef<'a> {
    spec: &'a WorldSpec,
    map: &'a VectorMap,
    trajectory: &'a [TrajectorySample],
}

#[derive(Deserialize)]
struct WorldRepr {
    spec: WorldSpec,
    map: VectorMap,
    trajectory: Vec<TrajectorySample>,
}

impl Serialize for GroundTruthWorld {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        WorldReprRef { spec: &self.spec, map: &self.map, trajectory: &self.trajectory }.serialize(s)
    }
}

impl<'de> Deserialize<'de> for GroundTruthWorld {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let r = WorldRepr::deserialize(d)?;
        r.spec.validate().map_err(serde::de::Error::custom)?;
        if r.trajectory.windows(2).any(|w| !(w[1].timestamp > w[0].timestamp)) {
            return Err(serde::de::Error::custom("trajectory timestamps must increase"));
        }
        let surface = r.spec.surface();
        Ok(GroundTruthWorld { spec: r.spec, map: r.map, trajectory: r.trajectory, surface })
    }
}

impl GroundTruthWorld {
    pub fn surface(&self) -> &RoadSurface {
        &self.surface
    }

    /// Analytic road height at `(x, y)`.
    pub fn elevation(&self, x: f64, y: f64) -> f64 {
        self.surface.height_at(x, y)
    }

    pub fn poses(&self) -> PoseTable {
        self.trajectory.iter().map(|t| (t.frame, t.pose)).collect()
    }

    pub fn pose(&self, frame: u32) -> Result<&Pose> {
        self.trajectory.iter().find(|t| t.frame == frame).map(|t| &t.pose).ok_or(Error::UnknownFrame(frame))
    }

    /// Copy of this world with a different map, e.g. for evaluating other maps.
    pub fn with_map(&self, map: VectorMap) -> GroundTruthWorld {
        GroundTruthWorld { map, ..self.clone() }
    }
}

fn sample_range(s0: f64, s1: f64, spacing: f64) -> Vec<f64> {
    let n = ((s1 - s0) / spacing).ceil().max(1.0) as usize;
    (0..=n).map(|k| s0 + (s1 - s0) * k as f64 / n as f64).collect()
}

pub fn generate_world(spec: &WorldSpec) -> Result<GroundTruthWorld> {
    spec.validate()?;
    let surface = spec.surface();
    let layout = spec.layout();
    let mut elements = Vec::new();
    let mut next_id = 0u32;

    for line in &layout.lines {
        for &(a, b) in &line.s_ranges {
            let pts = sample_range(a, b, MAP_SAMPLE_SPACING).into_iter().map(|s| surface.point(s, line.lateral)).collect();
            elements.push(MapElement::new(next_id, line.class, Polyline3::new(pts, false)?)?);
            next_id += 1;
        }
    }
    for c in &layout.crossings {
        let h = c.half_span;
        let mut pts: Vec<Vector3<f64>> = Vec::new();
        for s in sample_range(c.s0, c.s1, MAP_SAMPLE_SPACING) {
            pts.push(surface.point(s, -h));
        }
        for s in sample_range(c.s0, c.s1, MAP_SAMPLE_SPACING).into_iter().rev() {
            pts.push(surface.point(s, h));
        }
        elements.push(MapElement::new(next_id, ElementClass::PedCrossing, Polyline3::new(pts, true)?)?);
        next_id += 1;
    }

    let lateral = spec.vehicle_lateral();
    let trajectory = (0..spec.frame_count)
        .map(|i| {
            let s = spec.trajectory_start + i as f64 * spec.frame_spacing;
            let ground = surface.point(s, lateral);
            let yaw = surface.centerline.heading(s);
            let stretch = 1.0 - surface.centerline.curvature(s) * lateral;
            let pitch = (surface.elevation.slope(s) / stretch).atan();
            let rotation = UnitQuaternion::from_axis_angle(&Vector3::z_axis(), yaw)
                * UnitQuaternion::from_axis_angle(&Vector3::y_axis(), -pitch);
            TrajectorySample {
                frame: i,
                timestamp: i as f64 / spec.frame_rate,
                pose: Pose::new(rotation, ground + Vector3::new(0.0, 0.0, spec.wheel_offset)),
            }
        })
        .collect();

    Ok(GroundTruthWorld { spec: spec.clone(), map: VectorMap { elements }, trajectory, surface })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Vector2;

    #[test]
    fn deterministic_and_roundtrips() {
        let spec = WorldSpec::default();
        let a = serde_json::to_string(&generate_world(&spec).unwrap()).unwrap();
        let b = serde_json::to_string(&generate_world(&spec).unwrap()).unwrap();
        assert_eq!(a, b);
        let back: GroundTruthWorld = serde_json::from_str(&a).unwrap();
        assert_eq!(serde_json::to_string(&back).unwrap(), a);
    }

    #[test]
    fn rejects_bad_spec() {
        for spec in [
            WorldSpec { road_length: 0.0, ..WorldSpec::default() },
            WorldSpec { lane_count: 0, ..WorldSpec::default() },
            WorldSpec { lane_width: -1.0, ..WorldSpec::default() },
            WorldSpec { elevation_wavelength: 0.0, ..WorldSpec::default() },
        ] {
            assert!(matches!(generate_world(&spec), Err(Error::InvalidSpec(_))));
        }
    }

    #[test]
    fn lines_are_offset_by_lane_width() {
        let spec = WorldSpec { ped_crossing_count: 0, ..WorldSpec::default() };
        let w = generate_world(&spec).unwrap();
        let lines: Vec<_> = w.map.elements.iter().filter(|e| e.class != ElementClass::PedCrossing).collect();
        assert_eq!(lines.len(), 3);
        assert_eq!(lines.iter().filter(|e| e.class == ElementClass::Divider).count(), 1);
        let cl = &w.surface().centerline;
        // offsets recovered by independent projection onto the centerline
        for k in 0..lines[0].polyline.len() {
            let lat: Vec<f64> = lines
                .iter()
                .map(|e| {
                    let p = e.polyline.points()[k];
                    cl.project(&Vector2::new(p.x, p.y)).1
                })
                .collect();
            assert!((lat[1] - lat[0] - 3.5).abs() < 1e-9);
            assert!((lat[2] - lat[1] - 3.5).abs() < 1e-9);
        }
    }

    #[test]
    fn vertices_lie_on_surface_and_time_increases() {
        let w = generate_world(&WorldSpec::default()).unwrap();
        for e in &w.map.elements {
            for p in e.polyline.points() {
                assert!((p.z - w.elevation(p.x, p.y)).abs() <= 1e-9);
            }
        }
        assert!(w.trajectory.windows(2).all(|t| t[1].timestamp > t[0].timestamp));
        assert_eq!(w.map.elements.iter().filter(|e| e.class == ElementClass::PedCrossing).count(), 2);
        // one divider split into three pieces by two crossings
        assert_eq!(w.map.elements.iter().filter(|e| e.class == ElementClass::Divider).count(), 3);
    }

    #[test]
    fn body_sits_above_road_and_follows_heading() {
        let w = generate_world(&WorldSpec::default()).unwrap();
        for t in &w.trajectory {
            let p = t.pose.translation;
            assert!((p.z - w.spec.wheel_offset - w.elevation(p.x, p.y)).abs() < 1e-9);
        }
        for pair in w.trajectory.windows(2) {
            let d = pair[1].pose.translation - pair[0].pose.translation;
            let fwd = pair[0].pose.rotation * Vector3::x();
            assert!(d.normalize().dot(&fwd) > 0.999);
        }
    }

    #[test]
    fn crossing_perimeter_walk() {
        let c = CrossingLayout { s0: 10.0, s1: 14.0, half_span: 3.0 };
        assert_eq!(c.perimeter(), 20.0);
        assert_eq!(c.perimeter_point(0.0), (10.0, -3.0));
        assert_eq!(c.perimeter_point(5.0), (14.0, -2.0));
        assert_eq!(c.perimeter_point(12.0), (12.0, 3.0));
        assert_eq!(c.perimeter_point(18.0), (10.0, -1.0));
    }
}
