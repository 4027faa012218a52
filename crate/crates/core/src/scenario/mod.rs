//! Deterministic synthetic driving world: ground-truth map draped on an
//! analytic elevation profile, a vehicle trajectory, noisy sensor logs,
//! multi-camera feature tracks and an instance oracle.

mod render;
mod road;
mod sensors;
mod tracks;
mod world;

pub use render::{render_all_instances, render_observed_instances};
pub use road::{Centerline, ElevationProfile, RoadSurface};
pub use sensors::{simulate_sensors, GnssFix, NoiseSpec, OdometryDelta, SensorLog};
pub use tracks::{
    contaminate_tracks, generate_tracks, FeatureTrackSet, Observation, Track, TrackClass, TrackSpec,
    MARKING_HALF_WIDTH,
};
pub use world::{
    generate_world, CrossingLayout, GroundTruthWorld, LineLayout, PoseTable, RoadLayout, TrajectorySample, WorldSpec,
    CROSSING_INSET, DIVIDER_GAP, MAP_SAMPLE_SPACING,
};

