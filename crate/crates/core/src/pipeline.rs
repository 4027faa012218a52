//! In-memory orchestration of the whole chain, shared by the command line
//! and the experiment harness.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evaluate::{evaluate_map, EvalConfig, ObservationSet, SreReport};
use crate::geometry::CameraRig;
use crate::scenario::{
    generate_tracks, generate_world, render_all_instances, simulate_sensors, FeatureTrackSet, GroundTruthWorld,
    NoiseSpec, PoseTable, SensorLog, TrackSpec, WorldSpec,
};
use crate::sfm::{run_sfm, SfmConfig, SfmOutput};
use crate::surface::{collect_surface_points, reconstruct_surface, RoadSurfaceModel, SurfaceConfig};
use crate::vectorize::{extract_polylines, lift_to_3d, VectorMap, VectorizeConfig};
use crate::wigo::{build_graph, optimize, WigoConfig, WigoResult};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    /// Seeds sensor noise and feature tracks. The world layout has its own seed.
    pub seed: u64,
    pub world: WorldSpec,
    pub noise: NoiseSpec,
    pub tracks: TrackSpec,
    pub wigo: WigoConfig,
    pub sfm: SfmConfig,
    pub surface: SurfaceConfig,
    pub vectorize: VectorizeConfig,
    pub evaluate: EvalConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            world: WorldSpec::default(),
            noise: NoiseSpec::default(),
            tracks: TrackSpec::default(),
            wigo: WigoConfig::default(),
            sfm: SfmConfig::default(),
            surface: SurfaceConfig::default(),
            vectorize: VectorizeConfig::default(),
            evaluate: EvalConfig::default(),
        }
    }
}

fn config_field(prefix: &str, e: Error) -> Error {
    match e {
        Error::InvalidSpec(f) | Error::InvalidConfig(f) => {
            let f = f.strip_prefix(&format!("{prefix}.")).unwrap_or(&f).to_string();
            Error::InvalidConfig(format!("{prefix}.{f}"))
        }
        e => e,
    }
}

impl PipelineConfig {
    /// Validates every section; errors name the offending field.
    pub fn validate(&self) -> Result<()> {
        self.world.validate().map_err(|e| config_field("world", e))?;
        self.noise.validate().map_err(|e| config_field("noise", e))?;
        self.tracks.validate().map_err(|e| config_field("tracks", e))?;
        self.wigo.validate().map_err(|e| config_field("wigo", e))?;
        self.sfm.validate().map_err(|e| config_field("sfm", e))?;
        self.surface.validate().map_err(|e| config_field("surface", e))?;
        self.vectorize.validate().map_err(|e| config_field("vectorize", e))?;
        self.evaluate.validate().map_err(|e| config_field("evaluate", e))
    }

    pub fn sensor_seed(&self) -> u64 {
        self.seed.wrapping_mul(2)
    }

    pub fn track_seed(&self) -> u64 {
        self.seed.wrapping_mul(2).wrapping_add(1)
    }
}

/// Everything the vehicle recorded, plus the ground truth it came from.
#[derive(Clone, Debug)]
pub struct Scenario {
    pub world: GroundTruthWorld,
    pub log: SensorLog,
    pub tracks: FeatureTrackSet,
    /// Oracle segmentation: the true map rendered at the true poses.
    pub instances: ObservationSet,
}

pub fn generate(cfg: &PipelineConfig, rig: &CameraRig) -> Result<Scenario> {
    let world = generate_world(&cfg.world)?;
    let log = simulate_sensors(&world, &cfg.noise, cfg.sensor_seed())?;
    let tracks = generate_tracks(&world, rig, &cfg.noise, &cfg.tracks, cfg.track_seed())?;
    let instances = render_all_instances(&world, rig, &world.poses(), &cfg.evaluate.reproject)?;
    Ok(Scenario { world, log, tracks, instances })
}

#[derive(Clone, Debug)]
pub struct Reconstruction {
    pub fused: WigoResult,
    pub sfm: SfmOutput,
    pub surface: RoadSurfaceModel,
    pub map: VectorMap,
}

pub fn vectorize_surface(surface: &RoadSurfaceModel, cfg: &VectorizeConfig) -> Result<VectorMap> {
    let lines = extract_polylines(&surface.semantics, cfg)?;
    lift_to_3d(&lines, &surface.elevation)
}

pub fn reconstruct(cfg: &PipelineConfig, rig: &CameraRig, log: &SensorLog, tracks: &FeatureTrackSet) -> Result<Reconstruction> {
    let fused = optimize(&build_graph(log)?, &cfg.wigo)?;
    let sfm = run_sfm(&fused.poses, rig, tracks, cfg.world.wheel_offset, &cfg.sfm)?;
    let points = collect_surface_points(&sfm.model, &sfm.model.poses, cfg.world.wheel_offset);
    let surface = reconstruct_surface(&points, &cfg.surface)?;
    let map = vectorize_surface(&surface, &cfg.vectorize)?;
    Ok(Reconstruction { fused, sfm, surface, map })
}

/// The ground-truth map with every height set to zero.
pub fn flatten_map(map: &VectorMap) -> Result<VectorMap> {
    let elements = map
        .elements
        .iter()
        .map(|e| {
            let pts = e.polyline.points().iter().map(|p| nalgebra::Vector3::new(p.x, p.y, 0.0)).collect();
            let pl = crate::geometry::Polyline3::new(pts, e.polyline.is_closed())?;
            crate::vectorize::MapElement::new(e.id, e.class, pl)
        })
        .collect::<Result<_>>()?;
    Ok(VectorMap { elements })
}

/// Dead-reckoned poses: odometry chained from the first GNSS fix.
pub fn dead_reckoning(log: &SensorLog) -> Result<PoseTable> {
    Ok(build_graph(log)?.nodes)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArmSummary {
    pub sre: Option<f64>,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl From<&SreReport> for ArmSummary {
    fn from(r: &SreReport) -> Self {
        Self { sre: r.sre, precision: r.precision, recall: r.recall, f1: r.f1 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub seed: u64,
    /// Flat ground-truth map under dead-reckoned poses.
    pub baseline: ArmSummary,
    /// Reconstructed map under refined poses.
    pub reconstructed: ArmSummary,
    /// `reconstructed.sre / baseline.sre`.
    pub ratio: Option<f64>,
}

pub struct ExperimentRun {
    pub result: ExperimentResult,
    pub baseline: SreReport,
    pub reconstructed: SreReport,
    pub reconstruction: Reconstruction,
}

/// Both arms on one scenario.
pub fn run_experiment(cfg: &PipelineConfig, rig: &CameraRig) -> Result<ExperimentRun> {
    cfg.validate()?;
    let scenario = generate(cfg, rig)?;
    let flat = flatten_map(&scenario.world.map)?;
    let dr = dead_reckoning(&scenario.log)?;
    let (baseline, _) = evaluate_map(&flat, &dr, rig, &scenario.instances, &cfg.evaluate)?;
    let reconstruction = reconstruct(cfg, rig, &scenario.log, &scenario.tracks)?;
    let (reconstructed, _) =
        evaluate_map(&reconstruction.map, &reconstruction.sfm.model.poses, rig, &scenario.instances, &cfg.evaluate)?;
    let ratio = match (reconstructed.sre, baseline.sre) {
        (Some(b), Some(a)) if a > 1e-9 => Some(b / a),
        _ => None,
    };
    let result = ExperimentResult {
        seed: cfg.seed,
        baseline: (&baseline).into(),
        reconstructed: (&reconstructed).into(),
        ratio,
    };
    Ok(ExperimentRun { result, baseline, reconstructed, reconstruction })
}
