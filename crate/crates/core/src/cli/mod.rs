//! Command-line orchestration: one configuration, one output directory, one
//! JSON artifact set per stage.

pub mod artifacts;

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{CommandFactory, FromArgMatches, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::evaluate::{evaluate_map, InstanceFile, ObservationSet, SreReport};
use crate::geometry::CameraRig;
use crate::pipeline::{self, ExperimentResult, PipelineConfig};
use crate::scenario::{FeatureTrackSet, PoseTable, SensorLog};
use crate::sfm::{run_sfm, SparseModel};
use crate::surface::{collect_surface_points, reconstruct_surface, BevRaster, ElevationField, RoadSurfaceModel};
use crate::vectorize::VectorMap;
use crate::wigo::{build_graph, optimize};
use artifacts::*;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    #[serde(flatten)]
    pub pipeline: PipelineConfig,
    /// Camera rig JSON; the built-in six-camera surround rig when absent.
    pub rig: Option<PathBuf>,
    pub output_dir: PathBuf,
    /// Number of consecutive seeds run by `experiment`.
    pub experiment_seeds: u32,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            pipeline: PipelineConfig::default(),
            rig: None,
            output_dir: PathBuf::from("mapforge_out"),
            experiment_seeds: 10,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        self.pipeline.validate()?;
        if self.experiment_seeds == 0 {
            return Err(Error::InvalidConfig("experiment_seeds".into()));
        }
        Ok(())
    }

    pub fn load_rig(&self) -> Result<CameraRig> {
        let rig = match &self.rig {
            Some(p) => serde_json::from_slice(&std::fs::read(p).map_err(|e| match e.kind() {
                std::io::ErrorKind::NotFound => Error::MissingArtifact(p.display().to_string()),
                _ => Error::Io(e),
            })?)?,
            None => CameraRig::surround(),
        };
        rig.validate().map_err(|e| match e {
            Error::InvalidSpec(f) => Error::InvalidConfig(format!("rig: {f}")),
            e => e,
        })?;
        Ok(rig)
    }

    /// Applies a dotted-path override such as `evaluate.tau=12.5`. The value
    /// is parsed as JSON, falling back to a plain string.
    pub fn set(&mut self, assignment: &str) -> Result<()> {
        let (path, raw) =
            assignment.split_once('=').ok_or_else(|| Error::InvalidConfig(format!("override {assignment:?}")))?;
        let value: Value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
        let mut tree = serde_json::to_value(&*self)?;
        let mut node = &mut tree;
        for key in path.split('.') {
            node = node
                .as_object_mut()
                .and_then(|o| o.get_mut(key))
                .ok_or_else(|| Error::InvalidConfig(path.to_string()))?;
        }
        *node = value;
        *self = serde_json::from_value(tree).map_err(|_| Error::InvalidConfig(path.to_string()))?;
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stage {
    Generate,
    Wigo,
    Sfm,
    Surface,
    Vectorize,
    Evaluate,
}

impl Stage {
    pub const ALL: [Stage; 6] =
        [Stage::Generate, Stage::Wigo, Stage::Sfm, Stage::Surface, Stage::Vectorize, Stage::Evaluate];
}

fn write_effective_config(cfg: &RunConfig) -> Result<()> {
    write_json_pretty(&cfg.output_dir.join(EFFECTIVE_CONFIG), cfg)
}

fn read_instances(dir: &Path) -> Result<ObservationSet> {
    let inst = dir.join(INSTANCES);
    let entries = std::fs::read_dir(&inst).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::MissingArtifact(format!("{INSTANCES}/")),
        _ => Error::Io(e),
    })?;
    let mut names: Vec<String> = entries
        .filter_map(|e| e.ok())
        .filter_map(|e| e.file_name().into_string().ok())
        .filter(|n| n.ends_with(".json") && !n.starts_with('.'))
        .collect();
    names.sort();
    let mut out = ObservationSet::new();
    for n in names {
        let f: InstanceFile = read_json(&inst, &n)?;
        out.insert((f.frame, f.camera), f.instances);
    }
    Ok(out)
}

/// Runs one stage against the artifacts already in `output_dir`.
pub fn run_stage(stage: Stage, cfg: &RunConfig, overlays: bool) -> Result<()> {
    cfg.validate()?;
    let dir = cfg.output_dir.as_path();
    let _lock = OutputLock::acquire(dir)?;
    stage_body(stage, cfg, overlays)?;
    write_effective_config(cfg)
}

fn stage_body(stage: Stage, cfg: &RunConfig, overlays: bool) -> Result<()> {
    let dir = cfg.output_dir.as_path();
    let p = &cfg.pipeline;
    match stage {
        Stage::Generate => {
            let rig = cfg.load_rig()?;
            let sc = pipeline::generate(p, &rig)?;
            write_json(&dir.join(WORLD), &sc.world)?;
            write_json_pretty(&dir.join(RIG), &rig)?;
            write_json(&dir.join(SENSOR_LOG), &sc.log)?;
            write_json(&dir.join(TRACKS), &sc.tracks)?;
            let inst = dir.join(INSTANCES);
            if inst.exists() {
                std::fs::remove_dir_all(&inst)?;
            }
            for ((frame, camera), instances) in sc.instances {
                let name = instance_file_name(frame, &camera);
                write_json(&inst.join(name), &InstanceFile { frame, camera, instances })?;
            }
        }
        Stage::Wigo => {
            let log: SensorLog = read_json(dir, SENSOR_LOG)?;
            let fused = optimize(&build_graph(&log)?, &p.wigo)?;
            write_json(&dir.join(POSES_WIGO), &fused.poses)?;
            write_json(&dir.join(WIGO_TRACE), &fused.trace)?;
        }
        Stage::Sfm => {
            let poses: PoseTable = read_json(dir, POSES_WIGO)?;
            let tracks: FeatureTrackSet = read_json(dir, TRACKS)?;
            let rig: CameraRig = read_json(dir, RIG)?;
            let out = run_sfm(&poses, &rig, &tracks, p.world.wheel_offset, &p.sfm)?;
            write_json(&dir.join(SPARSE_MODEL), &out.model)?;
            write_json(&dir.join(POSES_REFINED), &out.model.poses)?;
            write_json(&dir.join(BA_TRACE), &out.trace)?;
            write_json_pretty(&dir.join(SFM_STATS), &out.stats)?;
        }
        Stage::Surface => {
            let model: SparseModel = read_json(dir, SPARSE_MODEL)?;
            let points = collect_surface_points(&model, &model.poses, p.world.wheel_offset);
            let s = reconstruct_surface(&points, &p.surface)?;
            write_json(&dir.join(ELEVATION), &s.elevation)?;
            write_json(&dir.join(SEMANTICS), &s.semantics)?;
        }
        Stage::Vectorize => {
            let elevation: ElevationField = read_json(dir, ELEVATION)?;
            let semantics: BevRaster = read_json(dir, SEMANTICS)?;
            let map = pipeline::vectorize_surface(&RoadSurfaceModel { elevation, semantics }, &p.vectorize)?;
            write_json_pretty(&dir.join(MAP), &map)?;
        }
        Stage::Evaluate => {
            let map: VectorMap = read_json(dir, MAP)?;
            let poses: PoseTable = read_json(dir, POSES_REFINED)?;
            let rig: CameraRig = read_json(dir, RIG)?;
            let observed = read_instances(dir)?;
            let (report, details) = evaluate_map(&map, &poses, &rig, &observed, &p.evaluate)?;
            write_json_pretty(&dir.join(REPORT), &report)?;
            if overlays {
                for ((ms, projected), ((frame, camera), obs)) in details.iter().zip(&observed) {
                    let dump = serde_json::json!({
                        "frame": frame,
                        "camera": camera,
                        "projected": projected,
                        "observed": obs,
                        "matches": ms.pairs,
                    });
                    write_json(&dir.join(OVERLAYS).join(instance_file_name(*frame, camera)), &dump)?;
                }
            }
        }
    }
    Ok(())
}

/// All stages in order under one lock.
pub fn run_pipeline(cfg: &RunConfig, overlays: bool) -> Result<SreReport> {
    cfg.validate()?;
    let _lock = OutputLock::acquire(&cfg.output_dir)?;
    for stage in Stage::ALL {
        stage_body(stage, cfg, overlays)?;
    }
    write_effective_config(cfg)?;
    read_json(&cfg.output_dir, REPORT)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub runs: Vec<ExperimentResult>,
    pub mean_sre_baseline: Option<f64>,
    pub mean_sre_reconstructed: Option<f64>,
    /// Ratio of the two means, reconstructed over baseline.
    pub sre_ratio: Option<f64>,
    pub mean_f1_baseline: f64,
    pub mean_f1_reconstructed: f64,
}

impl ExperimentReport {
    pub fn from_runs(runs: Vec<ExperimentResult>) -> Self {
        let n = runs.len().max(1) as f64;
        let mean = |v: Vec<Option<f64>>| -> Option<f64> {
            let v: Option<Vec<f64>> = v.into_iter().collect();
            v.filter(|v| !v.is_empty()).map(|v| v.iter().sum::<f64>() / v.len() as f64)
        };
        let a = mean(runs.iter().map(|r| r.baseline.sre).collect());
        let b = mean(runs.iter().map(|r| r.reconstructed.sre).collect());
        Self {
            mean_f1_baseline: runs.iter().map(|r| r.baseline.f1).sum::<f64>() / n,
            mean_f1_reconstructed: runs.iter().map(|r| r.reconstructed.f1).sum::<f64>() / n,
            sre_ratio: match (a, b) {
                (Some(a), Some(b)) if a > 1e-9 => Some(b / a),
                _ => None,
            },
            mean_sre_baseline: a,
            mean_sre_reconstructed: b,
            runs,
        }
    }
}

/// Both arms over `experiment_seeds` consecutive seeds starting at `seed`.
pub fn run_experiment(cfg: &RunConfig) -> Result<ExperimentReport> {
    cfg.validate()?;
    let _lock = OutputLock::acquire(&cfg.output_dir)?;
    let rig = cfg.load_rig()?;
    let mut runs = Vec::new();
    for k in 0..cfg.experiment_seeds as u64 {
        let p = PipelineConfig { seed: cfg.pipeline.seed.wrapping_add(k), ..cfg.pipeline.clone() };
        runs.push(pipeline::run_experiment(&p, &rig)?.result);
    }
    let report = ExperimentReport::from_runs(runs);
    write_json_pretty(&cfg.output_dir.join(EXPERIMENT), &report)?;
    write_effective_config(cfg)?;
    Ok(report)
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |v| format!("{v:.3}"))
}

pub fn render_report(report: &SreReport) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "{:<14} {:>9} {:>9} {:>9} {:>9} {:>8} {:>6} {:>6}", "class", "SRE[px]", "P", "R", "F1", "matched", "FP", "FN");
    let mut row = |name: &str, sre: Option<f64>, p: f64, r: f64, f1: f64, m: usize, fp: usize, fn_: usize| {
        let _ = writeln!(s, "{name:<14} {:>9} {p:>9.3} {r:>9.3} {f1:>9.3} {m:>8} {fp:>6} {fn_:>6}", fmt_opt(sre));
    };
    for (c, m) in &report.per_class {
        row(c.name(), m.sre, m.precision, m.recall, m.f1, m.matched, m.false_positives, m.false_negatives);
    }
    row(
        "all",
        report.sre,
        report.precision,
        report.recall,
        report.f1,
        report.matched,
        report.false_positives,
        report.false_negatives,
    );
    let _ = writeln!(s, "tau = {} px, {} images", report.tau, report.per_image.len());
    s
}

pub fn render_experiment(report: &ExperimentReport) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "{:>6} {:>10} {:>8} {:>10} {:>8} {:>7}", "seed", "SRE flat", "F1 flat", "SRE recon", "F1 recon", "ratio");
    for r in &report.runs {
        let _ = writeln!(
            s,
            "{:>6} {:>10} {:>8.3} {:>10} {:>8.3} {:>7}",
            r.seed,
            fmt_opt(r.baseline.sre),
            r.baseline.f1,
            fmt_opt(r.reconstructed.sre),
            r.reconstructed.f1,
            fmt_opt(r.ratio)
        );
    }
    let _ = writeln!(
        s,
        "{:>6} {:>10} {:>8.3} {:>10} {:>8.3} {:>7}",
        "mean",
        fmt_opt(report.mean_sre_baseline),
        report.mean_f1_baseline,
        fmt_opt(report.mean_sre_reconstructed),
        report.mean_f1_reconstructed,
        fmt_opt(report.sre_ratio)
    );
    s
}

/// Text for `report`: the evaluation table and, when present, the experiment.
pub fn report_text(dir: &Path) -> Result<String> {
    let mut out = String::new();
    let report: Option<SreReport> = optional(read_json(dir, REPORT))?;
    let experiment: Option<ExperimentReport> = optional(read_json(dir, EXPERIMENT))?;
    if let Some(r) = &report {
        out.push_str(&render_report(r));
    }
    if let Some(e) = &experiment {
        if !out.is_empty() {
            out.push('\n');
        }
        out.push_str(&render_experiment(e));
    }
    if out.is_empty() {
        return Err(Error::MissingArtifact(REPORT.into()));
    }
    Ok(out)
}

fn optional<T>(r: Result<T>) -> Result<Option<T>> {
    match r {
        Ok(v) => Ok(Some(v)),
        Err(Error::MissingArtifact(_)) => Ok(None),
        Err(e) => Err(e),
    }
}

#[derive(Debug, Parser)]
#[command(name = "mapforge", version, about = "Elevation-aware road map reconstruction and semantic reprojection scoring")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// JSON configuration; missing fields take the defaults listed below.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub output_dir: Option<PathBuf>,
    /// Seed for sensor noise and feature tracks.
    #[arg(long, global = true, env = "MAPFORGE_SEED")]
    pub seed: Option<u64>,
    /// Camera rig JSON.
    #[arg(long, global = true)]
    pub rig: Option<PathBuf>,
    /// Match threshold in pixels.
    #[arg(long, global = true)]
    pub tau: Option<f64>,
    /// Any config field by dotted path, e.g. `--set surface.lambda=2`. Repeatable.
    #[arg(long = "set", global = true, value_name = "PATH=VALUE")]
    pub overrides: Vec<String>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Synthetic world, sensor log, feature tracks and observed instances.
    Generate,
    /// Fuse wheel, inertial and GNSS measurements into body poses.
    Wigo,
    /// Rigid multi-camera sparse reconstruction seeded by the fused poses.
    Sfm,
    /// Elevation field and semantic BEV raster.
    Surface,
    /// Classed 3D polylines from the surface model.
    Vectorize,
    /// Semantic reprojection scoring of map.json.
    Evaluate {
        /// Also dump per-image projected and observed polylines.
        #[arg(long)]
        overlays: bool,
    },
    /// Every stage in order.
    Pipeline {
        #[arg(long)]
        overlays: bool,
    },
    /// Flat map under dead reckoning against the reconstruction, over several seeds.
    Experiment {
        /// Number of consecutive seeds.
        #[arg(long)]
        seeds: Option<u32>,
    },
    /// Print report.json and experiment.json as tables.
    Report,
}

impl Cli {
    /// Config file, then environment and flags, then `--set` overrides.
    pub fn resolve_config(&self) -> Result<RunConfig> {
        let mut cfg: RunConfig = match &self.config {
            Some(p) => {
                let bytes = std::fs::read(p).map_err(|e| match e.kind() {
                    std::io::ErrorKind::NotFound => Error::MissingArtifact(p.display().to_string()),
                    _ => Error::Io(e),
                })?;
                serde_json::from_slice(&bytes).map_err(|e| Error::InvalidConfig(e.to_string()))?
            }
            None => RunConfig::default(),
        };
        if let Some(d) = &self.output_dir {
            cfg.output_dir = d.clone();
        }
        if let Some(s) = self.seed {
            cfg.pipeline.seed = s;
        }
        if let Some(r) = &self.rig {
            cfg.rig = Some(r.clone());
        }
        if let Some(t) = self.tau {
            cfg.pipeline.evaluate.tau = t;
        }
        if let Command::Experiment { seeds: Some(n) } = self.command {
            cfg.experiment_seeds = n;
        }
        for o in &self.overrides {
            cfg.set(o)?;
        }
        Ok(cfg)
    }
}

fn help_defaults() -> String {
    let defaults = serde_json::to_string_pretty(&RunConfig::default()).expect("default config serializes");
    format!("Defaults (configuration file layout):\n{defaults}\n\nMAPFORGE_SEED overrides the configured seed.")
}

fn execute(cli: &Cli) -> Result<String> {
    let cfg = cli.resolve_config()?;
    let stage = |s| run_stage(s, &cfg, false).map(|_| String::new());
    match &cli.command {
        Command::Generate => stage(Stage::Generate),
        Command::Wigo => stage(Stage::Wigo),
        Command::Sfm => stage(Stage::Sfm),
        Command::Surface => stage(Stage::Surface),
        Command::Vectorize => stage(Stage::Vectorize),
        Command::Evaluate { overlays } => run_stage(Stage::Evaluate, &cfg, *overlays).map(|_| String::new()),
        Command::Pipeline { overlays } => run_pipeline(&cfg, *overlays).map(|r| render_report(&r)),
        Command::Experiment { .. } => run_experiment(&cfg).map(|r| render_experiment(&r)),
        Command::Report => report_text(&cfg.output_dir),
    }
}

/// Machine-readable error record printed on stderr.
pub fn error_json(e: &Error) -> Value {
    let mut v = serde_json::json!({ "error": e.kind(), "message": e.to_string() });
    let detail = match e {
        Error::MissingArtifact(n) => Some(n.clone()),
        Error::InvalidConfig(f) | Error::InvalidSpec(f) => Some(f.clone()),
        _ => None,
    };
    if let Some(d) = detail {
        v["detail"] = Value::String(d);
    }
    v
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cmd = Cli::command().after_long_help(help_defaults());
    let cli = match cmd.try_get_matches_from(args).and_then(|m| Cli::from_arg_matches(&m)) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match execute(&cli) {
        Ok(text) => {
            print!("{text}");
            0
        }
        Err(e) => {
            eprintln!("{}", error_json(&e));
            2
        }
    }
}

/// Every artifact under `dir` by relative path, for determinism checks.
pub fn artifact_snapshot(dir: &Path) -> Result<BTreeMap<String, Vec<u8>>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d)? {
            let e = e?;
            let path = e.path();
            if path.is_dir() {
                stack.push(path);
                continue;
            }
            let rel = path.strip_prefix(dir).expect("inside dir").to_string_lossy().into_owned();
            if rel == EFFECTIVE_CONFIG || rel.starts_with('.') {
                continue;
            }
            out.insert(rel, std::fs::read(&path)?);
        }
    }
    Ok(out)
}
