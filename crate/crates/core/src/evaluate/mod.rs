//! Semantic reprojection error: project a 3D map into every image, match the
//! fragments against observed instances per class, and score the matches.

mod assignment;
mod distance;
mod reproject;

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use assignment::{assignment_cost, solve_assignment};
pub use distance::{arc_length_samples, directed_distance, distance_to_polyline, polyline_distance, DistanceMode};
pub use reproject::{reproject_map, InstanceFile, ObservedInstance, ProjectedInstance, ReprojectConfig};

use crate::error::{Error, Result};
use crate::geometry::CameraRig;
use crate::scenario::PoseTable;
use crate::vectorize::{ElementClass, VectorMap};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    /// Match threshold in pixels.
    pub tau: f64,
    /// Sampling step along image polylines, pixels.
    pub sample_spacing: f64,
    pub distance: DistanceMode,
    pub reproject: ReprojectConfig,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self { tau: 30.0, sample_spacing: 10.0, distance: DistanceMode::Symmetric, reproject: ReprojectConfig::default() }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0) || !self.tau.is_finite() {
            return Err(Error::InvalidConfig("evaluate.tau".into()));
        }
        if !(self.sample_spacing > 0.0) {
            return Err(Error::InvalidConfig("evaluate.sample_spacing".into()));
        }
        if !(self.reproject.resample_spacing > 0.0) {
            return Err(Error::InvalidConfig("evaluate.reproject.resample_spacing".into()));
        }
        if !(self.reproject.min_fragment_px >= 0.0) {
            return Err(Error::InvalidConfig("evaluate.reproject.min_fragment_px".into()));
        }
        if !(self.reproject.z_near > 0.0) {
            return Err(Error::InvalidConfig("evaluate.reproject.z_near".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatchPair {
    pub projected: usize,
    pub observed: usize,
    pub class: ElementClass,
    pub distance: f64,
}

/// Matching result for one image.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatchSet {
    pub frame: u32,
    pub camera: String,
    pub pairs: Vec<MatchPair>,
    pub unmatched_projected: Vec<(usize, ElementClass)>,
    pub unmatched_observed: Vec<(usize, ElementClass)>,
}

/// Class-gated optimal matching. Cross-class pairs are never formed, so each
/// class is solved as its own assignment problem; assigned pairs with cost
/// above `tau` are released to the unmatched lists.
pub fn match_instances(
    frame: u32,
    camera: &str,
    projected: &[(ElementClass, &crate::geometry::Polyline2)],
    observed: &[(ElementClass, &crate::geometry::Polyline2)],
    tau: f64,
    spacing: f64,
    mode: DistanceMode,
) -> MatchSet {
    let mut pairs = Vec::new();
    let mut unmatched_projected = Vec::new();
    let mut unmatched_observed = Vec::new();
    for class in ElementClass::ALL {
        let pi: Vec<usize> = (0..projected.len()).filter(|&i| projected[i].0 == class).collect();
        let oi: Vec<usize> = (0..observed.len()).filter(|&i| observed[i].0 == class).collect();
        let cost = DMatrix::from_fn(pi.len(), oi.len(), |r, c| {
            distance::instance_distance(projected[pi[r]].1, observed[oi[c]].1, spacing, mode)
        });
        let rows = solve_assignment(&cost);
        let mut observed_used = vec![false; oi.len()];
        for (r, col) in rows.iter().enumerate() {
            match col {
                Some(c) if cost[(r, *c)] <= tau => {
                    observed_used[*c] = true;
                    pairs.push(MatchPair { projected: pi[r], observed: oi[*c], class, distance: cost[(r, *c)] });
                }
                _ => unmatched_projected.push((pi[r], class)),
            }
        }
        for (c, used) in observed_used.into_iter().enumerate() {
            if !used {
                unmatched_observed.push((oi[c], class));
            }
        }
    }
    pairs.sort_by_key(|p| p.projected);
    unmatched_projected.sort_unstable();
    unmatched_observed.sort_unstable();
    MatchSet { frame, camera: camera.to_string(), pairs, unmatched_projected, unmatched_observed }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    /// Mean distance over matched pairs; `None` without matches.
    pub sre: Option<f64>,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub matched: usize,
    pub false_positives: usize,
    pub false_negatives: usize,
}

impl Metrics {
    fn from_counts(distance_sum: f64, matched: usize, fp: usize, fn_: usize) -> Self {
        let ratio = |a: usize, b: usize| if a + b > 0 { a as f64 / (a + b) as f64 } else { 0.0 };
        let precision = ratio(matched, fp);
        let recall = ratio(matched, fn_);
        let f1 = if precision + recall > 0.0 { 2.0 * precision * recall / (precision + recall) } else { 0.0 };
        Metrics {
            sre: (matched > 0).then(|| distance_sum / matched as f64),
            precision,
            recall,
            f1,
            matched,
            false_positives: fp,
            false_negatives: fn_,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImageMetrics {
    pub frame: u32,
    pub camera: String,
    pub sre: Option<f64>,
    pub matched: usize,
    pub false_positives: usize,
    pub false_negatives: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SreReport {
    pub sre: Option<f64>,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub tau: f64,
    pub matched: usize,
    pub false_positives: usize,
    pub false_negatives: usize,
    pub per_class: BTreeMap<ElementClass, Metrics>,
    pub per_image: Vec<ImageMetrics>,
}

/// Aggregates match sets, sorted by `(frame, camera)`, into a report.
pub fn compute_report(matchsets: &[MatchSet], tau: f64) -> Result<SreReport> {
    let mut sets: Vec<&MatchSet> = matchsets.iter().collect();
    sets.sort_by(|a, b| (a.frame, &a.camera).cmp(&(b.frame, &b.camera)));
    let total: usize =
        sets.iter().map(|m| 2 * m.pairs.len() + m.unmatched_projected.len() + m.unmatched_observed.len()).sum();
    if total == 0 {
        return Err(Error::EmptyEvaluation);
    }

    // (distance sum, matched, fp, fn) per class, folded in sorted image order
    let mut acc: BTreeMap<ElementClass, (f64, usize, usize, usize)> = BTreeMap::new();
    let mut overall = (0.0, 0usize, 0usize, 0usize);
    let mut per_image = Vec::with_capacity(sets.len());
    for m in &sets {
        let mut image_sum = 0.0;
        for p in &m.pairs {
            let e = acc.entry(p.class).or_default();
            e.0 += p.distance;
            e.1 += 1;
            overall.0 += p.distance;
            image_sum += p.distance;
        }
        for (_, c) in &m.unmatched_projected {
            acc.entry(*c).or_default().2 += 1;
        }
        for (_, c) in &m.unmatched_observed {
            acc.entry(*c).or_default().3 += 1;
        }
        overall.1 += m.pairs.len();
        overall.2 += m.unmatched_projected.len();
        overall.3 += m.unmatched_observed.len();
        per_image.push(ImageMetrics {
            frame: m.frame,
            camera: m.camera.clone(),
            sre: (!m.pairs.is_empty()).then(|| image_sum / m.pairs.len() as f64),
            matched: m.pairs.len(),
            false_positives: m.unmatched_projected.len(),
            false_negatives: m.unmatched_observed.len(),
        });
    }
    let all = Metrics::from_counts(overall.0, overall.1, overall.2, overall.3);
    let per_class = acc.into_iter().map(|(c, (s, m, fp, fn_))| (c, Metrics::from_counts(s, m, fp, fn_))).collect();
    Ok(SreReport {
        sre: all.sre,
        precision: all.precision,
        recall: all.recall,
        f1: all.f1,
        tau,
        matched: all.matched,
        false_positives: all.false_positives,
        false_negatives: all.false_negatives,
        per_class,
        per_image,
    })
}

/// Observed instances keyed by `(frame, camera)`.
pub type ObservationSet = BTreeMap<(u32, String), Vec<ObservedInstance>>;

/// Per-image projection and matching for every key of `observed`.
pub fn evaluate_map(
    map: &VectorMap,
    poses: &PoseTable,
    rig: &CameraRig,
    observed: &ObservationSet,
    cfg: &EvalConfig,
) -> Result<(SreReport, Vec<(MatchSet, Vec<ProjectedInstance>)>)> {
    cfg.validate()?;
    let keys: Vec<&(u32, String)> = observed.keys().collect();
    let results: Vec<Result<(MatchSet, Vec<ProjectedInstance>)>> = keys
        .par_iter()
        .map(|(frame, camera)| {
            let projected = reproject_map(map, poses, rig, *frame, camera, &cfg.reproject)?;
            let obs = &observed[&(*frame, camera.clone())];
            let p: Vec<_> = projected.iter().map(|i| (i.class, &i.polyline)).collect();
            let o: Vec<_> = obs.iter().map(|i| (i.class, &i.polyline)).collect();
            let ms = match_instances(*frame, camera, &p, &o, cfg.tau, cfg.sample_spacing, cfg.distance);
            Ok((ms, projected))
        })
        .collect();
    let results = results.into_iter().collect::<Result<Vec<_>>>()?;
    let sets: Vec<MatchSet> = results.iter().map(|(m, _)| m.clone()).collect();
    let report = compute_report(&sets, cfg.tau)?;
    Ok((report, results))
}
