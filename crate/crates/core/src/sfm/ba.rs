use std::collections::BTreeMap;

use nalgebra::{DVector, Matrix2x3, Matrix2x6, Matrix3, Matrix6, Matrix6x3, Vector2, Vector3, Vector6};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::triangulate::{max_ray_angle, triangulate, RayObservation, Triangulation};
use crate::error::{Error, Result};
use crate::geometry::{hat, right_jacobian_inv, so3_log, Camera, CameraRig, Intrinsics, Pose};
use crate::linalg::ProfileMatrix;
use crate::scenario::{PoseTable, Track, TrackClass};
use crate::solver::{damping_diagonal, levenberg_marquardt, LeastSquaresProblem, NormalSystem, SolverConfig, Termination};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BaConfig {
    /// Pixels; re-triangulated points above this are dropped.
    pub tri_reproj_max: f64,
    /// Radians.
    pub tri_angle_min: f64,
    /// Pixels; points above this after an adjustment round are dropped.
    pub ba_reproj_max: f64,
    pub max_ba_rounds: usize,
    /// Standard deviations of the pose priors.
    pub prior_sigma_trans: f64,
    pub prior_sigma_rot: f64,
    pub solver: SolverConfig,
}

impl Default for BaConfig {
    fn default() -> Self {
        Self {
            tri_reproj_max: 2.0,
            tri_angle_min: 0.5f64.to_radians(),
            ba_reproj_max: 2.0,
            max_ba_rounds: 5,
            prior_sigma_trans: 0.3,
            prior_sigma_rot: 0.01,
            solver: SolverConfig { max_iterations: 30, ..SolverConfig::default() },
        }
    }
}

impl BaConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |f: &str| Err(Error::InvalidSpec(format!("sfm.{f}")));
        if !(self.tri_reproj_max > 0.0) {
            return bad("tri_reproj_max");
        }
        if !(self.tri_angle_min >= 0.0 && self.tri_angle_min < std::f64::consts::PI) {
            return bad("tri_angle_min");
        }
        if !(self.ba_reproj_max > 0.0) {
            return bad("ba_reproj_max");
        }
        if self.max_ba_rounds == 0 {
            return bad("max_ba_rounds");
        }
        if !(self.prior_sigma_trans > 0.0) {
            return bad("prior_sigma_trans");
        }
        if !(self.prior_sigma_rot > 0.0) {
            return bad("prior_sigma_rot");
        }
        self.solver.validate()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SparsePoint {
    pub id: u32,
    pub position: [f64; 3],
    pub class: TrackClass,
    /// Mean pixel distance over the point's observations.
    pub reproj_error: f64,
    /// Largest angle between viewing rays, radians.
    pub tri_angle: f64,
    pub observations: usize,
}

impl SparsePoint {
    pub fn position_vec(&self) -> Vector3<f64> {
        Vector3::from(self.position)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SparseModel {
    /// Refined `T_world_body`.
    pub poses: PoseTable,
    pub points: Vec<SparsePoint>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BaRound {
    pub points: usize,
    pub costs: Vec<f64>,
    pub iterations: usize,
    pub termination: Termination,
    pub final_gradient: f64,
    /// RMS pixel residual before and after the round.
    pub rms_before: f64,
    pub rms_after: f64,
    pub removed: usize,
    /// Dropped when re-triangulating the survivors.
    pub retriangulation_dropped: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct BaTrace {
    pub rounds: Vec<BaRound>,
}

struct CamInfo {
    camera_from_body: Matrix3<f64>,
    body_t_camera: Vector3<f64>,
    body_from_camera: Pose,
    k: Intrinsics,
}

#[derive(Clone, Copy)]
struct Obs {
    frame: usize,
    cam: usize,
    pixel: Vector2<f64>,
}

struct Layout {
    frames: Vec<u32>,
    cams: Vec<CamInfo>,
    priors: Vec<Pose>,
    w_trans: f64,
    w_rot: f64,
}

#[derive(Clone, Debug)]
struct Params {
    poses: Vec<Pose>,
    points: Vec<Vector3<f64>>,
}

struct Problem<'a> {
    layout: &'a Layout,
    /// Per point, sorted by frame.
    obs: Vec<Vec<Obs>>,
    block_first: Vec<usize>,
}

type ObsLin = (Vector2<f64>, Matrix2x6<f64>, Matrix2x3<f64>);

impl CamInfo {
    fn new(c: &Camera) -> Self {
        Self {
            camera_from_body: c.body_from_camera.rotation_matrix().transpose(),
            body_t_camera: c.body_from_camera.translation,
            body_from_camera: c.body_from_camera,
            k: c.intrinsics,
        }
    }

    fn residual(&self, pose: &Pose, point: &Vector3<f64>, pixel: &Vector2<f64>) -> Option<Vector2<f64>> {
        let pb = pose.inverse_transform_point(point);
        let pc = self.camera_from_body * (pb - self.body_t_camera);
        if pc.z <= 1e-9 {
            return None;
        }
        Some(Vector2::new(self.k.fx * pc.x / pc.z + self.k.cx, self.k.fy * pc.y / pc.z + self.k.cy) - pixel)
    }

    fn linearize(&self, pose: &Pose, point: &Vector3<f64>, pixel: &Vector2<f64>) -> Option<ObsLin> {
        let rt = pose.rotation_matrix().transpose();
        let d = point - pose.translation;
        let pc = self.camera_from_body * (rt * d - self.body_t_camera);
        if pc.z <= 1e-9 {
            return None;
        }
        let (x, y, z) = (pc.x, pc.y, pc.z);
        let k = &self.k;
        let r = Vector2::new(k.fx * x / z + k.cx, k.fy * y / z + k.cy) - pixel;
        let jpi = Matrix2x3::new(k.fx / z, 0.0, -k.fx * x / (z * z), 0.0, k.fy / z, -k.fy * y / (z * z));
        let m = jpi * self.camera_from_body * rt;
        let mut jc = Matrix2x6::zeros();
        jc.fixed_view_mut::<2, 3>(0, 0).copy_from(&(m * hat(&d)));
        jc.fixed_view_mut::<2, 3>(0, 3).copy_from(&(-m));
        Some((r, jc, m))
    }
}

/// Pixel residual of one observation with its Jacobians with respect to a
/// left perturbation `(ω, v)` of the body pose and to the point. `None` when
/// the point is behind the camera.
pub fn observation_jacobian(
    camera: &Camera,
    body: &Pose,
    point: &Vector3<f64>,
    pixel: &Vector2<f64>,
) -> Option<(Vector2<f64>, Matrix2x6<f64>, Matrix2x3<f64>)> {
    CamInfo::new(camera).linearize(body, point, pixel)
}

/// Pixel residual of one observation, as used by [`observation_jacobian`].
pub fn observation_residual(camera: &Camera, body: &Pose, point: &Vector3<f64>, pixel: &Vector2<f64>) -> Option<Vector2<f64>> {
    CamInfo::new(camera).residual(body, point, pixel)
}

/// Whitened pose-prior residual `[Log(R_pᵀR)/σ_r, R_pᵀ(t − t_p)/σ_t]` and its
/// Jacobian with respect to a left perturbation of `pose`.
pub fn prior_jacobian(prior: &Pose, pose: &Pose, sigma_trans: f64, sigma_rot: f64) -> (Vector6<f64>, Matrix6<f64>) {
    let (w_rot, w_trans) = (1.0 / sigma_rot, 1.0 / sigma_trans);
    let phi = so3_log(&(prior.rotation.inverse() * pose.rotation));
    let rpt = prior.rotation_matrix().transpose();
    let mut r = Vector6::zeros();
    r.fixed_rows_mut::<3>(0).copy_from(&(phi * w_rot));
    r.fixed_rows_mut::<3>(3).copy_from(&(rpt * (pose.translation - prior.translation) * w_trans));
    let mut j = Matrix6::zeros();
    j.fixed_view_mut::<3, 3>(0, 0).copy_from(&(right_jacobian_inv(&phi) * pose.rotation_matrix().transpose() * w_rot));
    j.fixed_view_mut::<3, 3>(3, 3).copy_from(&(rpt * w_trans));
    (r, j)
}

impl Layout {
    fn residual(&self, pose: &Pose, point: &Vector3<f64>, o: &Obs) -> Option<Vector2<f64>> {
        self.cams[o.cam].residual(pose, point, &o.pixel)
    }

    fn linearize_obs(&self, pose: &Pose, point: &Vector3<f64>, o: &Obs) -> Option<ObsLin> {
        self.cams[o.cam].linearize(pose, point, &o.pixel)
    }

    fn prior(&self, f: usize, pose: &Pose) -> (Vector6<f64>, Matrix6<f64>) {
        prior_jacobian(&self.priors[f], pose, 1.0 / self.w_trans, 1.0 / self.w_rot)
    }
}

struct PointBlock {
    v: Matrix3<f64>,
    g: Vector3<f64>,
    /// `(frame, Σ Jcᵀ Jp)` sorted by frame.
    w: Vec<(usize, Matrix6x3<f64>)>,
    /// `(frame, Σ Jcᵀ Jc, Σ Jcᵀ r)`.
    cam_terms: Vec<(usize, Matrix6<f64>, Vector6<f64>)>,
}

struct BaSystem {
    hcc: Vec<Matrix6<f64>>,
    gc: Vec<Vector6<f64>>,
    points: Vec<PointBlock>,
    block_first: Vec<usize>,
    gradient_norm: f64,
}

impl NormalSystem for BaSystem {
    fn gradient_norm(&self) -> f64 {
        self.gradient_norm
    }

    fn solve_damped(&self, lambda: f64) -> Option<DVector<f64>> {
        let nf = self.hcc.len();
        let mut s = ProfileMatrix::with_block_envelope(&self.block_first, 6);
        let mut rhs = DVector::zeros(6 * nf);
        for f in 0..nf {
            let h = &self.hcc[f];
            let diag: Vec<f64> = (0..6).map(|i| h[(i, i)]).collect();
            let damp = damping_diagonal(&diag, lambda);
            for i in 0..6 {
                for j in 0..=i {
                    s.add(6 * f + i, 6 * f + j, h[(i, j)] + if i == j { damp[i] } else { 0.0 });
                }
                rhs[6 * f + i] = -self.gc[f][i];
            }
        }
        let mut v_inv = Vec::with_capacity(self.points.len());
        for pb in &self.points {
            let diag = [pb.v[(0, 0)], pb.v[(1, 1)], pb.v[(2, 2)]];
            let damp = damping_diagonal(&diag, lambda);
            let vd = pb.v + Matrix3::from_diagonal(&Vector3::from_column_slice(&damp));
            let vi = vd.cholesky()?.inverse();
            let ys: Vec<Matrix6x3<f64>> = pb.w.iter().map(|(_, w)| w * vi).collect();
            for (ia, (a, _)) in pb.w.iter().enumerate() {
                let ya = &ys[ia];
                let ra = ya * pb.g;
                for i in 0..6 {
                    rhs[6 * a + i] += ra[i];
                }
                for (b, wb) in &pb.w[..=ia] {
                    let blk = ya * wb.transpose();
                    for i in 0..6 {
                        for j in 0..6 {
                            if a == b && j > i {
                                continue;
                            }
                            s.add(6 * a + i, 6 * b + j, -blk[(i, j)]);
                        }
                    }
                }
            }
            v_inv.push(vi);
        }
        let dc = s.cholesky()?.solve(&rhs);
        let mut out = DVector::zeros(6 * nf + 3 * self.points.len());
        out.rows_mut(0, 6 * nf).copy_from(&dc);
        for (p, pb) in self.points.iter().enumerate() {
            let mut b = -pb.g;
            for (f, w) in &pb.w {
                b -= w.transpose() * dc.fixed_rows::<6>(6 * f);
            }
            out.fixed_rows_mut::<3>(6 * nf + 3 * p).copy_from(&(v_inv[p] * b));
        }
        Some(out)
    }
}

impl LeastSquaresProblem for Problem<'_> {
    type Params = Params;
    type System = BaSystem;

    fn cost(&self, x: &Params) -> f64 {
        let obs_cost: Vec<f64> = self
            .obs
            .par_iter()
            .enumerate()
            .map(|(p, list)| {
                list.iter()
                    .map(|o| match self.layout.residual(&x.poses[o.frame], &x.points[p], o) {
                        Some(r) => r.norm_squared(),
                        None => f64::INFINITY,
                    })
                    .sum::<f64>()
            })
            .collect();
        let prior: f64 = x.poses.iter().enumerate().map(|(f, t)| self.layout.prior(f, t).0.norm_squared()).sum();
        obs_cost.iter().sum::<f64>() + prior
    }

    fn linearize(&self, x: &Params) -> BaSystem {
        let nf = x.poses.len();
        let points: Vec<PointBlock> = self
            .obs
            .par_iter()
            .enumerate()
            .map(|(p, list)| {
                let mut pb = PointBlock { v: Matrix3::zeros(), g: Vector3::zeros(), w: Vec::new(), cam_terms: Vec::new() };
                for o in list {
                    // cost() rejects any state with a point behind a camera
                    let (r, jc, jp) = self.layout.linearize_obs(&x.poses[o.frame], &x.points[p], o).expect("point in front");
                    pb.v += jp.transpose() * jp;
                    pb.g += jp.transpose() * r;
                    let w = jc.transpose() * jp;
                    let h = jc.transpose() * jc;
                    let g = jc.transpose() * r;
                    match pb.w.last_mut() {
                        Some((f, acc)) if *f == o.frame => {
                            *acc += w;
                            let last = pb.cam_terms.last_mut().expect("parallel lists");
                            last.1 += h;
                            last.2 += g;
                        }
                        _ => {
                            pb.w.push((o.frame, w));
                            pb.cam_terms.push((o.frame, h, g));
                        }
                    }
                }
                pb
            })
            .collect();
        let mut hcc = vec![Matrix6::zeros(); nf];
        let mut gc = vec![Vector6::zeros(); nf];
        for (f, t) in x.poses.iter().enumerate() {
            let (r, j) = self.layout.prior(f, t);
            hcc[f] += j.transpose() * j;
            gc[f] += j.transpose() * r;
        }
        for pb in &points {
            for (f, h, g) in &pb.cam_terms {
                hcc[*f] += h;
                gc[*f] += g;
            }
        }
        let gradient_norm =
            gc.iter().map(|g| g.amax()).chain(points.iter().map(|p| p.g.amax())).fold(0.0, f64::max);
        BaSystem { hcc, gc, points, block_first: self.block_first.clone(), gradient_norm }
    }

    fn retract(&self, x: &Params, step: &DVector<f64>) -> Params {
        let nf = x.poses.len();
        Params {
            poses: x.poses.iter().enumerate().map(|(f, t)| t.retract_left(&step.fixed_rows::<6>(6 * f).into_owned())).collect(),
            points: x.points.iter().enumerate().map(|(p, v)| v + step.fixed_rows::<3>(6 * nf + 3 * p)).collect(),
        }
    }
}

impl<'a> Problem<'a> {
    fn new(layout: &'a Layout, obs: Vec<Vec<Obs>>) -> Self {
        let mut block_first: Vec<usize> = (0..layout.frames.len()).collect();
        for list in &obs {
            if let Some(first) = list.first() {
                for o in list {
                    block_first[o.frame] = block_first[o.frame].min(first.frame);
                }
            }
        }
        Self { layout, obs, block_first }
    }

    /// Stacked pixel residuals followed by the prior residuals.
    #[cfg(test)]
    fn residual_vector(&self, x: &Params) -> DVector<f64> {
        let mut out = Vec::new();
        for (p, list) in self.obs.iter().enumerate() {
            for o in list {
                out.extend(self.layout.residual(&x.poses[o.frame], &x.points[p], o).unwrap().iter());
            }
        }
        for (f, t) in x.poses.iter().enumerate() {
            out.extend(self.layout.prior(f, t).0.iter());
        }
        DVector::from_vec(out)
    }

    #[cfg(test)]
    fn jacobian(&self, x: &Params) -> nalgebra::DMatrix<f64> {
        let nf = x.poses.len();
        let rows = self.residual_vector(x).len();
        let mut j = nalgebra::DMatrix::zeros(rows, 6 * nf + 3 * x.points.len());
        let mut r0 = 0;
        for (p, list) in self.obs.iter().enumerate() {
            for o in list {
                let (_, jc, jp) = self.layout.linearize_obs(&x.poses[o.frame], &x.points[p], o).unwrap();
                j.view_mut((r0, 6 * o.frame), (2, 6)).copy_from(&jc);
                j.view_mut((r0, 6 * nf + 3 * p), (2, 3)).copy_from(&jp);
                r0 += 2;
            }
        }
        for (f, t) in x.poses.iter().enumerate() {
            j.view_mut((r0, 6 * f), (6, 6)).copy_from(&self.layout.prior(f, t).1);
            r0 += 6;
        }
        j
    }
}

fn build_layout(rig: &CameraRig, initial: &PoseTable, priors: &PoseTable, cfg: &BaConfig) -> Result<Layout> {
    let frames: Vec<u32> = initial.keys().copied().collect();
    let priors = frames.iter().map(|f| priors.get(f).copied().ok_or(Error::UnknownFrame(*f))).collect::<Result<Vec<_>>>()?;
    let cams = rig.cameras.values().map(CamInfo::new).collect();
    Ok(Layout { frames, cams, priors, w_trans: 1.0 / cfg.prior_sigma_trans, w_rot: 1.0 / cfg.prior_sigma_rot })
}

fn index_observations(layout: &Layout, rig: &CameraRig, track: &Track) -> Result<Vec<Obs>> {
    let cam_ids: Vec<&str> = rig.ids().collect();
    let mut out = track
        .observations
        .iter()
        .map(|o| {
            let frame = layout.frames.binary_search(&o.frame).map_err(|_| Error::UnknownFrame(o.frame))?;
            let cam = cam_ids.binary_search(&o.camera.as_str()).map_err(|_| Error::UnknownCamera(o.camera.clone()))?;
            Ok(Obs { frame, cam, pixel: o.pixel() })
        })
        .collect::<Result<Vec<_>>>()?;
    out.sort_by_key(|o| (o.frame, o.cam));
    Ok(out)
}

fn point_stats(layout: &Layout, poses: &[Pose], point: &Vector3<f64>, obs: &[Obs]) -> (f64, f64) {
    let rays = ray_observations(layout, poses, obs);
    let err = obs
        .iter()
        .map(|o| layout.residual(&poses[o.frame], point, o).map_or(f64::INFINITY, |r| r.norm()))
        .sum::<f64>()
        / obs.len() as f64;
    (err, max_ray_angle(point, &rays))
}

fn ray_observations(layout: &Layout, poses: &[Pose], obs: &[Obs]) -> Vec<RayObservation> {
    obs.iter()
        .map(|o| {
            let c = &layout.cams[o.cam];
            RayObservation { world_from_camera: poses[o.frame].compose(&c.body_from_camera), intrinsics: c.k, pixel: o.pixel }
        })
        .collect()
}

fn rms(problem: &Problem, x: &Params) -> f64 {
    let mut sum = 0.0;
    let mut n = 0usize;
    for (p, list) in problem.obs.iter().enumerate() {
        for o in list {
            sum += problem.layout.residual(&x.poses[o.frame], &x.points[p], o).map_or(f64::INFINITY, |r| r.norm_squared());
            n += 1;
        }
    }
    (sum / n.max(1) as f64).sqrt()
}

/// Jointly refines body poses and points with the rig extrinsics held fixed,
/// then alternates outlier filtering and re-triangulation.
///
/// `tracks` carry the observations (at least two each); `points` holds an
/// initial position for every track id. Pose priors pull each body pose
/// towards `priors`.
pub fn rigid_bundle_adjust(
    rig: &CameraRig,
    initial: &PoseTable,
    priors: &PoseTable,
    tracks: &[Track],
    points: &BTreeMap<u32, Vector3<f64>>,
    cfg: &BaConfig,
) -> Result<(SparseModel, BaTrace)> {
    cfg.validate()?;
    rig.validate()?;
    let layout = build_layout(rig, initial, priors, cfg)?;
    let mut active: Vec<(u32, TrackClass, Vec<Obs>)> = Vec::with_capacity(tracks.len());
    let mut positions = Vec::with_capacity(tracks.len());
    for t in tracks {
        if t.observations.len() < 2 {
            return Err(Error::TooFewObservations(t.observations.len()));
        }
        let p = points.get(&t.id).ok_or_else(|| Error::InvalidSpec(format!("missing initial point for track {}", t.id)))?;
        active.push((t.id, t.class, index_observations(&layout, rig, t)?));
        positions.push(*p);
    }
    if active.is_empty() {
        return Err(Error::AllPointsFiltered);
    }
    let angle_min = cfg.tri_angle_min;
    let mut poses: Vec<Pose> = layout.frames.iter().map(|f| initial[f]).collect();
    let mut trace = BaTrace::default();

    for round in 0..cfg.max_ba_rounds {
        let problem = Problem::new(&layout, active.iter().map(|a| a.2.clone()).collect());
        let x0 = Params { poses: poses.clone(), points: positions.clone() };
        let rms_before = rms(&problem, &x0);
        let sol = levenberg_marquardt(&problem, x0, &cfg.solver)?;
        let rms_after = rms(&problem, &sol.params);
        poses = sol.params.poses;
        positions = sol.params.points;

        let keep: Vec<bool> = active
            .par_iter()
            .zip(&positions)
            .map(|(a, p)| {
                let (err, ang) = point_stats(&layout, &poses, p, &a.2);
                err <= cfg.ba_reproj_max && ang >= angle_min
            })
            .collect();
        let removed = keep.iter().filter(|k| !**k).count();
        let mut round_trace = BaRound {
            points: active.len(),
            costs: sol.costs,
            iterations: sol.iterations,
            termination: sol.termination,
            final_gradient: sol.final_gradient,
            rms_before,
            rms_after,
            removed,
            retriangulation_dropped: 0,
        };
        if removed == 0 {
            trace.rounds.push(round_trace);
            break;
        }
        let (a2, p2): (Vec<_>, Vec<_>) =
            active.into_iter().zip(positions).zip(&keep).filter(|(_, k)| **k).map(|(ap, _)| ap).unzip();
        active = a2;
        positions = p2;
        if active.is_empty() {
            trace.rounds.push(round_trace);
            return Err(Error::AllPointsFiltered);
        }
        if round + 1 < cfg.max_ba_rounds {
            let retri: Vec<Option<Vector3<f64>>> = active
                .par_iter()
                .map(|a| match triangulate(&ray_observations(&layout, &poses, &a.2)) {
                    Ok(Triangulation::Point { position, reproj_error, angle })
                        if reproj_error <= cfg.tri_reproj_max && angle >= angle_min =>
                    {
                        Some(position)
                    }
                    _ => None,
                })
                .collect();
            let before = active.len();
            let (a2, p2): (Vec<_>, Vec<_>) =
                active.into_iter().zip(retri).filter_map(|(a, p)| p.map(|p| (a, p))).unzip();
            active = a2;
            positions = p2;
            round_trace.retriangulation_dropped = before - active.len();
            if active.is_empty() {
                trace.rounds.push(round_trace);
                return Err(Error::AllPointsFiltered);
            }
        }
        trace.rounds.push(round_trace);
    }

    let points = active
        .iter()
        .zip(&positions)
        .map(|((id, class, obs), p)| {
            let (reproj_error, tri_angle) = point_stats(&layout, &poses, p, obs);
            SparsePoint { id: *id, position: (*p).into(), class: *class, reproj_error, tri_angle, observations: obs.len() }
        })
        .collect();
    Ok((SparseModel { poses: layout.frames.iter().copied().zip(poses).collect(), points }, trace))
}

/// Mean reprojection error of a sparse point under the given body poses.
pub fn reprojection_error(rig: &CameraRig, poses: &PoseTable, track: &Track, point: &Vector3<f64>) -> Result<f64> {
    let mut sum = 0.0;
    for o in &track.observations {
        let body = poses.get(&o.frame).ok_or(Error::UnknownFrame(o.frame))?;
        let cam = rig.camera(&o.camera)?;
        let pose = body.compose(&cam.body_from_camera);
        let pc = pose.inverse_transform_point(point);
        let k = &cam.intrinsics;
        let px = Vector2::new(k.fx * pc.x / pc.z + k.cx, k.fy * pc.y / pc.z + k.cy);
        sum += (px - o.pixel()).norm();
    }
    Ok(sum / track.observations.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{generate_tracks, generate_world, NoiseSpec, TrackSpec, WorldSpec};
    use nalgebra::UnitQuaternion;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn small_scene(frames: u32, density: f64, pixel: f64) -> (crate::scenario::GroundTruthWorld, CameraRig, Vec<Track>) {
        let world = generate_world(&WorldSpec { frame_count: frames, ..WorldSpec::default() }).unwrap();
        let rig = CameraRig::surround();
        let noise = NoiseSpec { pixel_sigma: pixel, ..NoiseSpec::zero() };
        let set = generate_tracks(&world, &rig, &noise, &TrackSpec { density, ..TrackSpec::default() }, 5).unwrap();
        let poses = world.poses();
        // keep tracks that pass the default angle filter at the true poses
        let tracks = set
            .tracks
            .into_iter()
            .filter(|t| {
                let rays: Vec<RayObservation> = t
                    .observations
                    .iter()
                    .map(|o| {
                        let cam = &rig.cameras[&o.camera];
                        RayObservation {
                            world_from_camera: poses[&o.frame].compose(&cam.body_from_camera),
                            intrinsics: cam.intrinsics,
                            pixel: o.pixel(),
                        }
                    })
                    .collect();
                rays.len() >= 2 && max_ray_angle(&Vector3::from(t.point), &rays) >= 1f64.to_radians()
            })
            .collect();
        (world, rig, tracks)
    }

    fn truth_points(tracks: &[Track]) -> BTreeMap<u32, Vector3<f64>> {
        tracks.iter().map(|t| (t.id, Vector3::from(t.point))).collect()
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let (world, rig, tracks) = small_scene(5, 0.3, 0.0);
        let tracks: Vec<Track> = tracks.into_iter().take(20).collect();
        assert_eq!(tracks.len(), 20);
        let cfg = BaConfig::default();
        let gt: PoseTable = world.poses().into_iter().collect();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let priors: PoseTable = gt
            .iter()
            .map(|(f, p)| {
                let d = Vector6::from_fn(|_, _| rng.random_range(-0.05..0.05));
                (*f, p.retract_left(&d))
            })
            .collect();
        let layout = build_layout(&rig, &gt, &priors, &cfg).unwrap();
        let obs = tracks.iter().map(|t| index_observations(&layout, &rig, t).unwrap()).collect();
        let problem = Problem::new(&layout, obs);
        let x = Params {
            poses: layout.frames.iter().map(|f| gt[f].retract_left(&Vector6::from_fn(|_, _| rng.random_range(-0.01..0.01)))).collect(),
            points: tracks.iter().map(|t| Vector3::from(t.point) + Vector3::from_fn(|_, _| rng.random_range(-0.05..0.05))).collect(),
        };
        let j = problem.jacobian(&x);
        let h = 1e-6;
        for c in 0..j.ncols() {
            let mut e = DVector::zeros(j.ncols());
            e[c] = h;
            let rp = problem.residual_vector(&problem.retract(&x, &e));
            e[c] = -h;
            let rm = problem.residual_vector(&problem.retract(&x, &e));
            let fd = (rp - rm) / (2.0 * h);
            let col = j.column(c);
            let rel = (&fd - col).norm() / (1.0 + fd.norm());
            assert!(rel <= 1e-4, "column {c}: {rel}");
        }
    }

    #[test]
    fn schur_solve_matches_dense_normal_equations() {
        let (world, rig, tracks) = small_scene(6, 0.3, 0.5);
        let tracks: Vec<Track> = tracks.into_iter().take(40).collect();
        let cfg = BaConfig::default();
        let gt: PoseTable = world.poses().into_iter().collect();
        let layout = build_layout(&rig, &gt, &gt, &cfg).unwrap();
        let obs = tracks.iter().map(|t| index_observations(&layout, &rig, t).unwrap()).collect();
        let problem = Problem::new(&layout, obs);
        let x = Params { poses: layout.frames.iter().map(|f| gt[f]).collect(), points: truth_points(&tracks).into_values().collect() };
        let j = problem.jacobian(&x);
        let r = problem.residual_vector(&x);
        let lambda = 1e-3;
        let mut h = j.transpose() * &j;
        for i in 0..h.nrows() {
            h[(i, i)] += lambda * h[(i, i)].max(1e-9);
        }
        let dense = h.lu().solve(&(-(j.transpose() * r))).unwrap();
        let schur = problem.linearize(&x).solve_damped(lambda).unwrap();
        assert!((&dense - &schur).norm() <= 1e-8 * (1.0 + dense.norm()), "{}", (&dense - &schur).norm());
    }

    #[test]
    fn ground_truth_start_is_stationary() {
        let (world, rig, tracks) = small_scene(20, 0.5, 0.0);
        let gt: PoseTable = world.poses().into_iter().collect();
        let pts = truth_points(&tracks);
        let (model, trace) = rigid_bundle_adjust(&rig, &gt, &gt, &tracks, &pts, &BaConfig::default()).unwrap();
        assert_eq!(model.points.len(), tracks.len());
        assert_eq!(trace.rounds[0].removed, 0);
        for (f, p) in &model.poses {
            let (a, d) = p.distance_to(&gt[f]);
            assert!(a <= 1e-10 && d <= 1e-10);
        }
        for p in &model.points {
            assert!((p.position_vec() - pts[&p.id]).norm() <= 1e-10);
        }
    }

    #[test]
    fn recovers_perturbed_poses() {
        let (world, rig, tracks) = small_scene(20, 0.5, 0.0);
        let gt: PoseTable = world.poses().into_iter().collect();
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let perturbed: PoseTable = gt
            .iter()
            .map(|(f, p)| {
                let dir = |rng: &mut ChaCha8Rng| {
                    Vector3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)).normalize()
                };
                let w = dir(&mut rng) * 0.005;
                let v = dir(&mut rng) * 0.05;
                (*f, Pose::new(UnitQuaternion::from_scaled_axis(w) * p.rotation, p.translation + v))
            })
            .collect();
        let cfg = BaConfig { prior_sigma_trans: 1.0, prior_sigma_rot: 0.1, ..BaConfig::default() };
        let layout = build_layout(&rig, &perturbed, &gt, &cfg).unwrap();
        let pose_vec: Vec<Pose> = layout.frames.iter().map(|f| perturbed[f]).collect();
        let init: BTreeMap<u32, Vector3<f64>> = tracks
            .iter()
            .map(|t| {
                let obs = index_observations(&layout, &rig, t).unwrap();
                match triangulate(&ray_observations(&layout, &pose_vec, &obs)).unwrap() {
                    Triangulation::Point { position, .. } => (t.id, position),
                    Triangulation::Degenerate => panic!("degenerate"),
                }
            })
            .collect();
        let (model, _) = rigid_bundle_adjust(&rig, &perturbed, &gt, &tracks, &init, &cfg).unwrap();
        for (f, p) in &model.poses {
            let (a, d) = p.distance_to(&gt[f]);
            assert!(a <= 1e-6 && d <= 1e-4, "frame {f}: {a} rad {d} m");
        }
    }

    #[test]
    fn recorded_errors_match_model() {
        let (world, rig, tracks) = small_scene(20, 0.5, 0.5);
        let gt: PoseTable = world.poses().into_iter().collect();
        let pts = truth_points(&tracks);
        let (model, _) = rigid_bundle_adjust(&rig, &gt, &gt, &tracks, &pts, &BaConfig::default()).unwrap();
        let by_id: BTreeMap<u32, &Track> = tracks.iter().map(|t| (t.id, t)).collect();
        for p in &model.points {
            let e = reprojection_error(&rig, &model.poses, by_id[&p.id], &p.position_vec()).unwrap();
            assert!((e - p.reproj_error).abs() <= 1e-9);
            assert!(p.reproj_error <= 2.0 && p.tri_angle >= 0.5f64.to_radians());
        }
    }

    #[test]
    fn rejects_bad_input() {
        let (world, rig, mut tracks) = small_scene(5, 0.2, 0.0);
        let gt: PoseTable = world.poses().into_iter().collect();
        let pts = truth_points(&tracks);
        let cfg = BaConfig::default();
        assert!(matches!(rigid_bundle_adjust(&rig, &gt, &gt, &[], &pts, &cfg), Err(Error::AllPointsFiltered)));
        tracks[0].observations.truncate(1);
        assert!(matches!(
            rigid_bundle_adjust(&rig, &gt, &gt, &tracks, &pts, &cfg),
            Err(Error::TooFewObservations(1))
        ));
        let bad = BaConfig { max_ba_rounds: 0, ..cfg };
        assert!(matches!(rigid_bundle_adjust(&rig, &gt, &gt, &tracks, &pts, &bad), Err(Error::InvalidSpec(_))));
    }
}
