//! Wheel/IMU/GNSS fusion as a chain-structured pose graph.
//!
//! Nodes are `T_world_body` per frame. GNSS fixes are unary position factors
//! and odometry deltas are binary relative-pose factors between consecutive
//! frames. Increments are 6-vectors `(ω, v)` applied on the left:
//! `R ← Exp(ω)·R`, `t ← t + v`.
//!
//! Residual layout, per frame in ascending order: the frame's GNSS factors
//! (3 rows each) followed by the relative factor leaving the frame (6 rows,
//! rotation log then translation).

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector, Matrix3, UnitQuaternion, Vector3, Vector6};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{hat, right_jacobian_inv, so3_log, Pose};
use crate::linalg::ProfileMatrix;
use crate::scenario::{PoseTable, SensorLog};
use crate::solver::{damping_diagonal, levenberg_marquardt, LeastSquaresProblem, NormalSystem, SolverConfig, Termination};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GnssFactor {
    pub frame: u32,
    pub position: Vector3<f64>,
    pub sigma_xy: f64,
    pub sigma_z: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RelativeFactor {
    pub from: u32,
    pub to: u32,
    pub delta: Pose,
    pub sigma_trans: f64,
    pub sigma_rot: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PoseGraph {
    pub nodes: PoseTable,
    pub gnss_factors: Vec<GnssFactor>,
    pub relative_factors: Vec<RelativeFactor>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WigoConfig {
    pub solver: SolverConfig,
    /// Lower bounds applied to factor sigmas so noiseless logs stay finite.
    pub min_sigma_trans: f64,
    pub min_sigma_rot: f64,
}

impl Default for WigoConfig {
    fn default() -> Self {
        Self { solver: SolverConfig::default(), min_sigma_trans: 1e-3, min_sigma_rot: 1e-4 }
    }
}

impl WigoConfig {
    pub fn validate(&self) -> Result<()> {
        self.solver.validate().map_err(|e| match e {
            Error::InvalidSpec(f) => Error::InvalidSpec(format!("wigo.{f}")),
            e => e,
        })?;
        if !(self.min_sigma_trans > 0.0) {
            return Err(Error::InvalidSpec("wigo.min_sigma_trans".into()));
        }
        if !(self.min_sigma_rot > 0.0) {
            return Err(Error::InvalidSpec("wigo.min_sigma_rot".into()));
        }
        Ok(())
    }
}

/// Chains odometry from the first GNSS fix. The initial heading aligns the
/// horizontal dead-reckoned displacement with the GNSS displacement.
pub fn build_graph(log: &SensorLog) -> Result<PoseGraph> {
    let mut frames: Vec<u32> = log.frames.iter().map(|f| f.0).collect();
    frames.sort_unstable();
    frames.dedup();
    if frames.len() < 2 {
        return Err(Error::EmptyLog);
    }
    let Some(anchor) = log.gnss.iter().min_by_key(|g| g.frame) else {
        return Err(Error::NoGlobalAnchor);
    };
    let index: BTreeMap<u32, usize> = frames.iter().enumerate().map(|(i, f)| (*f, i)).collect();
    for g in &log.gnss {
        if !index.contains_key(&g.frame) {
            return Err(Error::UnknownFrame(g.frame));
        }
    }
    let mut deltas: Vec<Option<&crate::scenario::OdometryDelta>> = vec![None; frames.len() - 1];
    for o in &log.relative_odometry {
        let i = *index.get(&o.from).ok_or(Error::UnknownFrame(o.from))?;
        if frames.get(i + 1) != Some(&o.to) || deltas[i].is_some() {
            return Err(Error::InvalidSpec(format!("odometry {}->{} does not link consecutive frames", o.from, o.to)));
        }
        deltas[i] = Some(o);
    }
    let deltas: Vec<&crate::scenario::OdometryDelta> = deltas
        .into_iter()
        .enumerate()
        .map(|(i, d)| d.ok_or_else(|| Error::InvalidSpec(format!("missing odometry after frame {}", frames[i]))))
        .collect::<Result<_>>()?;

    // dead reckoning in an arbitrary frame, then anchored
    let mut chain = vec![Pose::identity()];
    for d in &deltas {
        let last = *chain.last().unwrap();
        chain.push(last.compose(&d.delta));
    }
    let a = index[&anchor.frame];
    let mut dr = Vector3::zeros();
    let mut gn = Vector3::zeros();
    for g in &log.gnss {
        let k = index[&g.frame];
        dr += chain[k].translation - chain[a].translation;
        gn += g.position_vec() - anchor.position_vec();
    }
    let yaw = if dr.xy().norm() > 1e-9 && gn.xy().norm() > 1e-9 {
        gn.y.atan2(gn.x) - dr.y.atan2(dr.x)
    } else {
        0.0
    };
    let align = Pose::new(UnitQuaternion::from_axis_angle(&Vector3::z_axis(), yaw), Vector3::zeros());
    let start = align.compose(&chain[a].inverse());
    let offset = anchor.position_vec() - start.compose(&chain[a]).translation;
    let nodes = frames
        .iter()
        .zip(&chain)
        .map(|(f, c)| {
            let p = start.compose(c);
            (*f, Pose::new(p.rotation, p.translation + offset))
        })
        .collect();

    let gnss_factors = log
        .gnss
        .iter()
        .map(|g| GnssFactor { frame: g.frame, position: g.position_vec(), sigma_xy: g.sigma_xy, sigma_z: g.sigma_z })
        .collect();
    let relative_factors = deltas
        .iter()
        .map(|d| RelativeFactor {
            from: d.from,
            to: d.to,
            delta: d.delta,
            sigma_trans: d.sigma_trans,
            sigma_rot: d.sigma_rot,
        })
        .collect();
    Ok(PoseGraph { nodes, gnss_factors, relative_factors })
}

/// One linearized factor: residual plus Jacobian blocks per node index.
struct Linearized {
    residual: DVector<f64>,
    blocks: Vec<(usize, DMatrix<f64>)>,
}

enum Factor<'a> {
    Gnss(&'a GnssFactor),
    Relative(&'a RelativeFactor),
}

/// Graph with node indices resolved and factors in residual order.
struct Indexed<'a> {
    frames: Vec<u32>,
    index: BTreeMap<u32, usize>,
    factors: Vec<Factor<'a>>,
    min_trans: f64,
    min_rot: f64,
}

impl<'a> Indexed<'a> {
    fn new(graph: &'a PoseGraph, min_trans: f64, min_rot: f64) -> Result<Self> {
        let frames: Vec<u32> = graph.nodes.keys().copied().collect();
        let index: BTreeMap<u32, usize> = frames.iter().enumerate().map(|(i, f)| (*f, i)).collect();
        let mut keyed: Vec<((u32, u8, usize), Factor<'a>)> = Vec::new();
        for (k, g) in graph.gnss_factors.iter().enumerate() {
            if !index.contains_key(&g.frame) {
                return Err(Error::UnknownFrame(g.frame));
            }
            keyed.push(((g.frame, 0, k), Factor::Gnss(g)));
        }
        for (k, r) in graph.relative_factors.iter().enumerate() {
            for f in [r.from, r.to] {
                if !index.contains_key(&f) {
                    return Err(Error::UnknownFrame(f));
                }
            }
            keyed.push(((r.from, 1, k), Factor::Relative(r)));
        }
        keyed.sort_by_key(|(k, _)| *k);
        Ok(Self { frames, index, factors: keyed.into_iter().map(|(_, f)| f).collect(), min_trans, min_rot })
    }

    fn linearize_factor(&self, f: &Factor, poses: &[Pose], with_jacobian: bool) -> Linearized {
        match f {
            Factor::Gnss(g) => {
                let i = self.index[&g.frame];
                let sxy = g.sigma_xy.max(self.min_trans);
                let w = Vector3::new(1.0 / sxy, 1.0 / sxy, 1.0 / g.sigma_z.max(self.min_trans));
                let r = (poses[i].translation - g.position).component_mul(&w);
                let mut blocks = Vec::new();
                if with_jacobian {
                    let mut j = DMatrix::zeros(3, 6);
                    for a in 0..3 {
                        j[(a, 3 + a)] = w[a];
                    }
                    blocks.push((i, j));
                }
                Linearized { residual: DVector::from_column_slice(r.as_slice()), blocks }
            }
            Factor::Relative(rf) => {
                let (i, j) = (self.index[&rf.from], self.index[&rf.to]);
                let (ti, tj) = (&poses[i], &poses[j]);
                let ri = ti.rotation_matrix();
                let rj = tj.rotation_matrix();
                let rd = rf.delta.rotation_matrix();
                let phi = so3_log(&(rf.delta.rotation.inverse() * ti.rotation.inverse() * tj.rotation));
                let d = tj.translation - ti.translation;
                let a = rd.transpose() * ri.transpose();
                let rt = a * d - rd.transpose() * rf.delta.translation;
                let wr = 1.0 / rf.sigma_rot.max(self.min_rot);
                let wt = 1.0 / rf.sigma_trans.max(self.min_trans);
                let mut r = Vector6::zeros();
                r.fixed_rows_mut::<3>(0).copy_from(&(phi * wr));
                r.fixed_rows_mut::<3>(3).copy_from(&(rt * wt));
                let mut blocks = Vec::new();
                if with_jacobian {
                    let jr = right_jacobian_inv(&phi) * rj.transpose();
                    let mut bi = DMatrix::zeros(6, 6);
                    let mut bj = DMatrix::zeros(6, 6);
                    set3(&mut bi, 0, 0, &(-jr * wr));
                    set3(&mut bj, 0, 0, &(jr * wr));
                    set3(&mut bi, 3, 0, &(a * hat(&d) * wt));
                    set3(&mut bi, 3, 3, &(-a * wt));
                    set3(&mut bj, 3, 3, &(a * wt));
                    blocks.push((i, bi));
                    blocks.push((j, bj));
                }
                Linearized { residual: DVector::from_column_slice(r.as_slice()), blocks }
            }
        }
    }

    fn poses(&self, table: &PoseTable) -> Vec<Pose> {
        self.frames.iter().map(|f| table[f]).collect()
    }
}

fn set3(m: &mut DMatrix<f64>, r0: usize, c0: usize, b: &Matrix3<f64>) {
    m.view_mut((r0, c0), (3, 3)).copy_from(b);
}

/// Weighted residual vector in the documented order.
pub fn residuals(graph: &PoseGraph, cfg: &WigoConfig) -> Result<DVector<f64>> {
    let ix = Indexed::new(graph, cfg.min_sigma_trans, cfg.min_sigma_rot)?;
    let poses = ix.poses(&graph.nodes);
    let parts: Vec<f64> =
        ix.factors.iter().flat_map(|f| ix.linearize_factor(f, &poses, false).residual.iter().copied().collect::<Vec<_>>()).collect();
    Ok(DVector::from_vec(parts))
}

/// Dense Jacobian of [`residuals`] with respect to left increments, columns
/// ordered by frame then `(ω, v)`.
pub fn jacobian(graph: &PoseGraph, cfg: &WigoConfig) -> Result<DMatrix<f64>> {
    let ix = Indexed::new(graph, cfg.min_sigma_trans, cfg.min_sigma_rot)?;
    let poses = ix.poses(&graph.nodes);
    let lins: Vec<Linearized> = ix.factors.iter().map(|f| ix.linearize_factor(f, &poses, true)).collect();
    let rows: usize = lins.iter().map(|l| l.residual.len()).sum();
    let mut j = DMatrix::zeros(rows, 6 * poses.len());
    let mut r0 = 0;
    for l in &lins {
        for (node, b) in &l.blocks {
            j.view_mut((r0, 6 * node), (b.nrows(), 6)).copy_from(b);
        }
        r0 += l.residual.len();
    }
    Ok(j)
}

struct ChainSystem {
    h: ProfileMatrix,
    g: DVector<f64>,
}

impl NormalSystem for ChainSystem {
    fn gradient_norm(&self) -> f64 {
        self.g.amax()
    }

    fn solve_damped(&self, lambda: f64) -> Option<DVector<f64>> {
        let mut h = self.h.clone();
        h.add_diagonal(&damping_diagonal(&h.diagonal(), lambda));
        Some(h.cholesky()?.solve(&(-&self.g)))
    }
}

struct GraphProblem<'a> {
    ix: Indexed<'a>,
}

impl LeastSquaresProblem for GraphProblem<'_> {
    type Params = Vec<Pose>;
    type System = ChainSystem;

    fn cost(&self, poses: &Vec<Pose>) -> f64 {
        self.ix.factors.iter().map(|f| self.ix.linearize_factor(f, poses, false).residual.norm_squared()).sum()
    }

    fn linearize(&self, poses: &Vec<Pose>) -> ChainSystem {
        let n = poses.len();
        let block_first: Vec<usize> = (0..n).map(|b| b.saturating_sub(1)).collect();
        let mut h = ProfileMatrix::with_block_envelope(&block_first, 6);
        let mut g = DVector::zeros(6 * n);
        for f in &self.ix.factors {
            let l = self.ix.linearize_factor(f, poses, true);
            for (a, ja) in &l.blocks {
                let ga = ja.transpose() * &l.residual;
                let mut seg = g.rows_mut(6 * a, 6);
                seg += ga;
                for (b, jb) in &l.blocks {
                    if b <= a {
                        h.add_block(6 * a, 6 * b, &(ja.transpose() * jb));
                    }
                }
            }
        }
        ChainSystem { h, g }
    }

    fn retract(&self, poses: &Vec<Pose>, step: &DVector<f64>) -> Vec<Pose> {
        poses
            .iter()
            .enumerate()
            .map(|(i, p)| p.retract_left(&Vector6::from_column_slice(&step.as_slice()[6 * i..6 * i + 6])))
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WigoTrace {
    /// Initial cost followed by the cost after every accepted step.
    pub costs: Vec<f64>,
    pub iterations: usize,
    pub termination: Termination,
    pub final_gradient: f64,
}

#[derive(Clone, Debug)]
pub struct WigoResult {
    pub poses: PoseTable,
    pub trace: WigoTrace,
}

/// Levenberg-Marquardt on the graph; no node is held fixed.
pub fn optimize(graph: &PoseGraph, cfg: &WigoConfig) -> Result<WigoResult> {
    cfg.validate()?;
    if graph.gnss_factors.is_empty() {
        return Err(Error::NoGlobalAnchor);
    }
    let ix = Indexed::new(graph, cfg.min_sigma_trans, cfg.min_sigma_rot)?;
    let initial = ix.poses(&graph.nodes);
    let problem = GraphProblem { ix };
    let sol = levenberg_marquardt(&problem, initial, &cfg.solver)?;
    let poses = problem.ix.frames.iter().copied().zip(sol.params).collect();
    Ok(WigoResult {
        poses,
        trace: WigoTrace {
            costs: sol.costs,
            iterations: sol.iterations,
            termination: sol.termination,
            final_gradient: sol.final_gradient,
        },
    })
}

/// Gradient `Jᵀr` at the graph's current nodes.
pub fn gradient(graph: &PoseGraph, cfg: &WigoConfig) -> Result<DVector<f64>> {
    Ok(jacobian(graph, cfg)?.transpose() * residuals(graph, cfg)?)
}
