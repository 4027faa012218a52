//! Damped Gauss-Newton (Levenberg-Marquardt) driver shared by the pose graph
//! and the bundle adjuster.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Damping beyond which the solver gives up looking for a descent step.
pub const MAX_DAMPING: f64 = 1e12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    pub max_iterations: usize,
    pub initial_damping: f64,
    pub damping_up: f64,
    pub damping_down: f64,
    /// Stop when an accepted step decreases the cost by less than this fraction.
    pub convergence_tol: f64,
    /// Stop when the update norm drops below this.
    pub step_tol: f64,
    /// Stop when `|Jᵀr|∞ <= gradient_tol · (1 + cost)`.
    pub gradient_tol: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            max_iterations: 100,
            initial_damping: 1e-4,
            damping_up: 10.0,
            damping_down: 0.1,
            convergence_tol: 1e-12,
            step_tol: 1e-12,
            gradient_tol: 1e-9,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |f: &str| Err(Error::InvalidSpec(format!("solver.{f}")));
        if self.max_iterations < 1 {
            return bad("max_iterations");
        }
        if !(self.initial_damping > 0.0) {
            return bad("initial_damping");
        }
        if !(self.damping_up > 1.0) {
            return bad("damping_up");
        }
        if !(self.damping_down > 0.0 && self.damping_down < 1.0) {
            return bad("damping_down");
        }
        if !(self.convergence_tol > 0.0) {
            return bad("convergence_tol");
        }
        if !(self.step_tol > 0.0) {
            return bad("step_tol");
        }
        if !(self.gradient_tol > 0.0) {
            return bad("gradient_tol");
        }
        Ok(())
    }
}

/// Linearization of the residual at the current parameters.
pub trait NormalSystem {
    /// `|Jᵀr|∞`
    fn gradient_norm(&self) -> f64;
    /// Solves `(JᵀJ + λ·diag(JᵀJ)) δ = -Jᵀr`.
    fn solve_damped(&self, lambda: f64) -> Option<DVector<f64>>;
}

pub trait LeastSquaresProblem {
    type Params: Clone;
    type System: NormalSystem;

    /// Sum of squared weighted residuals.
    fn cost(&self, params: &Self::Params) -> f64;
    fn linearize(&self, params: &Self::Params) -> Self::System;
    fn retract(&self, params: &Self::Params, step: &DVector<f64>) -> Self::Params;
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Gradient,
    CostDecrease,
    StepSize,
    MaxIterations,
    /// No damping level yields a decrease after earlier progress: the cost
    /// sits at its numerical floor.
    Stalled,
}

#[derive(Clone, Debug)]
pub struct Solution<P> {
    pub params: P,
    /// Initial cost followed by the cost after each accepted step.
    pub costs: Vec<f64>,
    pub iterations: usize,
    pub termination: Termination,
    pub final_gradient: f64,
}

pub fn levenberg_marquardt<P: LeastSquaresProblem>(
    problem: &P,
    initial: P::Params,
    cfg: &SolverConfig,
) -> Result<Solution<P::Params>> {
    let mut params = initial;
    let mut cost = problem.cost(&params);
    let mut costs = vec![cost];
    let mut lambda = cfg.initial_damping;
    let mut termination = Termination::MaxIterations;
    let mut iterations = 0;
    let mut final_gradient = f64::NAN;

    'outer: for _ in 0..cfg.max_iterations {
        iterations += 1;
        let system = problem.linearize(&params);
        final_gradient = system.gradient_norm();
        if final_gradient <= cfg.gradient_tol * (1.0 + cost) {
            termination = Termination::Gradient;
            break;
        }
        loop {
            let Some(step) = system.solve_damped(lambda) else {
                lambda *= cfg.damping_up;
                if lambda > MAX_DAMPING {
                    if costs.len() > 1 {
                        termination = Termination::Stalled;
                        break 'outer;
                    }
                    return Err(Error::SolverDiverged { damping: lambda });
                }
                continue;
            };
            if step.norm() <= cfg.step_tol {
                termination = Termination::StepSize;
                break 'outer;
            }
            let candidate = problem.retract(&params, &step);
            let candidate_cost = problem.cost(&candidate);
            if candidate_cost < cost {
                let decrease = (cost - candidate_cost) / cost;
                params = candidate;
                cost = candidate_cost;
                costs.push(cost);
                lambda = (lambda * cfg.damping_down).max(1e-15);
                if decrease < cfg.convergence_tol {
                    termination = Termination::CostDecrease;
                    break 'outer;
                }
                break;
            }
            lambda *= cfg.damping_up;
            if lambda > MAX_DAMPING {
                if costs.len() > 1 {
                    termination = Termination::Stalled;
                    break 'outer;
                }
                return Err(Error::SolverDiverged { damping: lambda });
            }
        }
    }
    Ok(Solution { params, costs, iterations, termination, final_gradient })
}

/// Marquardt scaling for the damping term; keeps unobserved directions solvable.
pub(crate) fn damping_diagonal(diag: &[f64], lambda: f64) -> Vec<f64> {
    diag.iter().map(|d| lambda * d.max(1e-9)).collect()
}
