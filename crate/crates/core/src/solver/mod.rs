//! Time stepping: each step minimizes the barrier-augmented incremental
//! potential over the stacked state `z = [y; x]` by projected Newton with a
//! CCD-filtered backtracking line search, inside an augmented Lagrangian
//! loop enforcing kinematic constraints.

mod assemble;
mod constraints;
mod linear;
mod scene;
mod step;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub use assemble::{contact_forces, Evaluation};
pub use constraints::{al_update, AlStatus, KinematicConstraints};
pub use linear::{solve_direct, solve_pcg, Csr};
pub use scene::{AffineEntry, CollisionVertex, Scene, SoftBody, SystemState};
pub use step::{line_search, newton_direction, step, StepStats};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum LinearSolver {
    Direct,
    Pcg { tol: f64, max_iters: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    /// Time step (s).
    pub dt: f64,
    /// Barrier activation distance (m).
    pub dhat: f64,
    /// Barrier stiffness; `kappa * A_k * b(d)` is an energy, so its unit is
    /// Pa/m (J per m^2 of area per m^2 of `b`).
    pub kappa: f64,
    /// Friction coefficient.
    pub mu: f64,
    /// Static/dynamic friction velocity threshold (m/s).
    pub eps_v: f64,
    /// Gradient infinity-norm threshold (N); compared against the dt^2-scaled
    /// potential gradient after multiplying by dt^2.
    pub newton_tol: f64,
    pub max_newton_iters: usize,
    /// Initial AL penalty relative to the diagonal mass of each DoF.
    pub al_penalty: f64,
    pub al_growth: f64,
    pub max_al_rounds: usize,
    /// Kinematic constraint tolerance (m for positions, dimensionless for
    /// affine linear-map entries).
    pub constraint_tol: f64,
    pub linear_solver: LinearSolver,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            dt: 0.01,
            dhat: 1e-3,
            kappa: 1e4,
            mu: 0.0,
            eps_v: 1e-3,
            newton_tol: 1e-4,
            max_newton_iters: 100,
            al_penalty: 1e4,
            al_growth: 2.0,
            max_al_rounds: 20,
            constraint_tol: 1e-6,
            linear_solver: LinearSolver::Direct,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("dt", self.dt),
            ("dhat", self.dhat),
            ("kappa", self.kappa),
            ("eps_v", self.eps_v),
            ("newton_tol", self.newton_tol),
            ("al_penalty", self.al_penalty),
            ("constraint_tol", self.constraint_tol),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidParameter(format!(
                    "{name} must be positive, got {v}"
                )));
            }
        }
        if !(self.mu >= 0.0 && self.mu.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "mu must be non-negative, got {}",
                self.mu
            )));
        }
        if !(self.al_growth > 1.0) {
            return Err(Error::InvalidParameter(format!(
                "al_growth must exceed 1, got {}",
                self.al_growth
            )));
        }
        if self.max_newton_iters == 0 || self.max_al_rounds == 0 {
            return Err(Error::InvalidParameter(
                "iteration limits must be positive".into(),
            ));
        }
        if let LinearSolver::Pcg { tol, max_iters } = self.linear_solver {
            if !(tol > 0.0) || max_iters == 0 {
                return Err(Error::InvalidParameter("invalid PCG settings".into()));
            }
        }
        Ok(())
    }

    /// Gradient threshold for the dt^2-scaled potential.
    pub fn gradient_tol(&self) -> f64 {
        self.newton_tol * self.dt * self.dt
    }
}
