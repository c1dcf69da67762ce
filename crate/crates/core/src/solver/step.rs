use nalgebra::Vector3;

use super::assemble::{Evaluation, StepContext};
use super::linear::{solve_direct, solve_pcg, Csr};
use super::scene::{split_z, Scene};
use super::{al_update, AlStatus, KinematicConstraints, LinearSolver, SolverConfig, SystemState};
use crate::contact::{ccd_candidates, ccd_max_step};
use crate::math::inf_norm;
use crate::{Error, Result};

const ARMIJO_C: f64 = 1e-4;
const MIN_STEP: f64 = 1e-10;
/// Outer AL rounds without residual decrease before giving up.
const AL_STALL_ROUNDS: usize = 5;

#[derive(Debug, Clone, PartialEq)]
pub struct StepStats {
    pub newton_iters: usize,
    pub al_rounds: usize,
    /// Minimized potential at the accepted state.
    pub energy: f64,
    /// `kappa sum_k A_k b(d_k)` at the accepted state (J).
    pub barrier_energy: f64,
    /// Smallest pair distance below `dhat` at the accepted state.
    pub min_distance: Option<f64>,
    /// Smallest pair distance over every accepted Newton iterate.
    pub min_iterate_distance: Option<f64>,
    pub constraint_residual: f64,
    pub num_contacts: usize,
    pub gradient_norm: f64,
    /// Whether the constrained DoFs could be moved to their targets up front.
    pub predictor_accepted: bool,
}

fn min_opt(a: Option<f64>, b: Option<f64>) -> Option<f64> {
    match (a, b) {
        (Some(a), Some(b)) => Some(a.min(b)),
        (a, None) => a,
        (None, b) => b,
    }
}

/// Solve `H p = -g` with the configured linear solver; falls back to steepest
/// descent if the result is not a descent direction.
pub fn newton_direction(
    scene: &Scene,
    eval: &Evaluation,
    solver: &LinearSolver,
) -> Result<Vec<f64>> {
    let n = eval.gradient.len();
    let h = Csr::from_triplets(n, &eval.hessian);
    let rhs: Vec<f64> = eval.gradient.iter().map(|g| -g).collect();
    let p = match *solver {
        LinearSolver::Direct => solve_direct(&h, &rhs)?,
        LinearSolver::Pcg { tol, max_iters } => {
            let mut blocks: Vec<_> = (0..scene.affine.len())
                .map(|b| 12 * b..12 * b + 12)
                .collect();
            let na = scene.num_affine_dofs();
            blocks.extend((0..scene.num_soft_vertices()).map(|v| na + 3 * v..na + 3 * v + 3));
            solve_pcg(&h, &rhs, &blocks, tol, max_iters)?
        }
    };
    let gp: f64 = p.iter().zip(&eval.gradient).map(|(a, b)| a * b).sum();
    if gp < 0.0 {
        return Ok(p);
    }
    log::warn!("Newton direction is not a descent direction (g.p = {gp:e}); using the gradient");
    let d = h
        .diagonal()
        .iter()
        .fold(0.0f64, |m, v| m.max(*v))
        .max(1e-300);
    Ok(eval.gradient.iter().map(|g| -g / d).collect())
}

fn collision_displacement(scene: &Scene, p: &[f64]) -> Vec<Vector3<f64>> {
    // the embedding is affine in z, so embedding p itself gives the
    // displacement of every collision vertex
    let (yp, xp) = split_z(p, scene.num_affine_dofs());
    scene.collision_positions(&yp, &xp)
}

/// Backtracking line search from the CCD-safe step: returns the accepted
/// step and the evaluation there.
pub(crate) fn line_search_impl(
    ctx: &StepContext,
    z: &[f64],
    p: &[f64],
    current: &Evaluation,
    constraints: &KinematicConstraints,
) -> Result<(f64, Vec<f64>, Evaluation)> {
    let scene = ctx.scene;
    let xc = scene.collision_positions_z(z);
    let dx = collision_displacement(scene, p);
    let candidates = ccd_candidates(&scene.collision, &xc, &dx, ctx.config.dhat);
    let mut alpha = ccd_max_step(&xc, &dx, &candidates).min(1.0);
    let gp: f64 = p.iter().zip(&current.gradient).map(|(a, b)| a * b).sum();
    let slack = 4.0 * f64::EPSILON * current.value.abs();
    while alpha >= MIN_STEP {
        let trial: Vec<f64> = z.iter().zip(p).map(|(a, b)| a + alpha * b).collect();
        let e = ctx.evaluate(&trial, constraints, false)?;
        if e.value.is_finite() && e.value <= current.value + ARMIJO_C * alpha * gp + slack {
            return Ok((alpha, trial, e));
        }
        alpha *= 0.5;
    }
    Err(Error::NewtonStall {
        iterations: 0,
        gradient_norm: inf_norm(&current.gradient),
        tolerance: ctx.config.gradient_tol(),
        last_alpha: alpha,
    })
}

/// CCD-capped backtracking line search along `p` from `state`; returns the
/// accepted step size.
pub fn line_search(
    scene: &Scene,
    state: &SystemState,
    p: &[f64],
    constraints: &KinematicConstraints,
    config: &SolverConfig,
) -> Result<f64> {
    let ctx = StepContext::new(scene, state, config)?;
    let z = state.to_z();
    let current = ctx.evaluate(&z, constraints, true)?;
    line_search_impl(&ctx, &z, p, &current, constraints).map(|r| r.0)
}

struct NewtonOutcome {
    iterations: usize,
    eval: Evaluation,
    gradient_norm: f64,
    min_distance: Option<f64>,
}

fn newton_solve(
    ctx: &StepContext,
    z: &mut Vec<f64>,
    constraints: &KinematicConstraints,
) -> Result<NewtonOutcome> {
    let cfg = ctx.config;
    let tol = cfg.gradient_tol();
    let mut eval = ctx.evaluate(z, constraints, true)?;
    if !eval.value.is_finite() {
        return Err(Error::InvalidState(
            "Newton started from an infeasible state".into(),
        ));
    }
    let mut min_distance = eval.min_distance();
    let mut last_alpha = 1.0;
    for it in 0..cfg.max_newton_iters {
        let gnorm = inf_norm(&eval.gradient);
        if gnorm <= tol {
            return Ok(NewtonOutcome {
                iterations: it,
                eval,
                gradient_norm: gnorm,
                min_distance,
            });
        }
        let p = newton_direction(ctx.scene, &eval, &cfg.linear_solver)?;
        let (alpha, trial, _) = match line_search_impl(ctx, z, &p, &eval, constraints) {
            Ok(r) => r,
            Err(Error::NewtonStall { last_alpha, .. }) => {
                return Err(Error::NewtonStall {
                    iterations: it,
                    gradient_norm: gnorm,
                    tolerance: tol,
                    last_alpha,
                })
            }
            Err(e) => return Err(e),
        };
        last_alpha = alpha;
        *z = trial;
        eval = ctx.evaluate(z, constraints, true)?;
        min_distance = min_opt(min_distance, eval.min_distance());
    }
    let gnorm = inf_norm(&eval.gradient);
    if gnorm <= tol {
        return Ok(NewtonOutcome {
            iterations: cfg.max_newton_iters,
            eval,
            gradient_norm: gnorm,
            min_distance,
        });
    }
    Err(Error::NewtonStall {
        iterations: cfg.max_newton_iters,
        gradient_norm: gnorm,
        tolerance: tol,
        last_alpha,
    })
}

/// Advance one time step: minimize the incremental potential subject to the
/// kinematic constraints and update velocities by backward Euler.
pub fn step(
    scene: &Scene,
    state: &SystemState,
    constraints: &mut KinematicConstraints,
    config: &SolverConfig,
) -> Result<(SystemState, StepStats)> {
    config.validate()?;
    let n = scene.num_dofs();
    let z0 = state.to_z();
    if z0.len() != n || state.v_y.len() != state.y.len() || state.v_x.len() != state.x.len() {
        return Err(Error::InvalidState("state does not match scene".into()));
    }
    if z0.iter().chain(&state.velocity_z()).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("state".into()));
    }
    let ctx = StepContext::new(scene, state, config)?;
    let mass = scene.mass_diagonal();
    for (i, &d) in constraints.dofs.iter().enumerate() {
        if d >= n || ctx.fixed[d] {
            return Err(Error::InvalidParameter(format!(
                "constraint on invalid or fixed DoF {d}"
            )));
        }
        constraints.penalty[i] = config.al_penalty * mass[d].max(f64::MIN_POSITIVE);
    }

    let mut z = z0.clone();
    let mut predictor_accepted = false;
    if !constraints.is_empty() {
        let mut p = vec![0.0; n];
        for (&d, &t) in constraints.dofs.iter().zip(&constraints.targets) {
            p[d] = t - z[d];
        }
        let xc = scene.collision_positions_z(&z);
        let dx = collision_displacement(scene, &p);
        let candidates = ccd_candidates(&scene.collision, &xc, &dx, config.dhat);
        if ccd_max_step(&xc, &dx, &candidates) >= 1.0 {
            let trial: Vec<f64> = z.iter().zip(&p).map(|(a, b)| a + b).collect();
            if ctx.evaluate(&trial, constraints, false)?.value.is_finite() {
                z = trial;
                predictor_accepted = true;
            }
        }
    }

    let mut iterations = 0;
    let mut rounds = 0;
    let mut previous: Option<f64> = None;
    let mut stalled = 0;
    let mut history = Vec::new();
    let mut min_iterate = None;
    let outcome = loop {
        let out = newton_solve(&ctx, &mut z, constraints)?;
        iterations += out.iterations;
        rounds += 1;
        min_iterate = min_opt(min_iterate, out.min_distance);
        if constraints.is_empty() {
            break out;
        }
        let res = constraints.max_residual(&z);
        history.push(res);
        match al_update(
            constraints,
            &z,
            config.constraint_tol,
            config.al_growth,
            previous,
        ) {
            AlStatus::Converged => break out,
            AlStatus::Updated { .. } => {}
        }
        if previous.is_some_and(|p| res >= p) {
            stalled += 1;
        } else {
            stalled = 0;
        }
        if stalled >= AL_STALL_ROUNDS || rounds >= config.max_al_rounds {
            return Err(Error::ConstraintInfeasible {
                rounds,
                residuals: history,
            });
        }
        previous = Some(res);
    };

    let (y, x) = split_z(&z, scene.num_affine_dofs());
    let inv_dt = 1.0 / config.dt;
    let v_y = y
        .iter()
        .zip(&state.y)
        .map(|(a, b)| (a - b) * inv_dt)
        .collect();
    let v_x = x
        .iter()
        .zip(&state.x)
        .map(|(a, b)| (a - b) * inv_dt)
        .collect();
    let next = SystemState {
        y,
        x,
        v_y,
        v_x,
        time: state.time + config.dt,
        step: state.step + 1,
    };
    let stats = StepStats {
        newton_iters: iterations,
        al_rounds: rounds,
        energy: outcome.eval.value,
        barrier_energy: outcome.eval.barrier,
        min_distance: outcome.eval.min_distance(),
        min_iterate_distance: min_iterate,
        constraint_residual: constraints.max_residual(&z),
        num_contacts: outcome.eval.pairs.len(),
        gradient_norm: outcome.gradient_norm,
        predictor_accepted,
    };
    Ok((next, stats))
}
