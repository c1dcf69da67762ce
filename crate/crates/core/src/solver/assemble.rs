//! Evaluation of the full incremental potential over `z`.

use nalgebra::{Matrix3, SMatrix, SVector, Vector3};

use super::scene::{split_z, CollisionVertex, Scene};
use super::{KinematicConstraints, SolverConfig, SystemState};
use crate::abd::{affine_inertia, arap_energy, AffineState, Vec12};
use crate::contact::{build_candidates, ContactPair};
use crate::energy::{
    barrier_pair, barrier_pair_value, barrier_total, friction_pair, neo_hookean_density,
    neo_hookean_element,
};
use crate::Result;

/// Quantities frozen for the duration of one step.
pub(crate) struct StepContext<'a> {
    pub scene: &'a Scene,
    pub config: &'a SolverConfig,
    pub z_hat: Vec<f64>,
    pub fixed: Vec<bool>,
    pub x_prev: Vec<Vector3<f64>>,
    pub friction_pairs: Vec<ContactPair>,
    gravity_y: Vec<Vec12>,
}

/// Potential value with optional derivatives at one `z`.
#[derive(Debug, Clone)]
pub struct Evaluation {
    /// Total potential; `+inf` for inverted elements or touching pairs.
    pub value: f64,
    /// `kappa sum A_k b(d_k)` (J), not scaled by dt^2.
    pub barrier: f64,
    pub gradient: Vec<f64>,
    pub hessian: Vec<(usize, usize, f64)>,
    pub pairs: Vec<ContactPair>,
}

impl Evaluation {
    pub fn min_distance(&self) -> Option<f64> {
        self.pairs.iter().map(|p| p.distance).min_by(f64::total_cmp)
    }

    fn infeasible(pairs: Vec<ContactPair>) -> Self {
        Self {
            value: f64::INFINITY,
            barrier: f64::INFINITY,
            gradient: Vec::new(),
            hessian: Vec::new(),
            pairs,
        }
    }
}

/// `(dof, weight)` pairs expressing one coordinate of a collision vertex.
fn coordinate_map(scene: &Scene, cv: &CollisionVertex, k: usize, out: &mut Vec<(usize, f64)>) {
    match *cv {
        CollisionVertex::Affine { body, rest } => {
            out.push((12 * body + k, 1.0));
            for j in 0..3 {
                out.push((12 * body + 3 + 3 * k + j, rest[j]));
            }
        }
        CollisionVertex::Soft { body, vertex } => out.push((scene.soft_dof(body, vertex, k), 1.0)),
    }
}

struct Accumulator<'a> {
    fixed: &'a [bool],
    gradient: Vec<f64>,
    hessian: Vec<(usize, usize, f64)>,
}

impl Accumulator<'_> {
    fn add_block<const K: usize>(
        &mut self,
        idx: &[usize; K],
        g: &SVector<f64, K>,
        h: &SMatrix<f64, K, K>,
        s: f64,
    ) {
        for i in 0..K {
            if self.fixed[idx[i]] {
                continue;
            }
            self.gradient[idx[i]] += s * g[i];
            for j in 0..K {
                let v = s * h[(i, j)];
                if !self.fixed[idx[j]] && v != 0.0 {
                    self.hessian.push((idx[i], idx[j], v));
                }
            }
        }
    }

    /// Pull back a 12-coordinate contact contribution through the embedding.
    fn add_contact(
        &mut self,
        scene: &Scene,
        vertices: &[usize; 4],
        g: &SVector<f64, 12>,
        h: &SMatrix<f64, 12, 12>,
        s: f64,
    ) {
        // each coordinate depends on at most 4 DoFs, so at most 48 distinct ones
        let mut dofs: Vec<usize> = Vec::with_capacity(48);
        let mut rows: [Vec<(usize, f64)>; 12] = Default::default();
        let mut map = Vec::with_capacity(4);
        for (c, row) in rows.iter_mut().enumerate() {
            map.clear();
            coordinate_map(
                scene,
                &scene.collision_vertices[vertices[c / 3]],
                c % 3,
                &mut map,
            );
            for &(d, w) in &map {
                let slot = match dofs.iter().position(|&x| x == d) {
                    Some(s) => s,
                    None => {
                        dofs.push(d);
                        dofs.len() - 1
                    }
                };
                row.push((slot, w));
            }
        }
        let m = dofs.len();
        // t = h J (12 x m), then J^T t
        let mut t = vec![0.0; 12 * m];
        for (d, row) in rows.iter().enumerate() {
            for &(slot, w) in row {
                for c in 0..12 {
                    t[c * m + slot] += h[(c, d)] * w;
                }
            }
        }
        let mut gr = vec![0.0; m];
        let mut hr = vec![0.0; m * m];
        for (c, row) in rows.iter().enumerate() {
            for &(a, w) in row {
                gr[a] += w * g[c];
                for b in 0..m {
                    hr[a * m + b] += w * t[c * m + b];
                }
            }
        }
        for a in 0..m {
            if self.fixed[dofs[a]] {
                continue;
            }
            self.gradient[dofs[a]] += s * gr[a];
            for b in 0..m {
                let v = s * hr[a * m + b];
                if !self.fixed[dofs[b]] && v != 0.0 {
                    self.hessian.push((dofs[a], dofs[b], v));
                }
            }
        }
    }
}

impl<'a> StepContext<'a> {
    pub fn new(scene: &'a Scene, state: &SystemState, config: &'a SolverConfig) -> Result<Self> {
        let z = state.to_z();
        let v = state.velocity_z();
        let fixed = scene.fixed_dofs();
        let z_hat = z
            .iter()
            .zip(&v)
            .zip(&fixed)
            .map(|((z, v), &f)| if f { *z } else { z + config.dt * v })
            .collect();
        let x_prev = scene.collision_positions(&state.y, &state.x);
        let mut friction_pairs = Vec::new();
        if config.mu > 0.0 {
            friction_pairs = build_candidates(&scene.collision, &x_prev, config.dhat)?;
            crate::energy::lag_friction(&mut friction_pairs, config.dhat, config.kappa)?;
        }
        let gravity_y = scene
            .affine
            .iter()
            .map(|a| a.body.gravity_force(&scene.gravity))
            .collect();
        Ok(Self {
            scene,
            config,
            z_hat,
            fixed,
            x_prev,
            friction_pairs,
            gravity_y,
        })
    }

    pub fn evaluate(
        &self,
        z: &[f64],
        constraints: &KinematicConstraints,
        derivatives: bool,
    ) -> Result<Evaluation> {
        let scene = self.scene;
        let cfg = self.config;
        let dt2 = cfg.dt * cfg.dt;
        let n = z.len();
        let na = scene.num_affine_dofs();
        let (_, x) = split_z(z, na);
        let xc = scene.collision_positions_z(z);
        let pairs = build_candidates(&scene.collision, &xc, cfg.dhat)?;
        if pairs.iter().any(|p| !(p.distance > 0.0)) {
            return Ok(Evaluation::infeasible(pairs));
        }
        let mut acc = Accumulator {
            fixed: &self.fixed,
            gradient: if derivatives {
                vec![0.0; n]
            } else {
                Vec::new()
            },
            hessian: Vec::new(),
        };
        let mut value = 0.0;

        // affine bodies: inertia, ARAP, gravity
        for (b, entry) in scene.affine.iter().enumerate() {
            if entry.fixed {
                continue;
            }
            let idx: [usize; 12] = std::array::from_fn(|k| 12 * b + k);
            let y = Vec12::from_column_slice(&z[12 * b..12 * b + 12]);
            let y_hat = Vec12::from_column_slice(&self.z_hat[12 * b..12 * b + 12]);
            let (e, g, h) = affine_inertia(&y, &y_hat, &entry.body.reduced_mass);
            let state = AffineState::from_slice(y.as_slice());
            let (ea, ga, ha) =
                arap_energy(&state, entry.body.arap_stiffness, entry.body.volume, true);
            let fg = &self.gravity_y[b];
            value += e + dt2 * (ea - fg.dot(&y));
            if derivatives {
                acc.add_block(&idx, &g, &h, 1.0);
                acc.add_block(&idx, &ga, &ha, dt2);
                acc.add_block(&idx, &(-fg), &SMatrix::zeros(), dt2);
            }
        }

        // soft bodies: inertia, gravity, elasticity
        for (s, body) in scene.soft.iter().enumerate() {
            let (mu, lambda) = body.material.lame();
            for v in 0..body.tet.num_vertices() {
                let gi = scene.soft_vertex(s, v);
                let m = body.masses[v];
                let off = na + 3 * gi;
                let xh = Vector3::new(self.z_hat[off], self.z_hat[off + 1], self.z_hat[off + 2]);
                let e = x[gi] - xh;
                value += 0.5 * m * e.norm_squared() - dt2 * m * scene.gravity.dot(&x[gi]);
                if derivatives {
                    for k in 0..3 {
                        acc.gradient[off + k] += m * e[k] - dt2 * m * scene.gravity[k];
                        acc.hessian.push((off + k, off + k, m));
                    }
                }
            }
            for (t, tet) in body.tet.tets.iter().enumerate() {
                let xs = tet.map(|v| x[scene.soft_vertex(s, v)]);
                let inv_rest = &body.tet.inv_rest_shape[t];
                let vol = body.tet.rest_volumes[t];
                if !derivatives {
                    let f = Matrix3::from_columns(&[xs[1] - xs[0], xs[2] - xs[0], xs[3] - xs[0]])
                        * inv_rest;
                    match neo_hookean_density(&f, mu, lambda) {
                        Some(psi) => value += dt2 * vol * psi,
                        None => return Ok(Evaluation::infeasible(pairs)),
                    }
                    continue;
                }
                let Some((e, g, h)) = neo_hookean_element(&xs, inv_rest, vol, mu, lambda, true)
                else {
                    return Ok(Evaluation::infeasible(pairs));
                };
                value += dt2 * e;
                let idx: [usize; 12] =
                    std::array::from_fn(|i| scene.soft_dof(s, tet[i / 3], i % 3));
                acc.add_block(&idx, &g, &h, dt2);
            }
        }

        // contact barrier
        let mut barrier = 0.0;
        for pair in &pairs {
            if !derivatives {
                barrier += barrier_pair_value(pair, &xc, cfg.dhat, cfg.kappa)?;
                continue;
            }
            let (e, g, h) = barrier_pair(pair, &xc, cfg.dhat, cfg.kappa, true)?;
            barrier += e;
            if derivatives && e != 0.0 {
                acc.add_contact(scene, &pair.vertices, &g, &h, dt2);
            }
        }
        value += dt2 * barrier;

        // lagged friction
        let eps = cfg.eps_v * cfg.dt;
        for pair in &self.friction_pairs {
            if pair.lagged_normal_force == 0.0 {
                continue;
            }
            let (e, g, h) = friction_pair(pair, &xc, &self.x_prev, cfg.mu, eps);
            value += dt2 * e;
            if derivatives {
                acc.add_contact(scene, &pair.vertices, &g, &h, dt2);
            }
        }

        // kinematic constraints
        if derivatives {
            let mut diag = vec![0.0; n];
            value += constraints.energy(z, Some((&mut acc.gradient, &mut diag)));
            for (i, d) in diag.into_iter().enumerate() {
                if d != 0.0 {
                    acc.hessian.push((i, i, d));
                }
            }
            for (i, &f) in self.fixed.iter().enumerate() {
                if f {
                    acc.gradient[i] = 0.0;
                    acc.hessian.push((i, i, 1.0));
                }
            }
        } else {
            value += constraints.energy(z, None);
        }

        Ok(Evaluation {
            value,
            barrier,
            gradient: acc.gradient,
            hessian: acc.hessian,
            pairs,
        })
    }
}

/// Barrier forces `-grad(kappa sum_k A_k b(d_k))` on every collision vertex (N).
pub fn contact_forces(
    scene: &Scene,
    state: &SystemState,
    config: &SolverConfig,
) -> Result<Vec<Vector3<f64>>> {
    let xc = scene.collision_positions(&state.y, &state.x);
    let pairs = build_candidates(&scene.collision, &xc, config.dhat)?;
    let r = barrier_total(&pairs, &xc, config.dhat, config.kappa, false)?;
    Ok(r.gradient
        .chunks_exact(3)
        .map(|g| -Vector3::new(g[0], g[1], g[2]))
        .collect())
}
