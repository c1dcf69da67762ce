use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::abd::{AffineBody, AffineState};
use crate::contact::{build_candidates, find_intersections, BodySurface, CollisionMesh, PairKind};
use crate::energy::MaterialParams;
use crate::mesh::{lump_masses, surface_of, SurfaceMesh, TetMesh};
use crate::{Error, Result};

/// Hyperelastic tetrahedral body.
#[derive(Debug, Clone)]
pub struct SoftBody {
    pub name: String,
    pub tet: TetMesh,
    pub material: MaterialParams,
    pub masses: Vec<f64>,
    pub surface: SurfaceMesh,
    pub self_contact: bool,
}

impl SoftBody {
    pub fn new(name: impl Into<String>, tet: TetMesh, material: MaterialParams) -> Result<Self> {
        material.validate()?;
        let masses = lump_masses(&tet, material.density)?.masses;
        let surface = surface_of(&tet);
        Ok(Self {
            name: name.into(),
            tet,
            material,
            masses,
            surface,
            self_contact: false,
        })
    }
}

#[derive(Debug, Clone)]
pub struct AffineEntry {
    pub name: String,
    pub body: AffineBody,
    /// Fixed bodies keep their initial state (Dirichlet DoFs).
    pub fixed: bool,
}

/// Where a collision vertex gets its position from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CollisionVertex {
    Affine { body: usize, rest: Vector3<f64> },
    Soft { body: usize, vertex: usize },
}

/// Bodies, DoF layout and the merged collision surface. Affine bodies come
/// first in `z`, each with 12 DoFs, followed by 3 DoFs per soft vertex.
#[derive(Debug, Clone)]
pub struct Scene {
    pub affine: Vec<AffineEntry>,
    pub soft: Vec<SoftBody>,
    pub gravity: Vector3<f64>,
    pub collision: CollisionMesh,
    pub collision_vertices: Vec<CollisionVertex>,
    soft_offsets: Vec<usize>,
}

/// Positions and velocities of every body.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemState {
    /// 12 values per affine body: `[t; row-major A]`.
    pub y: Vec<f64>,
    /// Stacked soft vertex positions (m).
    pub x: Vec<Vector3<f64>>,
    pub v_y: Vec<f64>,
    pub v_x: Vec<Vector3<f64>>,
    pub time: f64,
    pub step: usize,
}

impl SystemState {
    pub fn to_z(&self) -> Vec<f64> {
        let mut z = self.y.clone();
        z.extend(self.x.iter().flat_map(|p| [p.x, p.y, p.z]));
        z
    }

    pub fn velocity_z(&self) -> Vec<f64> {
        let mut v = self.v_y.clone();
        v.extend(self.v_x.iter().flat_map(|p| [p.x, p.y, p.z]));
        v
    }

    pub fn affine_state(&self, body: usize) -> AffineState {
        AffineState::from_slice(&self.y[12 * body..12 * body + 12])
    }

    pub fn set_affine_state(&mut self, body: usize, s: &AffineState) {
        self.y[12 * body..12 * body + 12].copy_from_slice(s.to_vec().as_slice());
    }
}

pub(crate) fn split_z(z: &[f64], n_affine_dofs: usize) -> (Vec<f64>, Vec<Vector3<f64>>) {
    let y = z[..n_affine_dofs].to_vec();
    let x = z[n_affine_dofs..]
        .chunks_exact(3)
        .map(|c| Vector3::new(c[0], c[1], c[2]))
        .collect();
    (y, x)
}

impl Scene {
    pub fn new(affine: Vec<AffineEntry>, soft: Vec<SoftBody>, gravity: Vector3<f64>) -> Self {
        let mut surfaces = Vec::new();
        let mut collision_vertices = Vec::new();
        for (i, a) in affine.iter().enumerate() {
            surfaces.push(BodySurface {
                mesh: a.body.surface.clone(),
                is_static: a.fixed,
                self_contact: false,
            });
            collision_vertices.extend(
                a.body
                    .rest_vertices()
                    .iter()
                    .map(|&rest| CollisionVertex::Affine { body: i, rest }),
            );
        }
        let mut soft_offsets = vec![0];
        for (i, s) in soft.iter().enumerate() {
            let mut mesh = s.surface.mesh.clone();
            for (k, &v) in s.surface.volume_index.iter().enumerate() {
                mesh.vertices[k] = s.tet.vertices[v];
            }
            surfaces.push(BodySurface {
                mesh,
                is_static: false,
                self_contact: s.self_contact,
            });
            collision_vertices.extend(
                s.surface
                    .volume_index
                    .iter()
                    .map(|&vertex| CollisionVertex::Soft { body: i, vertex }),
            );
            soft_offsets.push(soft_offsets[i] + s.tet.num_vertices());
        }
        Self {
            collision: CollisionMesh::new(&surfaces),
            affine,
            soft,
            gravity,
            collision_vertices,
            soft_offsets,
        }
    }

    pub fn affine_collision_body(&self, i: usize) -> usize {
        i
    }

    pub fn soft_collision_body(&self, i: usize) -> usize {
        self.affine.len() + i
    }

    pub fn num_affine_dofs(&self) -> usize {
        12 * self.affine.len()
    }

    pub fn num_soft_vertices(&self) -> usize {
        *self.soft_offsets.last().unwrap()
    }

    pub fn num_dofs(&self) -> usize {
        self.num_affine_dofs() + 3 * self.num_soft_vertices()
    }

    pub fn affine_dof(&self, body: usize, k: usize) -> usize {
        12 * body + k
    }

    /// Index of a soft vertex in the stacked `x`.
    pub fn soft_vertex(&self, body: usize, v: usize) -> usize {
        self.soft_offsets[body] + v
    }

    pub fn soft_vertex_range(&self, body: usize) -> std::ops::Range<usize> {
        self.soft_offsets[body]..self.soft_offsets[body + 1]
    }

    pub fn soft_dof(&self, body: usize, v: usize, k: usize) -> usize {
        self.num_affine_dofs() + 3 * self.soft_vertex(body, v) + k
    }

    /// DoFs held at their current values.
    pub fn fixed_dofs(&self) -> Vec<bool> {
        let mut fixed = vec![false; self.num_dofs()];
        for (i, a) in self.affine.iter().enumerate() {
            if a.fixed {
                fixed[12 * i..12 * i + 12].fill(true);
            }
        }
        fixed
    }

    /// Diagonal of the (reduced) mass matrix.
    pub fn mass_diagonal(&self) -> Vec<f64> {
        let mut d = Vec::with_capacity(self.num_dofs());
        for a in &self.affine {
            d.extend((0..12).map(|k| a.body.reduced_mass[(k, k)]));
        }
        for s in &self.soft {
            d.extend(s.masses.iter().flat_map(|&m| [m, m, m]));
        }
        d
    }

    pub fn collision_positions(&self, y: &[f64], x: &[Vector3<f64>]) -> Vec<Vector3<f64>> {
        let states: Vec<AffineState> = (0..self.affine.len())
            .map(|b| AffineState::from_slice(&y[12 * b..12 * b + 12]))
            .collect();
        self.collision_vertices
            .iter()
            .map(|cv| match *cv {
                CollisionVertex::Affine { body, rest } => states[body].embed_point(&rest),
                CollisionVertex::Soft { body, vertex } => x[self.soft_vertex(body, vertex)],
            })
            .collect()
    }

    pub fn collision_positions_z(&self, z: &[f64]) -> Vec<Vector3<f64>> {
        let (y, x) = split_z(z, self.num_affine_dofs());
        self.collision_positions(&y, &x)
    }

    /// World positions of one affine body's surface vertices.
    pub fn affine_vertices(&self, state: &SystemState, body: usize) -> Vec<Vector3<f64>> {
        crate::abd::embed(
            &state.affine_state(body),
            self.affine[body].body.rest_vertices(),
        )
    }

    pub fn soft_positions<'a>(&self, state: &'a SystemState, body: usize) -> &'a [Vector3<f64>] {
        &state.x[self.soft_vertex_range(body)]
    }

    /// State at rest with the given affine poses and soft vertex positions,
    /// zero velocity.
    pub fn initial_state(
        &self,
        affine: &[AffineState],
        soft: &[Vec<Vector3<f64>>],
    ) -> Result<SystemState> {
        if affine.len() != self.affine.len() || soft.len() != self.soft.len() {
            return Err(Error::InvalidState(
                "initial state does not match scene bodies".into(),
            ));
        }
        let y: Vec<f64> = affine
            .iter()
            .flat_map(|s| s.to_vec().iter().copied().collect::<Vec<_>>())
            .collect();
        let mut x = Vec::with_capacity(self.num_soft_vertices());
        for (b, p) in soft.iter().enumerate() {
            if p.len() != self.soft[b].tet.num_vertices() {
                return Err(Error::InvalidState(format!(
                    "soft body {b}: wrong vertex count"
                )));
            }
            x.extend_from_slice(p);
        }
        Ok(SystemState {
            v_y: vec![0.0; y.len()],
            v_x: vec![Vector3::zeros(); x.len()],
            y,
            x,
            time: 0.0,
            step: 0,
        })
    }

    /// Fails with the offending primitives if any pair touches or crosses.
    pub fn check_intersection_free(&self, state: &SystemState, dhat: f64) -> Result<()> {
        let pos = self.collision_positions(&state.y, &state.x);
        let mut offending: Vec<String> = find_intersections(&self.collision, &pos)
            .into_iter()
            .map(|(e, f)| format!("edge {e} crosses face {f}"))
            .collect();
        for p in build_candidates(&self.collision, &pos, dhat)? {
            if !(p.distance > 0.0) {
                let kind = match p.kind {
                    PairKind::PointTriangle => "vertex/face",
                    PairKind::EdgeEdge => "edge/edge",
                };
                offending.push(format!("{kind} {:?} at zero distance", p.indices));
            }
        }
        if offending.is_empty() {
            Ok(())
        } else {
            Err(Error::InitialIntersection { pairs: offending })
        }
    }
}
