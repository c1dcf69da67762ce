//! Affine body reduction: 12 DoFs per stiff body (translation `t` and linear
//! map `A`, packed as `[t; row-major A]`) embedding surface vertices as
//! `x = A x_bar + t`.

use nalgebra::{DMatrix, Isometry3, Matrix3, SMatrix, SVector, Vector3};
use serde::{Deserialize, Serialize};

use crate::energy::{project_psd, EnergyReport};
use crate::math::rotation_matrix;
use crate::mesh::TriMesh;
use crate::{Error, Result};

/// Default ARAP stiffness (Pa).
pub const DEFAULT_ARAP_STIFFNESS: f64 = 1e8;

pub type Vec12 = SVector<f64, 12>;
pub type Mat12 = SMatrix<f64, 12, 12>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AffineState {
    pub t: Vector3<f64>,
    pub a: Matrix3<f64>,
}

impl AffineState {
    pub fn identity() -> Self {
        Self {
            t: Vector3::zeros(),
            a: Matrix3::identity(),
        }
    }

    pub fn from_isometry(iso: &Isometry3<f64>) -> Self {
        Self {
            t: iso.translation.vector,
            a: rotation_matrix(iso),
        }
    }

    pub fn to_vec(&self) -> Vec12 {
        let mut y = Vec12::zeros();
        y.fixed_rows_mut::<3>(0).copy_from(&self.t);
        for i in 0..3 {
            for j in 0..3 {
                y[3 + 3 * i + j] = self.a[(i, j)];
            }
        }
        y
    }

    pub fn from_slice(y: &[f64]) -> Self {
        assert!(y.len() >= 12);
        Self {
            t: Vector3::new(y[0], y[1], y[2]),
            a: Matrix3::from_fn(|i, j| y[3 + 3 * i + j]),
        }
    }

    pub fn embed_point(&self, rest: &Vector3<f64>) -> Vector3<f64> {
        self.a * rest + self.t
    }
}

/// World positions of `rest` vertices under `y`.
pub fn embed(y: &AffineState, rest: &[Vector3<f64>]) -> Vec<Vector3<f64>> {
    rest.iter().map(|p| y.embed_point(p)).collect()
}

/// The 3x12 Jacobian block of one embedded vertex.
pub fn jacobian_block(rest: &Vector3<f64>) -> SMatrix<f64, 3, 12> {
    let mut j = SMatrix::<f64, 3, 12>::zeros();
    for i in 0..3 {
        j[(i, i)] = 1.0;
        for k in 0..3 {
            j[(i, 3 + 3 * i + k)] = rest[k];
        }
    }
    j
}

/// Full `3N x 12` embedding Jacobian.
pub fn jacobian(rest: &[Vector3<f64>]) -> DMatrix<f64> {
    let mut j = DMatrix::zeros(3 * rest.len(), 12);
    for (v, p) in rest.iter().enumerate() {
        j.view_mut((3 * v, 0), (3, 12))
            .copy_from(&jacobian_block(p));
    }
    j
}

/// `sum_v m_v J_v^T J_v`.
pub fn reduced_mass(rest: &[Vector3<f64>], masses: &[f64]) -> Mat12 {
    let mut m = Mat12::zeros();
    for (p, &w) in rest.iter().zip(masses) {
        let j = jacobian_block(p);
        m += j.transpose() * j * w;
    }
    m
}

/// Surface-lumped vertex masses scaled to `total_mass`.
pub fn surface_vertex_masses(mesh: &TriMesh, total_mass: f64) -> Vec<f64> {
    let areas = mesh.vertex_areas();
    let total: f64 = areas.iter().sum();
    areas.iter().map(|a| total_mass * a / total).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MassSpec {
    /// kg/m^3, multiplied by the enclosed volume.
    Density(f64),
    /// kg
    Mass(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct AffineBody {
    /// Surface in the body frame; its vertices are the rest positions.
    pub surface: TriMesh,
    pub vertex_masses: Vec<f64>,
    pub mass: f64,
    /// Enclosed volume (m^3), weighting the ARAP energy.
    pub volume: f64,
    pub reduced_mass: Mat12,
    pub arap_stiffness: f64,
}

impl AffineBody {
    pub fn new(surface: TriMesh, mass: MassSpec, arap_stiffness: f64) -> Result<Self> {
        let volume = surface.enclosed_volume();
        if !(volume > 0.0) {
            return Err(Error::InvalidMesh(format!(
                "affine body surface must be closed and outward oriented (volume {volume:e})"
            )));
        }
        if !(arap_stiffness > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "ARAP stiffness must be positive, got {arap_stiffness}"
            )));
        }
        let mass = match mass {
            MassSpec::Density(rho) if rho > 0.0 => rho * volume,
            MassSpec::Mass(m) if m > 0.0 => m,
            other => {
                return Err(Error::InvalidParameter(format!(
                    "mass must be positive: {other:?}"
                )))
            }
        };
        let vertex_masses = surface_vertex_masses(&surface, mass);
        let reduced_mass = reduced_mass(&surface.vertices, &vertex_masses);
        Ok(Self {
            surface,
            vertex_masses,
            mass,
            volume,
            reduced_mass,
            arap_stiffness,
        })
    }

    pub fn rest_vertices(&self) -> &[Vector3<f64>] {
        &self.surface.vertices
    }

    /// Constant reduced gravity force `J^T (m g)`; the potential is
    /// `-force . y`.
    pub fn gravity_force(&self, g: &Vector3<f64>) -> Vec12 {
        let mut f = Vec12::zeros();
        for (p, &m) in self.rest_vertices().iter().zip(&self.vertex_masses) {
            f += jacobian_block(p).transpose() * (g * m);
        }
        f
    }
}

/// `kappa_s V / 2 |A^T A - I|_F^2` with analytic gradient and Hessian
/// (optionally PSD-projected) over the 12 affine DoFs.
pub fn arap_energy(
    y: &AffineState,
    kappa_s: f64,
    volume: f64,
    project: bool,
) -> (f64, Vec12, Mat12) {
    let a = y.a;
    let c = a.transpose() * a - Matrix3::identity();
    let w = kappa_s * volume;
    let value = 0.5 * w * c.norm_squared();
    let ga = a * c * (2.0 * w);
    let mut g = Vec12::zeros();
    for i in 0..3 {
        for j in 0..3 {
            g[3 + 3 * i + j] = ga[(i, j)];
        }
    }
    let mut h9 = SMatrix::<f64, 9, 9>::zeros();
    for k in 0..3 {
        for l in 0..3 {
            let mut da = Matrix3::zeros();
            da[(k, l)] = 1.0;
            let dg = (da * c + a * (da.transpose() * a + a.transpose() * da)) * (2.0 * w);
            for i in 0..3 {
                for j in 0..3 {
                    h9[(3 * i + j, 3 * k + l)] = dg[(i, j)];
                }
            }
        }
    }
    let h9 = if project { project_psd(&h9) } else { h9 };
    let mut h = Mat12::zeros();
    h.fixed_view_mut::<9, 9>(3, 3).copy_from(&h9);
    (value, g, h)
}

/// `1/2 (y - y_hat)^T M^y (y - y_hat)`.
pub fn affine_inertia(y: &Vec12, y_hat: &Vec12, reduced_mass: &Mat12) -> (f64, Vec12, Mat12) {
    let e = y - y_hat;
    let g = reduced_mass * e;
    (0.5 * e.dot(&g), g, *reduced_mass)
}

/// ARAP energy as a 12-DoF report.
pub fn arap_report(y: &AffineState, kappa_s: f64, volume: f64, project: bool) -> EnergyReport {
    let (v, g, h) = arap_energy(y, kappa_s, volume, project);
    let mut r = EnergyReport::zero(12);
    r.add_local(&std::array::from_fn::<usize, 12, _>(|i| i), v, &g, &h);
    r
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::primitives::box_tri_mesh;
    use nalgebra::Rotation3;

    #[test]
    fn identity_embedding() {
        let rest = vec![Vector3::new(0.1, 0.2, 0.3), Vector3::new(-1.0, 0.0, 2.0)];
        assert_eq!(embed(&AffineState::identity(), &rest), rest);
        let y = AffineState {
            t: Vector3::x(),
            ..AffineState::identity()
        };
        let moved = embed(&y, &rest);
        assert_eq!(moved[1], Vector3::new(0.0, 0.0, 2.0));
    }

    #[test]
    fn jacobian_reproduces_embedding() {
        let rest = vec![Vector3::zeros(), Vector3::new(0.3, -0.2, 0.5)];
        let j = jacobian(&rest);
        let id = AffineState::identity().to_vec();
        let x = &j * DMatrix::from_column_slice(12, 1, id.as_slice());
        assert!((x[(3, 0)] - 0.3).abs() < 1e-15 && (x[(5, 0)] - 0.5).abs() < 1e-15);
        // a vertex at the origin sees only the translation columns
        for c in 3..12 {
            for r in 0..3 {
                assert_eq!(j[(r, c)], 0.0);
            }
        }
    }

    #[test]
    fn translation_block_is_total_mass() {
        let body = AffineBody::new(
            box_tri_mesh(Vector3::new(0.1, 0.2, 0.3)).unwrap(),
            MassSpec::Density(500.0),
            DEFAULT_ARAP_STIFFNESS,
        )
        .unwrap();
        assert!((body.mass - 500.0 * 0.006).abs() < 1e-12);
        let tr = body.reduced_mass[(0, 0)] + body.reduced_mass[(1, 1)] + body.reduced_mass[(2, 2)];
        assert!((tr - 3.0 * body.mass).abs() < 1e-12);
        assert!(body.reduced_mass.cholesky().is_some());
    }

    #[test]
    fn arap_vanishes_on_rotations() {
        let r = Rotation3::from_axis_angle(&Vector3::z_axis(), 30f64.to_radians());
        let y = AffineState {
            t: Vector3::new(1.0, 2.0, 3.0),
            a: *r.matrix(),
        };
        let (v, g, _) = arap_energy(&y, 1e8, 1e-3, true);
        assert!(v.abs() < 1e-12);
        assert!(g.norm() < 1e-6);
        assert_eq!(arap_energy(&AffineState::identity(), 1e8, 1.0, true).0, 0.0);
    }

    #[test]
    fn arap_stretch_closed_form() {
        let e = 0.01;
        let y = AffineState {
            t: Vector3::zeros(),
            a: Matrix3::from_diagonal(&Vector3::new(1.0 + e, 1.0, 1.0)),
        };
        let (v, _, _) = arap_energy(&y, 2.0, 3.0, true);
        let c = (1.0 + e) * (1.0 + e) - 1.0;
        assert!((v - 0.5 * 2.0 * 3.0 * c * c).abs() < 1e-15);
    }
}
