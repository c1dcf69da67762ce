//! Stable Neo-Hookean elasticity on linear tetrahedra.

use nalgebra::{Matrix3, SMatrix, SVector, Vector3};

use super::{project_psd, vertex_dofs, EnergyReport, MaterialParams};
use crate::mesh::TetMesh;
use crate::{Error, Result};

type Mat9 = SMatrix<f64, 9, 9>;

/// `mu/2 (tr F^T F - 3) - mu ln J + lambda/2 (ln J)^2`, or `None` for
/// inverted or degenerate `F`.
pub fn neo_hookean_density(f: &Matrix3<f64>, mu: f64, lambda: f64) -> Option<f64> {
    let j = f.determinant();
    if !(j > 0.0) {
        return None;
    }
    let lj = j.ln();
    Some(0.5 * mu * (f.norm_squared() - 3.0) - mu * lj + 0.5 * lambda * lj * lj)
}

/// First Piola stress and the 9x9 derivative dP/dF (row-major flattening
/// `3 i + j`).
fn stress_and_tangent(f: &Matrix3<f64>, mu: f64, lambda: f64) -> Option<(Matrix3<f64>, Mat9)> {
    let j = f.determinant();
    if !(j > 0.0) {
        return None;
    }
    let lj = j.ln();
    let g = f.try_inverse()?.transpose();
    let p = (f - g) * mu + g * (lambda * lj);
    let c = mu - lambda * lj;
    let mut h = Mat9::zeros();
    for i in 0..3 {
        for jj in 0..3 {
            for k in 0..3 {
                for l in 0..3 {
                    let mut v = c * g[(i, l)] * g[(k, jj)] + lambda * g[(i, jj)] * g[(k, l)];
                    if i == k && jj == l {
                        v += mu;
                    }
                    h[(3 * i + jj, 3 * k + l)] = v;
                }
            }
        }
    }
    Some((p, h))
}

/// dP/dF with negative eigenvalues clamped, built from the closed-form
/// eigensystem of an isotropic energy in the singular values of `F`.
fn projected_tangent(f: &Matrix3<f64>, mu: f64, lambda: f64) -> Option<Mat9> {
    let svd = f.svd(true, true);
    let (u, vt) = (svd.u?, svd.v_t?);
    let s = svd.singular_values;
    let lj = f.determinant().ln();
    if !lj.is_finite() || s.iter().any(|&x| !(x > 0.0)) {
        return None;
    }
    let mut h = Mat9::zeros();
    let mut add_mode = |eigenvalue: f64, d: &Matrix3<f64>| {
        if eigenvalue <= 0.0 {
            return;
        }
        let q = u * d * vt;
        let q = SVector::<f64, 9>::from_fn(|k, _| q[(k / 3, k % 3)]);
        h += q * q.transpose() * eigenvalue;
    };
    // scaling modes
    let a = Matrix3::from_fn(|i, j| {
        if i == j {
            mu + (mu + lambda - lambda * lj) / (s[i] * s[i])
        } else {
            lambda / (s[i] * s[j])
        }
    });
    let eig = a.symmetric_eigen();
    for k in 0..3 {
        add_mode(
            eig.eigenvalues[k],
            &Matrix3::from_diagonal(&eig.eigenvectors.column(k).into_owned()),
        );
    }
    // twist and flip modes of each singular value pair
    let r = std::f64::consts::FRAC_1_SQRT_2;
    for (i, j) in [(0, 1), (0, 2), (1, 2)] {
        let ss = s[i] * s[j];
        let mut twist = Matrix3::zeros();
        twist[(i, j)] = r;
        twist[(j, i)] = -r;
        add_mode(mu + (lambda * lj - mu) / ss, &twist);
        let mut flip = Matrix3::zeros();
        flip[(i, j)] = r;
        flip[(j, i)] = r;
        add_mode(mu + (mu - lambda * lj) / ss, &flip);
    }
    Some(h)
}

/// Energy, gradient and (optionally PSD-projected) Hessian of one tet over
/// its 12 vertex coordinates.
pub fn neo_hookean_element(
    x: &[Vector3<f64>; 4],
    inv_rest: &Matrix3<f64>,
    rest_volume: f64,
    mu: f64,
    lambda: f64,
    project: bool,
) -> Option<(f64, SVector<f64, 12>, SMatrix<f64, 12, 12>)> {
    let ds = Matrix3::from_columns(&[x[1] - x[0], x[2] - x[0], x[3] - x[0]]);
    let f = ds * inv_rest;
    let psi = neo_hookean_density(&f, mu, lambda)?;
    let (p, mut h9) = stress_and_tangent(&f, mu, lambda)?;
    if project {
        h9 = projected_tangent(&f, mu, lambda).unwrap_or_else(|| project_psd(&h9));
    }
    // dF_ij / dx_{a,k} = delta_ik gr[a][j]
    let mut gr = [Vector3::zeros(); 4];
    for (a, g) in gr.iter_mut().enumerate().skip(1) {
        *g = inv_rest.row(a - 1).transpose();
    }
    gr[0] = -(gr[1] + gr[2] + gr[3]);
    let mut grad = SVector::<f64, 12>::zeros();
    for a in 0..4 {
        let ga = p * gr[a];
        for k in 0..3 {
            grad[3 * a + k] = rest_volume * ga[k];
        }
    }
    let mut hess = SMatrix::<f64, 12, 12>::zeros();
    for a in 0..4 {
        for b in 0..4 {
            for k in 0..3 {
                for l in 0..3 {
                    let mut s = 0.0;
                    for jj in 0..3 {
                        for m in 0..3 {
                            s += h9[(3 * k + jj, 3 * l + m)] * gr[a][jj] * gr[b][m];
                        }
                    }
                    hess[(3 * a + k, 3 * b + l)] = rest_volume * s;
                }
            }
        }
    }
    Some((rest_volume * psi, grad, hess))
}

/// Total elastic energy of `tet` at positions `x`, Hessian optionally
/// projected per tet.
pub fn neo_hookean(
    tet: &TetMesh,
    x: &[Vector3<f64>],
    params: &MaterialParams,
    project: bool,
) -> Result<EnergyReport> {
    if x.len() != tet.num_vertices() {
        return Err(Error::InvalidState(format!(
            "{} positions for {} tet vertices",
            x.len(),
            tet.num_vertices()
        )));
    }
    let (mu, lambda) = params.lame();
    let mut r = EnergyReport::zero(3 * x.len());
    for (i, t) in tet.tets.iter().enumerate() {
        let xs = t.map(|v| x[v]);
        if xs.iter().any(|p| !p.iter().all(|c| c.is_finite())) {
            return Err(Error::NonFinite(format!("vertex of tet {i}")));
        }
        let (e, g, h) = neo_hookean_element(
            &xs,
            &tet.inv_rest_shape[i],
            tet.rest_volumes[i],
            mu,
            lambda,
            project,
        )
        .ok_or_else(|| {
            let ds = Matrix3::from_columns(&[xs[1] - xs[0], xs[2] - xs[0], xs[3] - xs[0]]);
            Error::InvertedElement {
                tet: i,
                det: (ds * tet.inv_rest_shape[i]).determinant(),
            }
        })?;
        r.add_local(&vertex_dofs(t), e, &g, &h);
    }
    Ok(r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::primitives::five_tet_cube;
    use rand::{Rng, SeedableRng};

    fn material() -> MaterialParams {
        MaterialParams {
            youngs_modulus: 1e5,
            poisson_ratio: 0.4,
            density: 1000.0,
        }
    }

    #[test]
    fn rest_state_is_stress_free() {
        let tet = five_tet_cube(0.01).unwrap();
        let r = neo_hookean(&tet, &tet.vertices, &material(), true).unwrap();
        assert!(r.value.abs() < 1e-15);
        assert!(r.gradient.iter().all(|g| g.abs() < 1e-9));
    }

    #[test]
    fn rotation_costs_nothing() {
        let tet = five_tet_cube(0.01).unwrap();
        let rot = nalgebra::Rotation3::from_euler_angles(0.3, -0.7, 1.1);
        let x: Vec<_> = tet.vertices.iter().map(|v| rot * v).collect();
        let r = neo_hookean(&tet, &x, &material(), true).unwrap();
        assert!(r.value.abs() < 1e-12);
    }

    #[test]
    fn stretch_energy_is_monotone() {
        let tet = five_tet_cube(0.01).unwrap();
        let mut last = -1.0;
        for i in 0..=50 {
            let s = 1.0 + 0.5 * i as f64 / 50.0;
            let x: Vec<_> = tet
                .vertices
                .iter()
                .map(|v| Vector3::new(v.x * s, v.y, v.z))
                .collect();
            let e = neo_hookean(&tet, &x, &material(), true).unwrap().value;
            assert!(e > last || (i == 0 && e.abs() < 1e-15));
            last = e;
        }
    }

    #[test]
    fn closed_form_projection_matches_eigen_clamping() {
        let (mu, lambda) = material().lame();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for _ in 0..200 {
            let f = Matrix3::identity() + Matrix3::from_fn(|_, _| rng.gen_range(-0.6..0.6));
            if f.determinant() < 0.05 {
                continue;
            }
            let (_, h) = stress_and_tangent(&f, mu, lambda).unwrap();
            let expected = project_psd(&h);
            let got = projected_tangent(&f, mu, lambda).unwrap();
            let scale = expected.norm();
            assert!((got - expected).norm() < 1e-9 * scale, "F = {f}");
        }
    }

    #[test]
    fn inverted_element_is_rejected() {
        let tet = five_tet_cube(0.01).unwrap();
        let x: Vec<_> = tet
            .vertices
            .iter()
            .map(|v| Vector3::new(-v.x, v.y, v.z))
            .collect();
        assert!(matches!(
            neo_hookean(&tet, &x, &material(), true),
            Err(Error::InvertedElement { .. })
        ));
    }
}
