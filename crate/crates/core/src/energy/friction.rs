//! Smoothed Coulomb friction with normal force and tangent frame lagged from
//! the start of the step.

use nalgebra::{Matrix2, SMatrix, SVector, Vector2, Vector3};

use super::{barrier, vertex_dofs, EnergyReport};
use crate::contact::ContactPair;
use crate::Result;

/// Smoothed friction magnitude profile: `-y^2/eps^2 + 2y/eps` below `eps`, 1 above.
pub fn f1(y: f64, eps: f64) -> f64 {
    if y < eps {
        -y * y / (eps * eps) + 2.0 * y / eps
    } else {
        1.0
    }
}

/// `f1(y) / y`, finite at `y = 0`.
pub fn f1_over_y(y: f64, eps: f64) -> f64 {
    if y < eps {
        -y / (eps * eps) + 2.0 / eps
    } else {
        1.0 / y
    }
}

fn f1_prime(y: f64, eps: f64) -> f64 {
    if y < eps {
        -2.0 * y / (eps * eps) + 2.0 / eps
    } else {
        0.0
    }
}

/// `f0(y) = int_eps^y f1 + eps`, so that `f0(y) = y` above `eps`.
pub fn f0(y: f64, eps: f64) -> f64 {
    if y < eps {
        -y * y * y / (3.0 * eps * eps) + y * y / eps + eps / 3.0
    } else {
        y
    }
}

/// Freeze the normal force `kappa A_k (-b'(d_k))` of every pair at its
/// current geometry.
pub fn lag_friction(pairs: &mut [ContactPair], dhat: f64, kappa: f64) -> Result<()> {
    for p in pairs {
        let (_, b1, _) = barrier(p.distance, dhat)?;
        p.lagged_normal_force = -kappa * p.area_weight * b1;
    }
    Ok(())
}

/// Tangential relative displacement `u = T^T sum_i w_i (x_i - x_prev_i)`.
pub fn relative_tangent_disp(
    pair: &ContactPair,
    x: &[Vector3<f64>],
    x_prev: &[Vector3<f64>],
) -> Vector2<f64> {
    let r: Vector3<f64> = (0..4)
        .map(|i| {
            let v = pair.vertices[i];
            (x[v] - x_prev[v]) * pair.closest_weights[i]
        })
        .sum();
    pair.tangent_basis.transpose() * r
}

/// `mu lambda f0(|u|)` of one pair; the Hessian is PSD by construction.
pub fn friction_pair(
    pair: &ContactPair,
    x: &[Vector3<f64>],
    x_prev: &[Vector3<f64>],
    mu: f64,
    eps: f64,
) -> (f64, SVector<f64, 12>, SMatrix<f64, 12, 12>) {
    let scale = mu * pair.lagged_normal_force;
    let u = relative_tangent_disp(pair, x, x_prev);
    let y = u.norm();
    let value = scale * f0(y, eps);
    let gu = u * (scale * f1_over_y(y, eps));
    let hu = if y > 0.0 {
        let uh = u / y;
        let uu = uh * uh.transpose();
        (uu * f1_prime(y, eps) + (Matrix2::identity() - uu) * f1_over_y(y, eps)) * scale
    } else {
        Matrix2::identity() * (scale * 2.0 / eps)
    };
    let t = pair.tangent_basis;
    let g3 = t * gu;
    let h3 = t * hu * t.transpose();
    let w = pair.closest_weights;
    let mut g = SVector::<f64, 12>::zeros();
    let mut h = SMatrix::<f64, 12, 12>::zeros();
    for i in 0..4 {
        g.fixed_rows_mut::<3>(3 * i).copy_from(&(g3 * w[i]));
        for j in 0..4 {
            h.fixed_view_mut::<3, 3>(3 * i, 3 * j)
                .copy_from(&(h3 * (w[i] * w[j])));
        }
    }
    (value, g, h)
}

/// Sum of lagged friction potentials over the collision-vertex coordinates.
/// `eps_v * dt` is the displacement below which friction is smoothed.
pub fn friction_total(
    pairs: &[ContactPair],
    x: &[Vector3<f64>],
    x_prev: &[Vector3<f64>],
    mu: f64,
    eps_v: f64,
    dt: f64,
) -> EnergyReport {
    let eps = eps_v * dt;
    let mut r = EnergyReport::zero(3 * x.len());
    if mu == 0.0 {
        return r;
    }
    for pair in pairs {
        if pair.lagged_normal_force == 0.0 {
            continue;
        }
        let (e, g, h) = friction_pair(pair, x, x_prev, mu, eps);
        r.add_local(&vertex_dofs(&pair.vertices), e, &g, &h);
    }
    r
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn f1_is_continuous_at_threshold() {
        let eps = 1e-5;
        let left = -1.0 + 2.0;
        assert_eq!(left, 1.0);
        assert!((f1(eps * (1.0 - 1e-12), eps) - f1(eps, eps)).abs() < 1e-11);
        assert_eq!(f1(0.0, eps), 0.0);
        assert!((f0(eps * (1.0 - 1e-12), eps) - f0(eps, eps)).abs() < 1e-15);
    }

    #[test]
    fn f0_derivative_is_f1() {
        let eps = 1e-3;
        for y in [1e-4, 5e-4, 9e-4, 2e-3] {
            let h = 1e-9;
            let fd = (f0(y + h, eps) - f0(y - h, eps)) / (2.0 * h);
            assert!((fd - f1(y, eps)).abs() < 1e-6);
        }
    }
}
