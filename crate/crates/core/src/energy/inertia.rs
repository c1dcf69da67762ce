use nalgebra::Vector3;

use super::EnergyReport;
use crate::{Error, Result};

/// `1/2 (x - x_hat)^T M (x - x_hat)` with `x_hat = x_prev + dt v_prev` and
/// diagonal per-vertex masses.
pub fn inertia_ip(
    x: &[Vector3<f64>],
    x_prev: &[Vector3<f64>],
    v_prev: &[Vector3<f64>],
    masses: &[f64],
    dt: f64,
) -> Result<EnergyReport> {
    if !(dt > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "dt must be positive, got {dt}"
        )));
    }
    let n = x.len();
    if x_prev.len() != n || v_prev.len() != n || masses.len() != n {
        return Err(Error::InvalidState(
            "inertia inputs differ in length".into(),
        ));
    }
    let mut r = EnergyReport::zero(3 * n);
    for i in 0..n {
        let e = x[i] - (x_prev[i] + v_prev[i] * dt);
        r.value += 0.5 * masses[i] * e.norm_squared();
        for k in 0..3 {
            r.gradient[3 * i + k] = masses[i] * e[k];
            r.hessian.add(3 * i + k, 3 * i + k, masses[i]);
        }
    }
    Ok(r)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_at_predicted_position() {
        let xp = vec![Vector3::new(1.0, 2.0, 3.0)];
        let v = vec![Vector3::new(0.5, 0.0, -1.0)];
        let x = vec![xp[0] + v[0] * 0.01];
        let r = inertia_ip(&x, &xp, &v, &[2.0], 0.01).unwrap();
        assert!(r.value.abs() < 1e-24);
        assert!(r.gradient.iter().all(|g| g.abs() < 1e-12));
    }

    #[test]
    fn unit_offset_gives_half_mass() {
        let xp = vec![Vector3::zeros()];
        let v = vec![Vector3::zeros()];
        let r = inertia_ip(&[Vector3::x()], &xp, &v, &[3.0], 0.1).unwrap();
        assert_eq!(r.value, 1.5);
    }
}
