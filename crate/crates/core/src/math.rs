//! Small geometric helpers shared across modules.

use nalgebra::{Isometry3, Matrix3, Matrix3x2, Translation3, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

/// Rigid placement given as translation plus roll/pitch/yaw (URDF convention,
/// `R = Rz(yaw) * Ry(pitch) * Rx(roll)`).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Pose {
    #[serde(default)]
    pub xyz: [f64; 3],
    #[serde(default)]
    pub rpy: [f64; 3],
}

impl Pose {
    pub fn new(xyz: [f64; 3], rpy: [f64; 3]) -> Self {
        Self { xyz, rpy }
    }

    pub fn translation(xyz: [f64; 3]) -> Self {
        Self { xyz, rpy: [0.0; 3] }
    }

    pub fn to_isometry(&self) -> Isometry3<f64> {
        Isometry3::from_parts(
            Translation3::new(self.xyz[0], self.xyz[1], self.xyz[2]),
            UnitQuaternion::from_euler_angles(self.rpy[0], self.rpy[1], self.rpy[2]),
        )
    }
}

/// Rotation matrix of an isometry, rebuilt from the quaternion.
pub fn rotation_matrix(iso: &Isometry3<f64>) -> Matrix3<f64> {
    iso.rotation.to_rotation_matrix().into_inner()
}

/// Two unit vectors completing `n` to a right-handed orthonormal frame.
pub fn tangent_basis(n: &Vector3<f64>) -> Matrix3x2<f64> {
    let n = n.normalize();
    // pick the coordinate axis least aligned with n
    let axis = if n.x.abs() <= n.y.abs() && n.x.abs() <= n.z.abs() {
        Vector3::x()
    } else if n.y.abs() <= n.z.abs() {
        Vector3::y()
    } else {
        Vector3::z()
    };
    let t1 = n.cross(&axis).normalize();
    let t2 = n.cross(&t1);
    Matrix3x2::from_columns(&[t1, t2])
}

pub(crate) fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tangent_basis_is_orthonormal() {
        for n in [
            Vector3::new(0.0, 0.0, 1.0),
            Vector3::new(1.0, 2.0, -3.0),
            Vector3::new(-1e-3, 1.0, 1e-3),
        ] {
            let b = tangent_basis(&n);
            let nn = n.normalize();
            let (t1, t2) = (b.column(0), b.column(1));
            assert!((t1.norm() - 1.0).abs() < 1e-12);
            assert!((t2.norm() - 1.0).abs() < 1e-12);
            assert!(t1.dot(&t2).abs() < 1e-12);
            assert!(t1.dot(&nn).abs() < 1e-12);
            assert!(t2.dot(&nn).abs() < 1e-12);
        }
    }

    #[test]
    fn rpy_follows_zyx_convention() {
        let p = Pose::new([0.0; 3], [0.0, 0.0, std::f64::consts::FRAC_PI_2]);
        let r = rotation_matrix(&p.to_isometry());
        let x = r * Vector3::x();
        assert!((x - Vector3::y()).norm() < 1e-12);
    }
}
