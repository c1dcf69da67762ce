//! Energy terms of the barrier-augmented incremental potential, each with an
//! analytic gradient and a positive-semidefinite projected Hessian.

mod barrier;
mod friction;
mod gravity;
mod inertia;
mod neo_hookean;

use nalgebra::{DMatrix, SMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub use barrier::{barrier, barrier_pair, barrier_pair_value, barrier_total};
pub use friction::{
    f0, f1, f1_over_y, friction_pair, friction_total, lag_friction, relative_tangent_disp,
};
pub use gravity::gravity;
pub use inertia::inertia_ip;
pub use neo_hookean::{neo_hookean, neo_hookean_density, neo_hookean_element};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaterialParams {
    /// Young's modulus (Pa).
    pub youngs_modulus: f64,
    pub poisson_ratio: f64,
    /// kg/m^3
    pub density: f64,
}

impl MaterialParams {
    pub fn validate(&self) -> Result<()> {
        let ok = self.youngs_modulus > 0.0
            && self.youngs_modulus.is_finite()
            && self.poisson_ratio > -1.0
            && self.poisson_ratio < 0.5
            && self.density > 0.0
            && self.density.is_finite();
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!(
                "invalid material {self:?}"
            )))
        }
    }

    /// Lamé parameters `(mu, lambda)`.
    pub fn lame(&self) -> (f64, f64) {
        let (e, nu) = (self.youngs_modulus, self.poisson_ratio);
        (
            e / (2.0 * (1.0 + nu)),
            e * nu / ((1.0 + nu) * (1.0 - 2.0 * nu)),
        )
    }
}

/// Symmetric sparse matrix stored as unsorted triplets (both triangles,
/// duplicates summed).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SparseSym {
    pub n: usize,
    pub entries: Vec<(usize, usize, f64)>,
}

impl SparseSym {
    pub fn new(n: usize) -> Self {
        Self {
            n,
            entries: Vec::new(),
        }
    }

    pub fn add(&mut self, r: usize, c: usize, v: f64) {
        debug_assert!(r < self.n && c < self.n);
        if v != 0.0 {
            self.entries.push((r, c, v));
        }
    }

    /// Add a dense block at rows/columns `idx`.
    pub fn add_block<const K: usize>(&mut self, idx: &[usize; K], m: &SMatrix<f64, K, K>) {
        for i in 0..K {
            for j in 0..K {
                self.add(idx[i], idx[j], m[(i, j)]);
            }
        }
    }

    pub fn extend(&mut self, other: &SparseSym) {
        assert_eq!(self.n, other.n);
        self.entries.extend_from_slice(&other.entries);
    }

    pub fn scale(&mut self, s: f64) {
        for e in &mut self.entries {
            e.2 *= s;
        }
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        for &(r, c, v) in &self.entries {
            y[r] += v * x[c];
        }
        y
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.n, self.n);
        for &(r, c, v) in &self.entries {
            m[(r, c)] += v;
        }
        m
    }

    pub fn diagonal(&self) -> Vec<f64> {
        let mut d = vec![0.0; self.n];
        for &(r, c, v) in &self.entries {
            if r == c {
                d[r] += v;
            }
        }
        d
    }
}

/// Scalar energy with gradient and Hessian over a fixed DoF vector.
#[derive(Debug, Clone, PartialEq)]
pub struct EnergyReport {
    pub value: f64,
    pub gradient: Vec<f64>,
    pub hessian: SparseSym,
}

impl EnergyReport {
    pub fn zero(n: usize) -> Self {
        Self {
            value: 0.0,
            gradient: vec![0.0; n],
            hessian: SparseSym::new(n),
        }
    }

    pub fn len(&self) -> usize {
        self.gradient.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gradient.is_empty()
    }

    /// Accumulate an element contribution on DoFs `idx`.
    pub fn add_local<const K: usize>(
        &mut self,
        idx: &[usize; K],
        value: f64,
        g: &SMatrix<f64, K, 1>,
        h: &SMatrix<f64, K, K>,
    ) {
        self.value += value;
        for i in 0..K {
            self.gradient[idx[i]] += g[i];
        }
        self.hessian.add_block(idx, h);
    }

    pub fn add(&mut self, other: &EnergyReport) {
        assert_eq!(self.len(), other.len());
        self.value += other.value;
        for (a, b) in self.gradient.iter_mut().zip(&other.gradient) {
            *a += b;
        }
        self.hessian.extend(&other.hessian);
    }
}

/// Square blocks with a PSD projection.
pub trait ProjectPsd: Sized {
    fn project_psd(&self) -> Self;
}

macro_rules! impl_project_psd {
    ($($k:literal),*) => {$(
        impl ProjectPsd for SMatrix<f64, $k, $k> {
            fn project_psd(&self) -> Self {
                let sym = (self + self.transpose()) * 0.5;
                // positive definite blocks skip the eigensolve
                if sym.cholesky().is_some() {
                    return sym;
                }
                let eig = SymmetricEigen::new(sym);
                if eig.eigenvalues.iter().all(|&l| l >= 0.0) {
                    return sym;
                }
                let mut p = Self::zeros();
                for (k, &l) in eig.eigenvalues.iter().enumerate() {
                    if l > 0.0 {
                        let v = eig.eigenvectors.column(k);
                        p += v * v.transpose() * l;
                    }
                }
                p
            }
        }
    )*};
}

impl_project_psd!(3, 9, 12);

/// Clamp negative eigenvalues of a symmetric matrix to zero.
pub fn project_psd<M: ProjectPsd>(m: &M) -> M {
    m.project_psd()
}

/// Indices `3 * v + k` of the coordinates of four vertices.
pub(crate) fn vertex_dofs(v: &[usize; 4]) -> [usize; 12] {
    std::array::from_fn(|i| 3 * v[i / 3] + i % 3)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lame_parameters() {
        let m = MaterialParams {
            youngs_modulus: 2.6e5,
            poisson_ratio: 0.3,
            density: 1000.0,
        };
        let (mu, la) = m.lame();
        assert!((mu - 1e5).abs() < 1e-9);
        assert!((la - 2.6e5 * 0.3 / (1.3 * 0.4)).abs() < 1e-9);
        assert!(MaterialParams {
            poisson_ratio: 0.5,
            ..m
        }
        .validate()
        .is_err());
    }

    #[test]
    fn projection_removes_negative_eigenvalues() {
        let m = nalgebra::Matrix3::new(1.0, 2.0, 0.0, 2.0, 1.0, 0.0, 0.0, 0.0, -3.0);
        let p = project_psd(&m);
        let eig = SymmetricEigen::new(p);
        assert!(eig.eigenvalues.iter().all(|&l| l > -1e-12));
        let ev: Vec<f64> = {
            let mut v: Vec<f64> = eig.eigenvalues.iter().copied().collect();
            v.sort_by(f64::total_cmp);
            v
        };
        assert!((ev[2] - 3.0).abs() < 1e-12);
    }
}
