//! Second-order forward-mode differentiation.
//!
//! [`Dual2`] carries a value together with its gradient and Hessian with
//! respect to `N` seed variables. Contact distance primitives are written once
//! over the [`Real`] trait and evaluated either on plain `f64` (values only) or
//! on `Dual2<12>` (exact first and second derivatives for the Newton system).

use std::ops::{Add, Div, Mul, Neg, Sub};

use nalgebra::{SMatrix, SVector};

pub trait Real:
    Copy
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
{
    fn constant(v: f64) -> Self;
    fn value(&self) -> f64;
    fn sqrt(self) -> Self;
    fn ln(self) -> Self;
}

impl Real for f64 {
    #[inline]
    fn constant(v: f64) -> Self {
        v
    }
    #[inline]
    fn value(&self) -> f64 {
        *self
    }
    #[inline]
    fn sqrt(self) -> Self {
        f64::sqrt(self)
    }
    #[inline]
    fn ln(self) -> Self {
        f64::ln(self)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dual2<const N: usize> {
    pub v: f64,
    pub g: SVector<f64, N>,
    pub h: SMatrix<f64, N, N>,
}

impl<const N: usize> Dual2<N> {
    pub fn new_constant(v: f64) -> Self {
        Self {
            v,
            g: SVector::zeros(),
            h: SMatrix::zeros(),
        }
    }

    /// Seed variable `index` with value `v`.
    pub fn variable(v: f64, index: usize) -> Self {
        let mut d = Self::new_constant(v);
        d.g[index] = 1.0;
        d
    }

    /// Apply a scalar function given its value and first two derivatives at `self.v`.
    #[inline]
    fn chain(self, f: f64, df: f64, ddf: f64) -> Self {
        Self {
            v: f,
            g: self.g * df,
            h: self.h * df + (self.g * self.g.transpose()) * ddf,
        }
    }

    pub fn recip(self) -> Self {
        let inv = 1.0 / self.v;
        self.chain(inv, -inv * inv, 2.0 * inv * inv * inv)
    }
}

impl<const N: usize> Add for Dual2<N> {
    type Output = Self;
    #[inline]
    fn add(self, o: Self) -> Self {
        Self {
            v: self.v + o.v,
            g: self.g + o.g,
            h: self.h + o.h,
        }
    }
}

impl<const N: usize> Sub for Dual2<N> {
    type Output = Self;
    #[inline]
    fn sub(self, o: Self) -> Self {
        Self {
            v: self.v - o.v,
            g: self.g - o.g,
            h: self.h - o.h,
        }
    }
}

impl<const N: usize> Neg for Dual2<N> {
    type Output = Self;
    #[inline]
    fn neg(self) -> Self {
        Self {
            v: -self.v,
            g: -self.g,
            h: -self.h,
        }
    }
}

impl<const N: usize> Mul for Dual2<N> {
    type Output = Self;
    #[inline]
    fn mul(self, o: Self) -> Self {
        let cross = self.g * o.g.transpose();
        Self {
            v: self.v * o.v,
            g: o.g * self.v + self.g * o.v,
            h: o.h * self.v + self.h * o.v + cross + cross.transpose(),
        }
    }
}

impl<const N: usize> Div for Dual2<N> {
    type Output = Self;
    #[inline]
    #[allow(clippy::suspicious_arithmetic_impl)]
    fn div(self, o: Self) -> Self {
        self * o.recip()
    }
}

impl<const N: usize> Real for Dual2<N> {
    fn constant(v: f64) -> Self {
        Self::new_constant(v)
    }
    fn value(&self) -> f64 {
        self.v
    }
    fn sqrt(self) -> Self {
        let s = self.v.sqrt();
        self.chain(s, 0.5 / s, -0.25 / (s * self.v))
    }
    fn ln(self) -> Self {
        self.chain(self.v.ln(), 1.0 / self.v, -1.0 / (self.v * self.v))
    }
}

pub type V3<T> = [T; 3];

#[inline]
pub fn sub3<T: Real>(a: V3<T>, b: V3<T>) -> V3<T> {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

#[inline]
pub fn dot3<T: Real>(a: V3<T>, b: V3<T>) -> T {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

#[inline]
pub fn cross3<T: Real>(a: V3<T>, b: V3<T>) -> V3<T> {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

/// Seed four 3D points as the 12 variables of a `Dual2<12>`.
pub fn seed_points(points: &[nalgebra::Vector3<f64>; 4]) -> [V3<Dual2<12>>; 4] {
    let mut out = [[Dual2::new_constant(0.0); 3]; 4];
    for (k, p) in points.iter().enumerate() {
        for c in 0..3 {
            out[k][c] = Dual2::variable(p[c], 3 * k + c);
        }
    }
    out
}
