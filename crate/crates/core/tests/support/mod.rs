//! Independent reference computations shared by the integration tests and
//! the acceptance report: finite differences, brute-force searches and
//! closed-form solutions.

#![allow(dead_code)]

pub mod energy;
pub mod kinematics;
pub mod tactile;

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_vector(rng: &mut ChaCha8Rng, scale: f64) -> Vector3<f64> {
    Vector3::new(
        rng.gen_range(-1.0..1.0),
        rng.gen_range(-1.0..1.0),
        rng.gen_range(-1.0..1.0),
    ) * scale
}

pub fn flatten(x: &[Vector3<f64>]) -> Vec<f64> {
    x.iter().flat_map(|p| [p.x, p.y, p.z]).collect()
}

pub fn unflatten(z: &[f64]) -> Vec<Vector3<f64>> {
    z.chunks(3)
        .map(|c| Vector3::new(c[0], c[1], c[2]))
        .collect()
}

pub fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// `|a - b|_inf / max(|a|_inf, |b|_inf)`, zero when both vanish.
pub fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let scale = inf_norm(a).max(inf_norm(b));
    if scale == 0.0 {
        return 0.0;
    }
    a.iter()
        .zip(b)
        .fold(0.0f64, |m, (x, y)| m.max((x - y).abs()))
        / scale
}
