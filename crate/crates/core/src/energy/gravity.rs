use nalgebra::Vector3;

use super::EnergyReport;

/// Potential `-sum_i m_i g . x_i`; the gradient is the negated weight.
pub fn gravity(x: &[Vector3<f64>], masses: &[f64], g: &Vector3<f64>) -> EnergyReport {
    let mut r = EnergyReport::zero(3 * x.len());
    for (i, (p, m)) in x.iter().zip(masses).enumerate() {
        r.value -= m * g.dot(p);
        for k in 0..3 {
            r.gradient[3 * i + k] = -m * g[k];
        }
    }
    r
}
