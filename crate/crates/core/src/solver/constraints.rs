use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Equality constraints `z[dofs[i]] = targets[i]` enforced by an augmented
/// Lagrangian `-lambda^T r + 1/2 sum rho_i r_i^2` with `r = z[dofs] - targets`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct KinematicConstraints {
    pub dofs: Vec<usize>,
    pub targets: Vec<f64>,
    pub multipliers: Vec<f64>,
    pub penalty: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AlStatus {
    /// Residual within tolerance; nothing changed.
    Converged,
    Updated {
        penalty_grown: bool,
    },
}

impl KinematicConstraints {
    pub fn new(dofs: Vec<usize>, targets: Vec<f64>) -> Result<Self> {
        if dofs.len() != targets.len() {
            return Err(Error::InvalidParameter(
                "constraint dofs and targets differ in length".into(),
            ));
        }
        let mut sorted = dofs.clone();
        sorted.sort_unstable();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidParameter("duplicate constrained DoF".into()));
        }
        if targets.iter().any(|t| !t.is_finite()) {
            return Err(Error::NonFinite("constraint target".into()));
        }
        let n = dofs.len();
        Ok(Self {
            dofs,
            targets,
            multipliers: vec![0.0; n],
            penalty: vec![0.0; n],
        })
    }

    pub fn len(&self) -> usize {
        self.dofs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dofs.is_empty()
    }

    /// Replace targets, keeping multipliers as a warm start.
    pub fn set_targets(&mut self, targets: Vec<f64>) -> Result<()> {
        if targets.len() != self.dofs.len() {
            return Err(Error::InvalidParameter("target count changed".into()));
        }
        if targets.iter().any(|t| !t.is_finite()) {
            return Err(Error::NonFinite("constraint target".into()));
        }
        self.targets = targets;
        Ok(())
    }

    pub fn residual(&self, z: &[f64]) -> Vec<f64> {
        self.dofs
            .iter()
            .zip(&self.targets)
            .map(|(&d, t)| z[d] - t)
            .collect()
    }

    pub fn max_residual(&self, z: &[f64]) -> f64 {
        self.residual(z).iter().fold(0.0, |m, r| m.max(r.abs()))
    }

    /// AL energy value; gradient and Hessian diagonal are added into `grad`
    /// and `diag` (indexed by DoF).
    pub(crate) fn energy(&self, z: &[f64], mut out: Option<(&mut [f64], &mut [f64])>) -> f64 {
        let mut e = 0.0;
        for i in 0..self.dofs.len() {
            let d = self.dofs[i];
            let r = z[d] - self.targets[i];
            e += -self.multipliers[i] * r + 0.5 * self.penalty[i] * r * r;
            if let Some((g, h)) = out.as_mut() {
                g[d] += -self.multipliers[i] + self.penalty[i] * r;
                h[d] += self.penalty[i];
            }
        }
        e
    }
}

/// Multiplier update `lambda <- lambda - rho r` after an inner solve. The
/// penalty grows when the residual did not at least halve since
/// `previous_residual`.
pub fn al_update(
    c: &mut KinematicConstraints,
    z: &[f64],
    tol: f64,
    growth: f64,
    previous_residual: Option<f64>,
) -> AlStatus {
    let r = c.residual(z);
    let res = r.iter().fold(0.0, |m: f64, v| m.max(v.abs()));
    if res <= tol {
        return AlStatus::Converged;
    }
    for ((m, p), ri) in c.multipliers.iter_mut().zip(&c.penalty).zip(&r) {
        *m -= p * ri;
    }
    let penalty_grown = previous_residual.is_some_and(|p| res > 0.5 * p);
    if penalty_grown {
        for p in &mut c.penalty {
            *p *= growth;
        }
    }
    AlStatus::Updated { penalty_grown }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn converged_residual_leaves_state_alone() {
        let mut c = KinematicConstraints::new(vec![1], vec![2.0]).unwrap();
        c.penalty = vec![5.0];
        c.multipliers = vec![0.3];
        let before = c.clone();
        assert_eq!(
            al_update(&mut c, &[0.0, 2.0 + 1e-9], 1e-6, 2.0, None),
            AlStatus::Converged
        );
        assert_eq!(c, before);
    }

    #[test]
    fn slow_progress_grows_penalty() {
        let mut c = KinematicConstraints::new(vec![0], vec![1.0]).unwrap();
        c.penalty = vec![10.0];
        let s = al_update(&mut c, &[0.9], 1e-6, 2.0, Some(0.15));
        assert_eq!(
            s,
            AlStatus::Updated {
                penalty_grown: true
            }
        );
        assert!((c.multipliers[0] - 1.0).abs() < 1e-12);
        assert_eq!(c.penalty[0], 20.0);
    }

    #[test]
    fn duplicates_rejected() {
        assert!(KinematicConstraints::new(vec![3, 3], vec![0.0, 0.0]).is_err());
    }
}
