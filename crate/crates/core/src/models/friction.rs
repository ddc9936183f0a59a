use nalgebra::{Cholesky, DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::DynamicsError;

/// Coulomb dry friction on the joints of a model.
///
/// Friction acts at the velocity level: the friction impulse on joint `j`
/// is bounded by `coulomb[j] * dt`, and a joint sticks (its velocity is set
/// to exactly zero) whenever the bounded impulse suffices to stop it.
/// Otherwise the full bound acts against the joint's motion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DryFrictionSpec {
    /// Coulomb torque (or force) per joint, `>= 0`.
    pub coulomb: Vec<f64>,
}

impl DryFrictionSpec {
    pub fn new(coulomb: Vec<f64>) -> Result<Self, DynamicsError> {
        for (j, c) in coulomb.iter().enumerate() {
            if !(c.is_finite() && *c >= 0.0) {
                return Err(DynamicsError::Invalid(format!(
                    "coulomb friction of joint {j} must be >= 0 (got {c})"
                )));
            }
        }
        Ok(Self { coulomb })
    }

    pub fn frictionless(n: usize) -> Self {
        Self {
            coulomb: vec![0.0; n],
        }
    }

    pub fn is_active(&self) -> bool {
        self.coulomb.iter().any(|c| *c > 0.0)
    }
}

const SWEEPS: usize = 500;
const TOLERANCE: f64 = 1e-14;

/// Applies joint dry friction to the free velocity `v_f`.
///
/// Solves the box-constrained complementarity problem
/// `v' = v_f + M⁻¹ λ`, `|λ_j| ≤ τ_c,j dt`, with `v'_j = 0` for interior
/// `λ_j` and `λ_j v'_j ≤ 0` on the bounds (maximal dissipation), by
/// projected Gauss-Seidel. Returns `(v', λ / dt)`, the latter being the
/// average friction torque over the step.
pub fn apply_joint_friction(
    mass: &DMatrix<f64>,
    free_velocity: &DVector<f64>,
    spec: &DryFrictionSpec,
    dt: f64,
) -> Result<(DVector<f64>, DVector<f64>), DynamicsError> {
    let n = free_velocity.len();
    if spec.coulomb.len() != n {
        return Err(DynamicsError::Dimension {
            what: "friction joints",
            expected: n,
            got: spec.coulomb.len(),
        });
    }
    if !spec.is_active() {
        return Ok((free_velocity.clone(), DVector::zeros(n)));
    }
    let minv = Cholesky::new(mass.clone())
        .ok_or(DynamicsError::SingularMass)?
        .inverse();
    let bounds: Vec<f64> = spec.coulomb.iter().map(|c| c * dt).collect();
    let mut lambda = DVector::<f64>::zeros(n);
    let mut v = free_velocity.clone();
    for _ in 0..SWEEPS {
        let mut change = 0.0f64;
        for j in 0..n {
            if bounds[j] == 0.0 {
                continue;
            }
            let w = minv[(j, j)];
            let new = (lambda[j] - v[j] / w).clamp(-bounds[j], bounds[j]);
            let delta = new - lambda[j];
            if delta != 0.0 {
                for i in 0..n {
                    v[i] += minv[(i, j)] * delta;
                }
                lambda[j] = new;
            }
            change = change.max((delta * w).abs());
        }
        if change < TOLERANCE {
            break;
        }
    }
    // Joints strictly inside their friction bound are stuck.
    for j in 0..n {
        if bounds[j] > 0.0 && lambda[j].abs() < bounds[j] {
            v[j] = 0.0;
        }
    }
    Ok((v, lambda / dt))
}
