//! Built-in benchmark systems.
//!
//! Every model integrates with semi-implicit Euler at the velocity level:
//! the free velocity `v_f = v + M⁻¹(τ - C v - g) dt` is corrected by joint
//! friction and/or contact impulses, then `q' = q + v' dt`.

use nalgebra::{DMatrix, DVector};

use crate::contact::{self, ContactImpulses, ContactProblem, PgsSettings};
use crate::error::DynamicsError;

mod cartpole;
mod cube;
mod double_pendulum;
mod friction;
mod hopper;
mod pendulum;
mod quadrotor;

pub use cartpole::{CartPole, CartPoleParams, CartPoleTip};
pub use cube::{Cube, CubeParams};
pub use double_pendulum::{Actuation, DoublePendulum, DoublePendulumParams, DoublePendulumTip};
pub use friction::{apply_joint_friction, DryFrictionSpec};
pub use hopper::{Hopper2d, HopperParams};
pub use pendulum::{Pendulum, PendulumParams, PendulumTip};
pub use quadrotor::{Quadrotor2d, QuadrotorParams};

/// Standard gravity used by the default parameter sets.
pub const GRAVITY: f64 = 9.81;

/// A point mass attached to a planar kinematic chain.
///
/// `jacobian` is `2 x n_q` (world x, world z) and `bias` is `J̇ q̇`.
pub(crate) struct PointMass {
    pub mass: f64,
    pub jacobian: DMatrix<f64>,
    pub bias: [f64; 2],
}

/// Mass matrix and nonlinear/gravity terms `C(q, v) v + g(q)` of a set of
/// point masses.
pub(crate) fn assemble(
    terms: &[PointMass],
    nq: usize,
    gravity: f64,
) -> (DMatrix<f64>, DVector<f64>) {
    let mut mass = DMatrix::zeros(nq, nq);
    let mut h = DVector::zeros(nq);
    for term in terms {
        let jt = term.jacobian.transpose();
        mass += &jt * &term.jacobian * term.mass;
        let accel = nalgebra::Vector2::new(term.bias[0], term.bias[1] + gravity);
        for i in 0..nq {
            h[i] += term.mass * (jt[(i, 0)] * accel[0] + jt[(i, 1)] * accel[1]);
        }
    }
    (mass, h)
}

/// One unilateral point contact of a planar system.
pub(crate) struct ContactPoint {
    pub normal: DVector<f64>,
    pub tangent: DVector<f64>,
    /// Signed distance to the ground; negative when penetrating.
    pub gap: f64,
    pub friction: f64,
}

/// Contact settings shared by the contact-bearing models.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContactSettings {
    /// Baumgarte error-reduction parameter in `[0, 1]`.
    pub erp: f64,
    pub pgs: PgsSettings,
}

impl Default for ContactSettings {
    fn default() -> Self {
        Self {
            erp: 0.2,
            pgs: PgsSettings {
                max_iterations: 200,
                tolerance: 1e-10,
            },
        }
    }
}

/// Reference normal velocity: Baumgarte correction when penetrating, and
/// `-gap/dt` when separated so that the body can close the gap within the
/// step but not pass through the ground.
pub(crate) fn normal_reference(gap: f64, dt: f64, erp: f64) -> f64 {
    if gap < 0.0 {
        contact::baumgarte_reference(-gap, dt, erp)
    } else {
        -gap / dt
    }
}

/// Solves the contact impulses for the given free velocity.
pub(crate) fn contact_velocity(
    mass: &DMatrix<f64>,
    free_velocity: DVector<f64>,
    points: &[ContactPoint],
    dt: f64,
    settings: &ContactSettings,
) -> Result<ContactImpulses, DynamicsError> {
    let nv = mass.nrows();
    let m = 2 * points.len();
    let mut jac = DMatrix::zeros(m, nv);
    let mut reference = DVector::zeros(m);
    for (i, p) in points.iter().enumerate() {
        jac.row_mut(2 * i).copy_from(&p.normal.transpose());
        jac.row_mut(2 * i + 1).copy_from(&p.tangent.transpose());
        reference[2 * i] = normal_reference(p.gap, dt, settings.erp);
    }
    let problem = ContactProblem::new(
        mass.clone(),
        free_velocity,
        jac,
        reference,
        points.iter().map(|p| p.friction).collect(),
    )?;
    Ok(contact::solve_ncp_pgs_budgeted(
        &problem,
        settings.pgs.max_iterations,
        settings.pgs.tolerance,
    )?)
}

pub(crate) fn split_state(x: &DVector<f64>, nq: usize) -> (DVector<f64>, DVector<f64>) {
    (x.rows(0, nq).into_owned(), x.rows(nq, nq).into_owned())
}

pub(crate) fn join_state(q: &DVector<f64>, v: &DVector<f64>) -> DVector<f64> {
    DVector::from_iterator(q.len() + v.len(), q.iter().chain(v.iter()).copied())
}

pub(crate) fn param_check(name: &str, value: f64, positive: bool) -> Result<(), DynamicsError> {
    let ok = value.is_finite() && if positive { value > 0.0 } else { value >= 0.0 };
    if ok {
        Ok(())
    } else {
        Err(DynamicsError::Invalid(format!(
            "parameter {name} must be {} (got {value})",
            if positive { "positive" } else { "nonnegative" }
        )))
    }
}
