use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{
    contact_velocity, join_state, param_check, split_state, ContactPoint, ContactSettings, GRAVITY,
};
use crate::contact::ContactImpulses;
use crate::dynamics::{check_dims, Dynamics};
use crate::error::DynamicsError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CubeParams {
    pub mass: f64,
    pub gravity: f64,
    pub friction: f64,
    pub erp: f64,
    pub dt: f64,
}

impl Default for CubeParams {
    fn default() -> Self {
        Self {
            mass: 0.01,
            gravity: GRAVITY,
            friction: 0.9,
            erp: 0.2,
            dt: 1e-2,
        }
    }
}

/// Planar cube on a table.
///
/// `x = (p_x, p_z, v_x, v_z)` where `p_z` is the height of the bottom face
/// above the table; the input is the force `(f_x, f_z)` on the body.
#[derive(Debug, Clone)]
pub struct Cube {
    p: CubeParams,
    contact: ContactSettings,
}

impl Cube {
    pub fn new(p: CubeParams) -> Result<Self, DynamicsError> {
        param_check("mass", p.mass, true)?;
        param_check("gravity", p.gravity, false)?;
        param_check("friction", p.friction, false)?;
        param_check("dt", p.dt, true)?;
        if !(0.0..=1.0).contains(&p.erp) {
            return Err(DynamicsError::Invalid(format!(
                "erp must lie in [0, 1], got {}",
                p.erp
            )));
        }
        let contact = ContactSettings {
            erp: p.erp,
            ..Default::default()
        };
        Ok(Self { p, contact })
    }

    pub fn params(&self) -> &CubeParams {
        &self.p
    }

    /// One step, also returning the contact impulses.
    pub fn step_with_impulses(
        &self,
        x: &DVector<f64>,
        u: &DVector<f64>,
    ) -> Result<(DVector<f64>, ContactImpulses), DynamicsError> {
        check_dims(self, x, u)?;
        let (m, dt) = (self.p.mass, self.p.dt);
        let (q, v) = split_state(x, 2);
        let force = DVector::from_vec(vec![u[0], u[1] - m * self.p.gravity]);
        let vf = &v + force * (dt / m);
        let point = ContactPoint {
            normal: DVector::from_vec(vec![0.0, 1.0]),
            tangent: DVector::from_vec(vec![1.0, 0.0]),
            gap: q[1],
            friction: self.p.friction,
        };
        let mass = DMatrix::from_diagonal_element(2, 2, m);
        let impulses = contact_velocity(&mass, vf, &[point], dt, &self.contact)?;
        let q_next = q + &impulses.velocity * dt;
        Ok((join_state(&q_next, &impulses.velocity), impulses))
    }
}

impl Dynamics for Cube {
    fn state_dim(&self) -> usize {
        4
    }

    fn control_dim(&self) -> usize {
        2
    }

    fn dt(&self) -> f64 {
        self.p.dt
    }

    fn step(&self, x: &DVector<f64>, u: &DVector<f64>) -> Result<DVector<f64>, DynamicsError> {
        self.step_with_impulses(x, u).map(|(x, _)| x)
    }
}
