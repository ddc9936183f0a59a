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
pub struct QuadrotorParams {
    pub mass: f64,
    /// Distance from the centre to each rotor and landing skid.
    pub arm: f64,
    pub gravity: f64,
    pub friction: f64,
    pub erp: f64,
    pub dt: f64,
}

impl Default for QuadrotorParams {
    fn default() -> Self {
        Self {
            mass: 1.0,
            arm: 0.25,
            gravity: GRAVITY,
            friction: 0.9,
            erp: 0.2,
            dt: 1e-2,
        }
    }
}

/// Planar quadrotor, `q = (p_x, p_z, θ)`, with two rotors and two landing
/// skids at `±arm` along the body axis.
///
/// Inputs are the left and right thrusts, clamped to be nonnegative. The
/// body is modelled as two point masses at the rotors, so `I = m·arm²`.
#[derive(Debug, Clone)]
pub struct Quadrotor2d {
    p: QuadrotorParams,
    contact: ContactSettings,
}

impl Quadrotor2d {
    pub fn new(p: QuadrotorParams) -> Result<Self, DynamicsError> {
        param_check("mass", p.mass, true)?;
        param_check("arm", p.arm, true)?;
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

    pub fn params(&self) -> &QuadrotorParams {
        &self.p
    }

    /// Thrust per rotor that balances gravity.
    pub fn hover_thrust(&self) -> f64 {
        0.5 * self.p.mass * self.p.gravity
    }

    fn mass_matrix(&self) -> DMatrix<f64> {
        let m = self.p.mass;
        DMatrix::from_diagonal(&DVector::from_vec(vec![m, m, m * self.p.arm * self.p.arm]))
    }

    fn skids(&self, q: &DVector<f64>) -> [ContactPoint; 2] {
        let a = self.p.arm;
        let (s, c) = q[2].sin_cos();
        [-1.0, 1.0].map(|side| ContactPoint {
            normal: DVector::from_vec(vec![0.0, 1.0, side * a * c]),
            tangent: DVector::from_vec(vec![1.0, 0.0, -side * a * s]),
            gap: q[1] + side * a * s,
            friction: self.p.friction,
        })
    }

    pub fn step_with_impulses(
        &self,
        x: &DVector<f64>,
        u: &DVector<f64>,
    ) -> Result<(DVector<f64>, ContactImpulses), DynamicsError> {
        check_dims(self, x, u)?;
        let dt = self.p.dt;
        let (q, v) = split_state(x, 3);
        let left = u[0].max(0.0);
        let right = u[1].max(0.0);
        let (s, c) = q[2].sin_cos();
        let thrust = left + right;
        let m = self.p.mass;
        let accel = DVector::from_vec(vec![
            -thrust * s / m,
            thrust * c / m - self.p.gravity,
            (right - left) / (m * self.p.arm),
        ]);
        let vf = &v + accel * dt;
        let impulses =
            contact_velocity(&self.mass_matrix(), vf, &self.skids(&q), dt, &self.contact)?;
        let q_next = q + &impulses.velocity * dt;
        Ok((join_state(&q_next, &impulses.velocity), impulses))
    }
}

impl Dynamics for Quadrotor2d {
    fn state_dim(&self) -> usize {
        6
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
