use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{apply_joint_friction, param_check, DryFrictionSpec, GRAVITY};
use crate::cost::TaskMap;
use crate::dynamics::{check_dims, Dynamics};
use crate::error::DynamicsError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PendulumParams {
    pub mass: f64,
    pub length: f64,
    pub gravity: f64,
    /// Coulomb friction torque on the joint; zero gives the smooth model.
    pub coulomb: f64,
    pub dt: f64,
}

impl Default for PendulumParams {
    fn default() -> Self {
        Self {
            mass: 1.0,
            length: 1.0,
            gravity: GRAVITY,
            coulomb: 0.0,
            dt: 5e-3,
        }
    }
}

/// Point-mass pendulum, `x = (θ, θ̇)`, `θ = 0` hanging down, torque input.
#[derive(Debug, Clone)]
pub struct Pendulum {
    p: PendulumParams,
    friction: DryFrictionSpec,
}

impl Pendulum {
    pub fn new(p: PendulumParams) -> Result<Self, DynamicsError> {
        param_check("mass", p.mass, true)?;
        param_check("length", p.length, true)?;
        param_check("gravity", p.gravity, false)?;
        param_check("dt", p.dt, true)?;
        let friction = DryFrictionSpec::new(vec![p.coulomb])?;
        Ok(Self { p, friction })
    }

    pub fn params(&self) -> &PendulumParams {
        &self.p
    }

    fn inertia(&self) -> f64 {
        self.p.mass * self.p.length * self.p.length
    }

    /// Kinetic plus potential energy, zero at the bottom at rest.
    pub fn energy(&self, x: &DVector<f64>) -> f64 {
        0.5 * self.inertia() * x[1] * x[1]
            + self.p.mass * self.p.gravity * self.p.length * (1.0 - x[0].cos())
    }

    /// Tip position.
    pub fn tip(&self, x: &DVector<f64>) -> (f64, f64) {
        (self.p.length * x[0].sin(), -self.p.length * x[0].cos())
    }

    fn is_smooth(&self) -> bool {
        !self.friction.is_active()
    }
}

impl Dynamics for Pendulum {
    fn state_dim(&self) -> usize {
        2
    }

    fn control_dim(&self) -> usize {
        1
    }

    fn dt(&self) -> f64 {
        self.p.dt
    }

    fn step(&self, x: &DVector<f64>, u: &DVector<f64>) -> Result<DVector<f64>, DynamicsError> {
        check_dims(self, x, u)?;
        let dt = self.p.dt;
        let inertia = self.inertia();
        let torque = u[0] - self.p.mass * self.p.gravity * self.p.length * x[0].sin();
        let vf = x[1] + torque / inertia * dt;
        let v = if self.is_smooth() {
            vf
        } else {
            let m = DMatrix::from_element(1, 1, inertia);
            let (v, _) =
                apply_joint_friction(&m, &DVector::from_element(1, vf), &self.friction, dt)?;
            v[0]
        };
        Ok(DVector::from_vec(vec![x[0] + v * dt, v]))
    }

    fn jacobians(
        &self,
        x: &DVector<f64>,
        u: &DVector<f64>,
    ) -> Result<(DMatrix<f64>, DMatrix<f64>), DynamicsError> {
        if !self.is_smooth() {
            return crate::dynamics::finite_diff_jacobians(
                self,
                x,
                u,
                crate::dynamics::FD_RELATIVE_STEP,
            );
        }
        check_dims(self, x, u)?;
        let dt = self.p.dt;
        let k = self.p.gravity / self.p.length * x[0].cos();
        let b = 1.0 / self.inertia();
        let fx = DMatrix::from_row_slice(2, 2, &[1.0 - dt * dt * k, dt, -dt * k, 1.0]);
        let fu = DMatrix::from_row_slice(2, 1, &[dt * dt * b, dt * b]);
        Ok((fx, fu))
    }

    fn jacobian_cost(&self) -> u64 {
        if self.is_smooth() {
            3
        } else {
            6
        }
    }

    fn second_order(&self, x: &DVector<f64>, _u: &DVector<f64>) -> Option<Vec<DMatrix<f64>>> {
        if !self.is_smooth() {
            return None;
        }
        let dt = self.p.dt;
        let s = self.p.gravity / self.p.length * x[0].sin();
        let mut h_theta = DMatrix::zeros(3, 3);
        h_theta[(0, 0)] = dt * dt * s;
        let mut h_vel = DMatrix::zeros(3, 3);
        h_vel[(0, 0)] = dt * s;
        Some(vec![h_theta, h_vel])
    }
}

/// Tip position `(l sin θ, -l cos θ)`.
#[derive(Debug, Clone)]
pub struct PendulumTip {
    pub length: f64,
}

impl TaskMap for PendulumTip {
    fn output_dim(&self) -> usize {
        2
    }

    fn eval(&self, x: &DVector<f64>) -> DVector<f64> {
        DVector::from_vec(vec![self.length * x[0].sin(), -self.length * x[0].cos()])
    }

    fn jacobian(&self, x: &DVector<f64>) -> DMatrix<f64> {
        let n = x.len();
        let mut j = DMatrix::zeros(2, n);
        j[(0, 0)] = self.length * x[0].cos();
        j[(1, 0)] = self.length * x[0].sin();
        j
    }

    fn hessians(&self, x: &DVector<f64>) -> Vec<DMatrix<f64>> {
        let n = x.len();
        let mut hx = DMatrix::zeros(n, n);
        hx[(0, 0)] = -self.length * x[0].sin();
        let mut hz = DMatrix::zeros(n, n);
        hz[(0, 0)] = self.length * x[0].cos();
        vec![hx, hz]
    }
}
