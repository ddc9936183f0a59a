use nalgebra::{Cholesky, DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{
    apply_joint_friction, assemble, join_state, param_check, split_state, DryFrictionSpec,
    PointMass, GRAVITY,
};
use crate::cost::TaskMap;
use crate::dynamics::{check_dims, Dynamics};
use crate::error::DynamicsError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CartPoleParams {
    pub cart_mass: f64,
    pub pole_mass: f64,
    pub length: f64,
    pub gravity: f64,
    /// Coulomb force on the cart rail.
    pub cart_coulomb: f64,
    /// Coulomb torque on the pole hinge.
    pub pole_coulomb: f64,
    pub dt: f64,
}

impl Default for CartPoleParams {
    fn default() -> Self {
        Self {
            cart_mass: 1.0,
            pole_mass: 1.0,
            length: 1.0,
            gravity: GRAVITY,
            cart_coulomb: 0.1,
            pole_coulomb: 0.1,
            dt: 1e-2,
        }
    }
}

/// Cart on a rail with a point-mass pole.
///
/// `x = (p, θ, ṗ, θ̇)` with `θ = 0` hanging down; the input is the
/// horizontal force on the cart.
#[derive(Debug, Clone)]
pub struct CartPole {
    p: CartPoleParams,
    friction: DryFrictionSpec,
}

impl CartPole {
    pub fn new(p: CartPoleParams) -> Result<Self, DynamicsError> {
        param_check("cart_mass", p.cart_mass, true)?;
        param_check("pole_mass", p.pole_mass, true)?;
        param_check("length", p.length, true)?;
        param_check("gravity", p.gravity, false)?;
        param_check("dt", p.dt, true)?;
        let friction = DryFrictionSpec::new(vec![p.cart_coulomb, p.pole_coulomb])?;
        Ok(Self { p, friction })
    }

    pub fn params(&self) -> &CartPoleParams {
        &self.p
    }

    /// Mass matrix and bias `C v + g` at `(q, v)`.
    pub fn mass_and_bias(
        &self,
        q: &DVector<f64>,
        v: &DVector<f64>,
    ) -> (DMatrix<f64>, DVector<f64>) {
        let (s, c) = q[1].sin_cos();
        let l = self.p.length;
        let cart = PointMass {
            mass: self.p.cart_mass,
            jacobian: DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]),
            bias: [0.0, 0.0],
        };
        let w2 = v[1] * v[1];
        let bob = PointMass {
            mass: self.p.pole_mass,
            jacobian: DMatrix::from_row_slice(2, 2, &[1.0, l * c, 0.0, l * s]),
            bias: [-l * s * w2, l * c * w2],
        };
        assemble(&[cart, bob], 2, self.p.gravity)
    }

    /// Kinetic plus potential energy.
    pub fn energy(&self, x: &DVector<f64>) -> f64 {
        let (q, v) = split_state(x, 2);
        let (m, _) = self.mass_and_bias(&q, &v);
        0.5 * v.dot(&(m * &v)) - self.p.pole_mass * self.p.gravity * self.p.length * q[1].cos()
    }
}

impl Dynamics for CartPole {
    fn state_dim(&self) -> usize {
        4
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
        let (q, v) = split_state(x, 2);
        let (m, h) = self.mass_and_bias(&q, &v);
        let tau = DVector::from_vec(vec![u[0], 0.0]);
        let chol = Cholesky::new(m.clone()).ok_or(DynamicsError::SingularMass)?;
        let vf = &v + chol.solve(&(tau - h)) * dt;
        let (v_next, _) = apply_joint_friction(&m, &vf, &self.friction, dt)?;
        let q_next = q + &v_next * dt;
        Ok(join_state(&q_next, &v_next))
    }
}

/// Pole tip position `(p + l sin θ, -l cos θ)`.
#[derive(Debug, Clone)]
pub struct CartPoleTip {
    pub length: f64,
}

impl TaskMap for CartPoleTip {
    fn output_dim(&self) -> usize {
        2
    }

    fn eval(&self, x: &DVector<f64>) -> DVector<f64> {
        DVector::from_vec(vec![
            x[0] + self.length * x[1].sin(),
            -self.length * x[1].cos(),
        ])
    }

    fn jacobian(&self, x: &DVector<f64>) -> DMatrix<f64> {
        let mut j = DMatrix::zeros(2, x.len());
        j[(0, 0)] = 1.0;
        j[(0, 1)] = self.length * x[1].cos();
        j[(1, 1)] = self.length * x[1].sin();
        j
    }

    fn hessians(&self, x: &DVector<f64>) -> Vec<DMatrix<f64>> {
        let n = x.len();
        let mut hx = DMatrix::zeros(n, n);
        hx[(1, 1)] = -self.length * x[1].sin();
        let mut hz = DMatrix::zeros(n, n);
        hz[(1, 1)] = self.length * x[1].cos();
        vec![hx, hz]
    }
}
