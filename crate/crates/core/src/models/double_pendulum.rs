use nalgebra::{Cholesky, DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{
    apply_joint_friction, assemble, join_state, param_check, split_state, DryFrictionSpec,
    PointMass, GRAVITY,
};
use crate::cost::TaskMap;
use crate::dynamics::{check_dims, Dynamics};
use crate::error::DynamicsError;

/// Which joints receive a torque input.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Actuation {
    Both,
    Shoulder,
    Elbow,
}

impl Actuation {
    fn joints(self) -> &'static [usize] {
        match self {
            Actuation::Both => &[0, 1],
            Actuation::Shoulder => &[0],
            Actuation::Elbow => &[1],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DoublePendulumParams {
    pub mass1: f64,
    pub mass2: f64,
    pub length1: f64,
    pub length2: f64,
    pub gravity: f64,
    pub coulomb: [f64; 2],
    pub actuation: Actuation,
    pub dt: f64,
}

impl Default for DoublePendulumParams {
    fn default() -> Self {
        Self {
            mass1: 1.0,
            mass2: 1.0,
            length1: 1.0,
            length2: 1.0,
            gravity: GRAVITY,
            coulomb: [0.1, 0.1],
            actuation: Actuation::Shoulder,
            dt: 1e-2,
        }
    }
}

/// Two-link pendulum with point masses at the link ends.
///
/// `x = (θ₁, θ₂, θ̇₁, θ̇₂)`; `θ₁` is measured from the downward vertical and
/// `θ₂` relative to the first link.
#[derive(Debug, Clone)]
pub struct DoublePendulum {
    p: DoublePendulumParams,
    friction: DryFrictionSpec,
}

impl DoublePendulum {
    pub fn new(p: DoublePendulumParams) -> Result<Self, DynamicsError> {
        param_check("mass1", p.mass1, true)?;
        param_check("mass2", p.mass2, true)?;
        param_check("length1", p.length1, true)?;
        param_check("length2", p.length2, true)?;
        param_check("gravity", p.gravity, false)?;
        param_check("dt", p.dt, true)?;
        let friction = DryFrictionSpec::new(p.coulomb.to_vec())?;
        Ok(Self { p, friction })
    }

    pub fn params(&self) -> &DoublePendulumParams {
        &self.p
    }

    pub fn mass_and_bias(
        &self,
        q: &DVector<f64>,
        v: &DVector<f64>,
    ) -> (DMatrix<f64>, DVector<f64>) {
        let (l1, l2) = (self.p.length1, self.p.length2);
        let (s1, c1) = q[0].sin_cos();
        let (s12, c12) = (q[0] + q[1]).sin_cos();
        let w1 = v[0] * v[0];
        let w12 = (v[0] + v[1]) * (v[0] + v[1]);
        let elbow = PointMass {
            mass: self.p.mass1,
            jacobian: DMatrix::from_row_slice(2, 2, &[l1 * c1, 0.0, l1 * s1, 0.0]),
            bias: [-l1 * s1 * w1, l1 * c1 * w1],
        };
        let tip = PointMass {
            mass: self.p.mass2,
            jacobian: DMatrix::from_row_slice(
                2,
                2,
                &[l1 * c1 + l2 * c12, l2 * c12, l1 * s1 + l2 * s12, l2 * s12],
            ),
            bias: [
                -l1 * s1 * w1 - l2 * s12 * w12,
                l1 * c1 * w1 + l2 * c12 * w12,
            ],
        };
        assemble(&[elbow, tip], 2, self.p.gravity)
    }

    /// Kinetic plus potential energy, zero when hanging at rest.
    pub fn energy(&self, x: &DVector<f64>) -> f64 {
        let (q, v) = split_state(x, 2);
        let (m, _) = self.mass_and_bias(&q, &v);
        let z1 = self.p.length1 * (1.0 - q[0].cos());
        let z2 = z1 + self.p.length2 * (1.0 - (q[0] + q[1]).cos());
        0.5 * v.dot(&(m * &v)) + self.p.gravity * (self.p.mass1 * z1 + self.p.mass2 * z2)
    }
}

impl Dynamics for DoublePendulum {
    fn state_dim(&self) -> usize {
        4
    }

    fn control_dim(&self) -> usize {
        self.p.actuation.joints().len()
    }

    fn dt(&self) -> f64 {
        self.p.dt
    }

    fn step(&self, x: &DVector<f64>, u: &DVector<f64>) -> Result<DVector<f64>, DynamicsError> {
        check_dims(self, x, u)?;
        let dt = self.p.dt;
        let (q, v) = split_state(x, 2);
        let (m, h) = self.mass_and_bias(&q, &v);
        let mut tau = -h;
        for (k, &j) in self.p.actuation.joints().iter().enumerate() {
            tau[j] += u[k];
        }
        let chol = Cholesky::new(m.clone()).ok_or(DynamicsError::SingularMass)?;
        let vf = &v + chol.solve(&tau) * dt;
        let (v_next, _) = apply_joint_friction(&m, &vf, &self.friction, dt)?;
        let q_next = q + &v_next * dt;
        Ok(join_state(&q_next, &v_next))
    }
}

/// Position of the second link's tip.
#[derive(Debug, Clone)]
pub struct DoublePendulumTip {
    pub length1: f64,
    pub length2: f64,
}

impl TaskMap for DoublePendulumTip {
    fn output_dim(&self) -> usize {
        2
    }

    fn eval(&self, x: &DVector<f64>) -> DVector<f64> {
        let (a, b) = (x[0], x[0] + x[1]);
        DVector::from_vec(vec![
            self.length1 * a.sin() + self.length2 * b.sin(),
            -self.length1 * a.cos() - self.length2 * b.cos(),
        ])
    }

    fn jacobian(&self, x: &DVector<f64>) -> DMatrix<f64> {
        let (a, b) = (x[0], x[0] + x[1]);
        let mut j = DMatrix::zeros(2, x.len());
        j[(0, 0)] = self.length1 * a.cos() + self.length2 * b.cos();
        j[(0, 1)] = self.length2 * b.cos();
        j[(1, 0)] = self.length1 * a.sin() + self.length2 * b.sin();
        j[(1, 1)] = self.length2 * b.sin();
        j
    }

    fn hessians(&self, x: &DVector<f64>) -> Vec<DMatrix<f64>> {
        let n = x.len();
        let (a, b) = (x[0], x[0] + x[1]);
        let (l1, l2) = (self.length1, self.length2);
        let mut hx = DMatrix::zeros(n, n);
        let mut hz = DMatrix::zeros(n, n);
        let xb = -l2 * b.sin();
        let zb = l2 * b.cos();
        hx[(0, 0)] = -l1 * a.sin() + xb;
        hz[(0, 0)] = l1 * a.cos() + zb;
        for (i, k) in [(0, 1), (1, 0), (1, 1)] {
            hx[(i, k)] = xb;
            hz[(i, k)] = zb;
        }
        vec![hx, hz]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(a: &[f64]) -> DVector<f64> {
        DVector::from_vec(a.to_vec())
    }

    #[test]
    fn hanging_equilibrium() {
        let dp = DoublePendulum::new(DoublePendulumParams {
            coulomb: [0.0, 0.0],
            actuation: Actuation::Both,
            ..Default::default()
        })
        .unwrap();
        let x = v(&[0.0; 4]);
        assert_eq!(dp.step(&x, &v(&[0.0, 0.0])).unwrap(), x);
    }

    #[test]
    fn frictionless_swing_conserves_energy() {
        let dp = DoublePendulum::new(DoublePendulumParams {
            coulomb: [0.0, 0.0],
            dt: 1e-3,
            ..Default::default()
        })
        .unwrap();
        let mut x = v(&[0.8, -0.4, 0.0, 0.0]);
        let e0 = dp.energy(&x);
        let u = v(&[0.0]);
        let mut worst = 0.0f64;
        for _ in 0..1000 {
            x = dp.step(&x, &u).unwrap();
            worst = worst.max((dp.energy(&x) - e0).abs());
        }
        assert!(worst < 0.02 * e0, "drift {worst} vs {e0}");
    }

    #[test]
    fn control_dimension_follows_actuation() {
        for (a, n) in [
            (Actuation::Both, 2),
            (Actuation::Shoulder, 1),
            (Actuation::Elbow, 1),
        ] {
            let dp = DoublePendulum::new(DoublePendulumParams {
                actuation: a,
                ..Default::default()
            })
            .unwrap();
            assert_eq!(dp.control_dim(), n);
        }
    }
}
