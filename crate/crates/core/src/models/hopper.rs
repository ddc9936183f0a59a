use nalgebra::{Cholesky, DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{
    assemble, contact_velocity, join_state, param_check, split_state, ContactPoint,
    ContactSettings, PointMass, GRAVITY,
};
use crate::contact::ContactImpulses;
use crate::dynamics::{check_dims, Dynamics};
use crate::error::DynamicsError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HopperParams {
    pub base_mass: f64,
    pub knee_mass: f64,
    pub foot_mass: f64,
    pub thigh: f64,
    pub shank: f64,
    /// Rotor inertia added to each joint.
    pub armature: f64,
    pub gravity: f64,
    pub friction: f64,
    pub erp: f64,
    pub dt: f64,
}

impl Default for HopperParams {
    fn default() -> Self {
        Self {
            base_mass: 1.0,
            knee_mass: 0.2,
            foot_mass: 0.1,
            thigh: 0.5,
            shank: 0.5,
            armature: 0.01,
            gravity: GRAVITY,
            friction: 0.9,
            erp: 0.2,
            dt: 1e-2,
        }
    }
}

/// One leg on a vertical rail: `q = (z, hip, knee)`.
///
/// The base slides vertically at height `z`; the hip and knee are
/// actuated. Both angles are zero when the leg points straight down, so the
/// foot is at height `z - thigh - shank` in the stretched pose.
#[derive(Debug, Clone)]
pub struct Hopper2d {
    p: HopperParams,
    contact: ContactSettings,
}

impl Hopper2d {
    pub fn new(p: HopperParams) -> Result<Self, DynamicsError> {
        param_check("base_mass", p.base_mass, true)?;
        param_check("knee_mass", p.knee_mass, true)?;
        param_check("foot_mass", p.foot_mass, true)?;
        param_check("thigh", p.thigh, true)?;
        param_check("shank", p.shank, true)?;
        param_check("armature", p.armature, false)?;
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

    pub fn params(&self) -> &HopperParams {
        &self.p
    }

    /// Standing state with the leg stretched and the foot on the ground.
    pub fn stretched_state(&self) -> DVector<f64> {
        let mut x = DVector::zeros(6);
        x[0] = self.p.thigh + self.p.shank;
        x
    }

    /// Foot position `(x, z)`.
    pub fn foot(&self, q: &DVector<f64>) -> (f64, f64) {
        let (l1, l2) = (self.p.thigh, self.p.shank);
        let (a, b) = (q[1], q[1] + q[2]);
        (
            l1 * a.sin() + l2 * b.sin(),
            q[0] - l1 * a.cos() - l2 * b.cos(),
        )
    }

    fn point_masses(&self, q: &DVector<f64>, v: &DVector<f64>) -> [PointMass; 3] {
        let (l1, l2) = (self.p.thigh, self.p.shank);
        let (s1, c1) = q[1].sin_cos();
        let (s12, c12) = (q[1] + q[2]).sin_cos();
        let w1 = v[1] * v[1];
        let w12 = (v[1] + v[2]) * (v[1] + v[2]);
        [
            PointMass {
                mass: self.p.base_mass,
                jacobian: DMatrix::from_row_slice(2, 3, &[0.0, 0.0, 0.0, 1.0, 0.0, 0.0]),
                bias: [0.0, 0.0],
            },
            PointMass {
                mass: self.p.knee_mass,
                jacobian: DMatrix::from_row_slice(2, 3, &[0.0, l1 * c1, 0.0, 1.0, l1 * s1, 0.0]),
                bias: [-l1 * s1 * w1, l1 * c1 * w1],
            },
            PointMass {
                mass: self.p.foot_mass,
                jacobian: DMatrix::from_row_slice(
                    2,
                    3,
                    &[
                        0.0,
                        l1 * c1 + l2 * c12,
                        l2 * c12,
                        1.0,
                        l1 * s1 + l2 * s12,
                        l2 * s12,
                    ],
                ),
                bias: [
                    -l1 * s1 * w1 - l2 * s12 * w12,
                    l1 * c1 * w1 + l2 * c12 * w12,
                ],
            },
        ]
    }

    pub fn mass_and_bias(
        &self,
        q: &DVector<f64>,
        v: &DVector<f64>,
    ) -> (DMatrix<f64>, DVector<f64>) {
        let (mut m, h) = assemble(&self.point_masses(q, v), 3, self.p.gravity);
        m[(1, 1)] += self.p.armature;
        m[(2, 2)] += self.p.armature;
        (m, h)
    }

    pub fn step_with_impulses(
        &self,
        x: &DVector<f64>,
        u: &DVector<f64>,
    ) -> Result<(DVector<f64>, ContactImpulses), DynamicsError> {
        check_dims(self, x, u)?;
        let dt = self.p.dt;
        let (q, v) = split_state(x, 3);
        let (m, h) = self.mass_and_bias(&q, &v);
        let tau = DVector::from_vec(vec![-h[0], u[0] - h[1], u[1] - h[2]]);
        let chol = Cholesky::new(m.clone()).ok_or(DynamicsError::SingularMass)?;
        let vf = &v + chol.solve(&tau) * dt;
        let foot_jac = self.point_masses(&q, &v)[2].jacobian.clone();
        let point = ContactPoint {
            normal: foot_jac.row(1).transpose(),
            tangent: foot_jac.row(0).transpose(),
            gap: self.foot(&q).1,
            friction: self.p.friction,
        };
        let impulses = contact_velocity(&m, vf, &[point], dt, &self.contact)?;
        let q_next = q + &impulses.velocity * dt;
        Ok((join_state(&q_next, &impulses.velocity), impulses))
    }
}

impl Dynamics for Hopper2d {
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
