//! Velocity-level unilateral contact with Coulomb friction.
//!
//! A planar contact contributes two rows to the contact Jacobian, normal
//! first then tangential. Impulses `λ` enter the velocity update as
//! `M v⁺ = M v_f + Jᵀ λ` and satisfy, per contact,
//!
//! * Signorini: `0 ≤ λ_N ⊥ c_N - c*_N ≥ 0`,
//! * friction cone: `|λ_T| ≤ μ λ_N`, with `λ_T` opposing the sliding
//!   velocity when the cone boundary is reached,
//!
//! where `c = J v⁺` is the contact-space velocity. The problem is solved by
//! projected Gauss-Seidel over the Delassus operator `G = J M⁻¹ Jᵀ`.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::ContactError;

/// Rows per planar contact (normal, tangential).
pub const ROWS_PER_CONTACT: usize = 2;

#[derive(Debug, Clone, PartialEq)]
pub struct ContactProblem {
    /// Joint-space inertia `M` (`n_v x n_v`, SPD).
    pub mass: DMatrix<f64>,
    /// Free velocity `v_f`.
    pub free_velocity: DVector<f64>,
    /// Contact Jacobian (`2 n_c x n_v`), rows grouped per contact, normal first.
    pub jacobian: DMatrix<f64>,
    /// Reference contact velocity `c*` (one entry per row).
    pub reference: DVector<f64>,
    /// Friction coefficient per contact.
    pub friction: Vec<f64>,
}

impl ContactProblem {
    pub fn new(
        mass: DMatrix<f64>,
        free_velocity: DVector<f64>,
        jacobian: DMatrix<f64>,
        reference: DVector<f64>,
        friction: Vec<f64>,
    ) -> Result<Self, ContactError> {
        let p = Self {
            mass,
            free_velocity,
            jacobian,
            reference,
            friction,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn n_contacts(&self) -> usize {
        self.friction.len()
    }

    pub fn n_velocities(&self) -> usize {
        self.mass.nrows()
    }

    fn validate(&self) -> Result<(), ContactError> {
        let nv = self.mass.nrows();
        let m = ROWS_PER_CONTACT * self.friction.len();
        if !self.mass.is_square() || self.free_velocity.len() != nv {
            return Err(ContactError::Malformed(format!(
                "mass is {}x{}, free velocity has {} entries",
                self.mass.nrows(),
                self.mass.ncols(),
                self.free_velocity.len()
            )));
        }
        if self.jacobian.nrows() != m || self.jacobian.ncols() != nv || self.reference.len() != m {
            return Err(ContactError::Malformed(format!(
                "{} contacts need a {m}x{nv} Jacobian and {m} reference entries, got {}x{} and {}",
                self.friction.len(),
                self.jacobian.nrows(),
                self.jacobian.ncols(),
                self.reference.len()
            )));
        }
        if self
            .friction
            .iter()
            .any(|mu| !(*mu >= 0.0) || !mu.is_finite())
        {
            return Err(ContactError::Malformed(
                "friction coefficients must be finite and >= 0".into(),
            ));
        }
        let scale = self.mass.amax().max(1.0);
        if (&self.mass - self.mass.transpose()).amax() > 1e-12 * scale {
            return Err(ContactError::SingularMass);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContactImpulses {
    /// `λ`, one normal and one tangential entry per contact.
    pub impulses: DVector<f64>,
    /// Post-impact velocity `v⁺ = v_f + M⁻¹ Jᵀ λ`.
    pub velocity: DVector<f64>,
    /// Contact-space velocity `J v⁺`.
    pub contact_velocity: DVector<f64>,
    pub iterations: usize,
    /// Worst per-contact complementarity/cone residual at exit.
    pub residual: f64,
}

impl ContactImpulses {
    pub fn normal(&self, contact: usize) -> f64 {
        self.impulses[ROWS_PER_CONTACT * contact]
    }

    pub fn tangential(&self, contact: usize) -> f64 {
        self.impulses[ROWS_PER_CONTACT * contact + 1]
    }

    pub fn total_normal(&self) -> f64 {
        self.impulses.iter().step_by(ROWS_PER_CONTACT).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PgsSettings {
    pub max_iterations: usize,
    pub tolerance: f64,
}

impl Default for PgsSettings {
    fn default() -> Self {
        Self {
            max_iterations: 200,
            tolerance: 1e-10,
        }
    }
}

fn cholesky(mass: &DMatrix<f64>) -> Result<Cholesky<f64, Dyn>, ContactError> {
    Cholesky::new(mass.clone()).ok_or(ContactError::SingularMass)
}

/// `v_f = v + M⁻¹ (τ - C v - g) dt`, with `forces = τ - C v - g` already
/// evaluated at the start of the step.
pub fn free_velocity(
    mass: &DMatrix<f64>,
    velocity: &DVector<f64>,
    forces: &DVector<f64>,
    dt: f64,
) -> Result<DVector<f64>, ContactError> {
    if !(dt > 0.0) {
        return Err(ContactError::Malformed(format!(
            "dt must be positive, got {dt}"
        )));
    }
    if !mass.is_square() || mass.nrows() != velocity.len() || forces.len() != velocity.len() {
        return Err(ContactError::Malformed(
            "dimension mismatch in free velocity".into(),
        ));
    }
    let chol = cholesky(mass)?;
    Ok(velocity + chol.solve(forces) * dt)
}

/// Reference normal velocity `c*_N` that removes a penetration of the given
/// depth over `1/erp` steps. Zero when not penetrating.
pub fn baumgarte_reference(penetration_depth: f64, dt: f64, erp: f64) -> f64 {
    debug_assert!((0.0..=1.0).contains(&erp), "erp must lie in [0, 1]");
    if penetration_depth > 0.0 {
        erp * penetration_depth / dt
    } else {
        0.0
    }
}

struct Delassus {
    g: DMatrix<f64>,
    b: DVector<f64>,
    minv_jt: DMatrix<f64>,
}

fn delassus(problem: &ContactProblem) -> Result<Delassus, ContactError> {
    let chol = cholesky(&problem.mass)?;
    let jt = problem.jacobian.transpose();
    let minv_jt = chol.solve(&jt);
    let g = &problem.jacobian * &minv_jt;
    let b = &problem.jacobian * &problem.free_velocity - &problem.reference;
    Ok(Delassus { g, b, minv_jt })
}

fn row_dot(g: &DMatrix<f64>, row: usize, lambda: &DVector<f64>) -> f64 {
    let mut s = 0.0;
    for (k, l) in lambda.iter().enumerate() {
        s += g[(row, k)] * l;
    }
    s
}

/// Per-contact residuals of the natural map, `(Signorini, friction)`.
fn residuals(
    problem: &ContactProblem,
    d: &Delassus,
    lambda: &DVector<f64>,
    frictionless: bool,
) -> (f64, usize) {
    let c = &d.g * lambda + &d.b;
    let mut worst = 0.0;
    let mut worst_contact = 0;
    for (i, mu) in problem.friction.iter().enumerate() {
        let n = ROWS_PER_CONTACT * i;
        let t = n + 1;
        let r_n = lambda[n].min(c[n]).abs();
        let bound = if frictionless {
            0.0
        } else {
            mu * lambda[n].max(0.0)
        };
        let r_t = (lambda[t] - (lambda[t] - c[t]).clamp(-bound, bound)).abs();
        let r = r_n.max(r_t);
        if r > worst {
            worst = r;
            worst_contact = i;
        }
    }
    (worst, worst_contact)
}

fn pgs(
    problem: &ContactProblem,
    settings: PgsSettings,
    frictionless: bool,
    strict: bool,
) -> Result<ContactImpulses, ContactError> {
    problem.validate()?;
    let d = delassus(problem)?;
    let m = problem.jacobian.nrows();
    let mut lambda = DVector::zeros(m);
    let mut residual = f64::INFINITY;
    let mut worst_contact = 0;
    let mut sweeps = 0;

    if m > 0 {
        for sweep in 1..=settings.max_iterations {
            sweeps = sweep;
            for (i, mu) in problem.friction.iter().enumerate() {
                let n = ROWS_PER_CONTACT * i;
                let t = n + 1;
                let g_nn = d.g[(n, n)];
                if g_nn <= 0.0 {
                    return Err(ContactError::Malformed(format!(
                        "contact {i} has a degenerate normal direction"
                    )));
                }
                let c_n = row_dot(&d.g, n, &lambda) + d.b[n];
                lambda[n] = (lambda[n] - c_n / g_nn).max(0.0);

                let bound = if frictionless { 0.0 } else { mu * lambda[n] };
                let g_tt = d.g[(t, t)];
                if g_tt > 0.0 {
                    let c_t = row_dot(&d.g, t, &lambda) + d.b[t];
                    lambda[t] = (lambda[t] - c_t / g_tt).clamp(-bound, bound);
                } else {
                    lambda[t] = 0.0;
                }
            }
            let (r, worst) = residuals(problem, &d, &lambda, frictionless);
            residual = r;
            worst_contact = worst;
            if residual < settings.tolerance {
                break;
            }
        }
        if strict && !(residual < settings.tolerance) {
            return Err(ContactError::NotConverged {
                iterations: sweeps,
                residual,
                contact: worst_contact,
            });
        }
    } else {
        residual = 0.0;
    }

    let velocity = &problem.free_velocity + &d.minv_jt * &lambda;
    let contact_velocity = &problem.jacobian * &velocity;
    Ok(ContactImpulses {
        impulses: lambda,
        velocity,
        contact_velocity,
        iterations: sweeps,
        residual,
    })
}

/// Frictionless unilateral contact (tangential impulses are zero).
pub fn solve_signorini(
    problem: &ContactProblem,
    settings: PgsSettings,
) -> Result<ContactImpulses, ContactError> {
    pgs(problem, settings, true, true)
}

/// Frictional contact: per-contact projected Gauss-Seidel, normal update
/// first, then the tangential impulse clamped to the friction cone.
pub fn solve_ncp_pgs(
    problem: &ContactProblem,
    max_iterations: usize,
    tolerance: f64,
) -> Result<ContactImpulses, ContactError> {
    pgs(
        problem,
        PgsSettings {
            max_iterations,
            tolerance,
        },
        false,
        true,
    )
}

/// Like [`solve_ncp_pgs`] but returns the last iterate when the sweep
/// budget runs out; check `residual` on the result.
///
/// A fixed number of sweeps is a continuous map of the problem data, which
/// keeps finite differences through the simulator meaningful even when
/// nearly parallel contacts slow convergence down.
pub fn solve_ncp_pgs_budgeted(
    problem: &ContactProblem,
    max_iterations: usize,
    tolerance: f64,
) -> Result<ContactImpulses, ContactError> {
    pgs(
        problem,
        PgsSettings {
            max_iterations,
            tolerance,
        },
        false,
        false,
    )
}

/// `0.5 vᵀ M v`.
pub fn kinetic_energy(mass: &DMatrix<f64>, v: &DVector<f64>) -> f64 {
    0.5 * (v.transpose() * mass * v)[0]
}

#[cfg(test)]
mod tests {
    use super::*;

    fn point(mass: f64, vf: [f64; 2], mu: f64) -> ContactProblem {
        ContactProblem::new(
            DMatrix::identity(2, 2) * mass,
            DVector::from_vec(vf.to_vec()),
            // normal is the second coordinate, tangent the first
            DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]),
            DVector::zeros(2),
            vec![mu],
        )
        .unwrap()
    }

    #[test]
    fn free_velocity_examples() {
        let m = DMatrix::identity(1, 1);
        let v = DVector::from_element(1, 0.3);
        let out = free_velocity(&m, &v, &DVector::zeros(1), 0.01).unwrap();
        assert_eq!(out, v);
        let out = free_velocity(&m, &v, &DVector::from_element(1, -9.81), 0.01).unwrap();
        assert!((out[0] - (0.3 - 0.0981)).abs() < 1e-15);

        let m = DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 4.0, 0.5]));
        let f = DVector::from_vec(vec![1.0, -3.0, 2.0]);
        let out = free_velocity(&m, &DVector::zeros(3), &f, 0.1).unwrap();
        for i in 0..3 {
            assert!((out[i] - f[i] / m[(i, i)] * 0.1).abs() < 1e-12);
        }
    }

    #[test]
    fn singular_mass_rejected() {
        let m = DMatrix::zeros(2, 2);
        assert_eq!(
            free_velocity(&m, &DVector::zeros(2), &DVector::zeros(2), 0.1),
            Err(ContactError::SingularMass)
        );
    }

    #[test]
    fn resting_contact_single() {
        let p = point(1.0, [0.0, -0.0981], 0.0);
        let s = solve_signorini(&p, PgsSettings::default()).unwrap();
        assert!((s.normal(0) - 0.0981).abs() < 1e-12);
        assert!(s.contact_velocity[0].abs() < 1e-12);
    }

    #[test]
    fn separating_contact_inactive() {
        let p = point(1.0, [0.0, 0.5], 0.0);
        let s = solve_signorini(&p, PgsSettings::default()).unwrap();
        assert_eq!(s.normal(0), 0.0);
        assert!((s.contact_velocity[0] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn two_independent_contacts_stack() {
        let mass = DMatrix::identity(4, 4);
        let mut j = DMatrix::zeros(4, 4);
        j[(0, 1)] = 1.0;
        j[(1, 0)] = 1.0;
        j[(2, 3)] = 1.0;
        j[(3, 2)] = 1.0;
        let vf = DVector::from_vec(vec![0.0, -0.2, 0.0, 0.4]);
        let p = ContactProblem::new(mass, vf, j, DVector::zeros(4), vec![0.0, 0.0]).unwrap();
        let s = solve_signorini(&p, PgsSettings::default()).unwrap();
        let a = solve_signorini(&point(1.0, [0.0, -0.2], 0.0), PgsSettings::default()).unwrap();
        let b = solve_signorini(&point(1.0, [0.0, 0.4], 0.0), PgsSettings::default()).unwrap();
        assert!((s.normal(0) - a.normal(0)).abs() < 1e-14);
        assert!((s.normal(1) - b.normal(0)).abs() < 1e-14);
    }

    #[test]
    fn zero_friction_reduces_to_signorini() {
        let p = point(2.0, [0.7, -0.3], 0.0);
        let a = solve_signorini(&p, PgsSettings::default()).unwrap();
        let b = solve_ncp_pgs(&p, 200, 1e-10).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn small_push_sticks_large_push_slides() {
        // resting with a small tangential velocity: friction absorbs it
        let stick = solve_ncp_pgs(&point(1.0, [0.01, -0.1], 0.5), 200, 1e-12).unwrap();
        assert!(stick.contact_velocity[1].abs() < 1e-12);
        assert!(stick.tangential(0).abs() < 0.5 * stick.normal(0));

        let slide = solve_ncp_pgs(&point(1.0, [1.0, -0.1], 0.5), 200, 1e-12).unwrap();
        assert!((slide.tangential(0).abs() - 0.5 * slide.normal(0)).abs() < 1e-12);
        assert!(slide.tangential(0) * slide.contact_velocity[1] <= 0.0);
        assert!(slide.contact_velocity[1] > 0.0);
    }

    #[test]
    fn baumgarte_examples() {
        assert_eq!(baumgarte_reference(0.0, 0.01, 0.2), 0.0);
        assert!((baumgarte_reference(1e-3, 0.01, 0.2) - 0.02).abs() < 1e-15);
        assert_eq!(baumgarte_reference(1e-3, 0.01, 0.0), 0.0);
        assert_eq!(baumgarte_reference(-0.5, 0.01, 0.2), 0.0);
    }

    #[test]
    fn malformed_problems_rejected() {
        let r = ContactProblem::new(
            DMatrix::identity(2, 2),
            DVector::zeros(2),
            DMatrix::zeros(3, 2),
            DVector::zeros(2),
            vec![0.1],
        );
        assert!(matches!(r, Err(ContactError::Malformed(_))));
        let r = ContactProblem::new(
            DMatrix::identity(2, 2),
            DVector::zeros(2),
            DMatrix::zeros(2, 2),
            DVector::zeros(2),
            vec![-0.1],
        );
        assert!(matches!(r, Err(ContactError::Malformed(_))));
    }

    #[test]
    fn non_convergence_reports_residual() {
        // strongly coupled normals with a single sweep allowed
        let mass = DMatrix::identity(2, 2);
        let j = DMatrix::from_row_slice(4, 2, &[1.0, 0.5, 0.0, 0.0, 0.5, 1.0, 0.0, 0.0]);
        let p = ContactProblem::new(
            mass,
            DVector::from_vec(vec![-1.0, -1.0]),
            j,
            DVector::zeros(4),
            vec![0.0, 0.0],
        )
        .unwrap();
        match solve_signorini(
            &p,
            PgsSettings {
                max_iterations: 1,
                tolerance: 1e-12,
            },
        ) {
            Err(ContactError::NotConverged {
                iterations,
                residual,
                ..
            }) => {
                assert_eq!(iterations, 1);
                assert!(residual > 1e-12);
            }
            other => panic!("expected non-convergence, got {other:?}"),
        }
        let s = solve_signorini(
            &p,
            PgsSettings {
                max_iterations: 500,
                tolerance: 1e-12,
            },
        )
        .unwrap();
        assert!(s.contact_velocity[0].abs() < 1e-10 && s.contact_velocity[2].abs() < 1e-10);
    }
}
