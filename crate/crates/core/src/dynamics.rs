//! Discrete-time dynamics models `x' = f(x, u)` and their derivatives.

use std::sync::atomic::{AtomicU64, Ordering};

use nalgebra::{DMatrix, DVector};

use crate::error::DynamicsError;

/// Relative step used for central finite differences.
pub const FD_RELATIVE_STEP: f64 = 1e-6;

/// A discrete-time dynamics model.
///
/// Implementations are pure: `step` has no hidden state and repeated calls
/// with identical inputs return bit-identical outputs. Models are shared
/// between threads by the smoothing estimators.
pub trait Dynamics: Send + Sync {
    fn state_dim(&self) -> usize;
    fn control_dim(&self) -> usize;
    /// Integration time step in seconds.
    fn dt(&self) -> f64;

    fn step(&self, x: &DVector<f64>, u: &DVector<f64>) -> Result<DVector<f64>, DynamicsError>;

    /// Jacobians `(f_x, f_u)` at `(x, u)`.
    ///
    /// The default uses central finite differences, which is what the
    /// nonsmooth models rely on away from kinks.
    fn jacobians(
        &self,
        x: &DVector<f64>,
        u: &DVector<f64>,
    ) -> Result<(DMatrix<f64>, DMatrix<f64>), DynamicsError> {
        finite_diff_jacobians(self, x, u, FD_RELATIVE_STEP)
    }

    /// Cost of one `jacobians` call, in step-evaluation equivalents.
    fn jacobian_cost(&self) -> u64 {
        2 * (self.state_dim() + self.control_dim()) as u64
    }

    /// Hessians of each output component with respect to the stacked input
    /// `z = (x, u)`, or `None` when the model does not supply them (the
    /// solver then runs in Gauss-Newton mode).
    fn second_order(&self, _x: &DVector<f64>, _u: &DVector<f64>) -> Option<Vec<DMatrix<f64>>> {
        None
    }
}

pub(crate) fn check_dims<D: Dynamics + ?Sized>(
    model: &D,
    x: &DVector<f64>,
    u: &DVector<f64>,
) -> Result<(), DynamicsError> {
    if x.len() != model.state_dim() {
        return Err(DynamicsError::Dimension {
            what: "state",
            expected: model.state_dim(),
            got: x.len(),
        });
    }
    if u.len() != model.control_dim() {
        return Err(DynamicsError::Dimension {
            what: "control",
            expected: model.control_dim(),
            got: u.len(),
        });
    }
    Ok(())
}

/// Central finite-difference Jacobians, column by column.
///
/// The step for coordinate `i` is `h * max(1, |z_i|)`.
pub fn finite_diff_jacobians<D: Dynamics + ?Sized>(
    model: &D,
    x: &DVector<f64>,
    u: &DVector<f64>,
    h: f64,
) -> Result<(DMatrix<f64>, DMatrix<f64>), DynamicsError> {
    if !(h > 0.0) {
        return Err(DynamicsError::Invalid(format!(
            "finite-difference step must be positive, got {h}"
        )));
    }
    check_dims(model, x, u)?;
    let nx = x.len();
    let nu = u.len();
    let mut fx = DMatrix::zeros(nx, nx);
    let mut fu = DMatrix::zeros(nx, nu);

    let mut xp = x.clone();
    for i in 0..nx {
        let step = h * x[i].abs().max(1.0);
        xp[i] = x[i] + step;
        let plus = model.step(&xp, u)?;
        xp[i] = x[i] - step;
        let minus = model.step(&xp, u)?;
        xp[i] = x[i];
        fx.set_column(i, &((plus - minus) / (2.0 * step)));
    }
    let mut up = u.clone();
    for j in 0..nu {
        let step = h * u[j].abs().max(1.0);
        up[j] = u[j] + step;
        let plus = model.step(x, &up)?;
        up[j] = u[j] - step;
        let minus = model.step(x, &up)?;
        up[j] = u[j];
        fu.set_column(j, &((plus - minus) / (2.0 * step)));
    }
    Ok((fx, fu))
}

/// Linear time-invariant dynamics `x' = A x + B u`.
#[derive(Debug, Clone)]
pub struct LinearDynamics {
    a: DMatrix<f64>,
    b: DMatrix<f64>,
    dt: f64,
}

impl LinearDynamics {
    pub fn new(a: DMatrix<f64>, b: DMatrix<f64>, dt: f64) -> Result<Self, DynamicsError> {
        if !a.is_square() || a.nrows() != b.nrows() || b.ncols() == 0 {
            return Err(DynamicsError::Invalid(format!(
                "incompatible shapes A {}x{}, B {}x{}",
                a.nrows(),
                a.ncols(),
                b.nrows(),
                b.ncols()
            )));
        }
        Ok(Self { a, b, dt })
    }

    /// Double integrator `x1' = x2, x2' = u` under semi-implicit Euler.
    pub fn double_integrator(dt: f64) -> Self {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, dt, 0.0, 1.0]);
        let b = DMatrix::from_row_slice(2, 1, &[dt * dt, dt]);
        Self { a, b, dt }
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn b(&self) -> &DMatrix<f64> {
        &self.b
    }
}

impl Dynamics for LinearDynamics {
    fn state_dim(&self) -> usize {
        self.a.nrows()
    }

    fn control_dim(&self) -> usize {
        self.b.ncols()
    }

    fn dt(&self) -> f64 {
        self.dt
    }

    fn step(&self, x: &DVector<f64>, u: &DVector<f64>) -> Result<DVector<f64>, DynamicsError> {
        check_dims(self, x, u)?;
        Ok(&self.a * x + &self.b * u)
    }

    fn jacobians(
        &self,
        x: &DVector<f64>,
        u: &DVector<f64>,
    ) -> Result<(DMatrix<f64>, DMatrix<f64>), DynamicsError> {
        check_dims(self, x, u)?;
        Ok((self.a.clone(), self.b.clone()))
    }

    fn jacobian_cost(&self) -> u64 {
        (self.state_dim() + self.control_dim()) as u64
    }

    fn second_order(&self, _x: &DVector<f64>, _u: &DVector<f64>) -> Option<Vec<DMatrix<f64>>> {
        let n = self.state_dim() + self.control_dim();
        Some(vec![DMatrix::zeros(n, n); self.state_dim()])
    }
}

/// Wraps a model and counts step evaluations (Jacobians are charged
/// [`Dynamics::jacobian_cost`] each).
pub struct CountingDynamics<'a> {
    inner: &'a dyn Dynamics,
    count: AtomicU64,
}

impl<'a> CountingDynamics<'a> {
    pub fn new(inner: &'a dyn Dynamics) -> Self {
        Self {
            inner,
            count: AtomicU64::new(0),
        }
    }

    pub fn evaluations(&self) -> u64 {
        self.count.load(Ordering::Relaxed)
    }

    pub fn add(&self, n: u64) {
        self.count.fetch_add(n, Ordering::Relaxed);
    }
}

impl Dynamics for CountingDynamics<'_> {
    fn state_dim(&self) -> usize {
        self.inner.state_dim()
    }

    fn control_dim(&self) -> usize {
        self.inner.control_dim()
    }

    fn dt(&self) -> f64 {
        self.inner.dt()
    }

    fn step(&self, x: &DVector<f64>, u: &DVector<f64>) -> Result<DVector<f64>, DynamicsError> {
        self.count.fetch_add(1, Ordering::Relaxed);
        self.inner.step(x, u)
    }

    fn jacobians(
        &self,
        x: &DVector<f64>,
        u: &DVector<f64>,
    ) -> Result<(DMatrix<f64>, DMatrix<f64>), DynamicsError> {
        self.count
            .fetch_add(self.inner.jacobian_cost(), Ordering::Relaxed);
        self.inner.jacobians(x, u)
    }

    fn jacobian_cost(&self) -> u64 {
        self.inner.jacobian_cost()
    }

    fn second_order(&self, x: &DVector<f64>, u: &DVector<f64>) -> Option<Vec<DMatrix<f64>>> {
        self.inner.second_order(x, u)
    }
}
