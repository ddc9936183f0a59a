//! Running and terminal cost stages with first and second derivatives.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

/// Derivatives of a running cost `l_t(x, u)`.
#[derive(Debug, Clone, PartialEq)]
pub struct StageDerivatives {
    pub lx: DVector<f64>,
    pub lu: DVector<f64>,
    pub lxx: DMatrix<f64>,
    /// `n_u x n_x`.
    pub lux: DMatrix<f64>,
    pub luu: DMatrix<f64>,
}

impl StageDerivatives {
    pub fn zeros(nx: usize, nu: usize) -> Self {
        Self {
            lx: DVector::zeros(nx),
            lu: DVector::zeros(nu),
            lxx: DMatrix::zeros(nx, nx),
            lux: DMatrix::zeros(nu, nx),
            luu: DMatrix::zeros(nu, nu),
        }
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            lx: &self.lx * c,
            lu: &self.lu * c,
            lxx: &self.lxx * c,
            lux: &self.lux * c,
            luu: &self.luu * c,
        }
    }
}

/// Derivatives of a terminal cost `l_N(x)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TerminalDerivatives {
    pub lx: DVector<f64>,
    pub lxx: DMatrix<f64>,
}

pub trait RunningCost: Send + Sync {
    fn value(&self, x: &DVector<f64>, u: &DVector<f64>) -> f64;

    /// Defaults to finite differences of [`RunningCost::value`].
    fn derivatives(&self, x: &DVector<f64>, u: &DVector<f64>) -> StageDerivatives {
        fd_running_derivatives(self, x, u)
    }
}

pub trait TerminalCost: Send + Sync {
    fn value(&self, x: &DVector<f64>) -> f64;

    /// Defaults to finite differences of [`TerminalCost::value`].
    fn derivatives(&self, x: &DVector<f64>) -> TerminalDerivatives {
        fd_terminal_derivatives(self, x)
    }
}

/// `l_x, l_u, l_xx, l_ux, l_uu` of a running cost.
pub fn cost_stage_derivatives(
    cost: &dyn RunningCost,
    x: &DVector<f64>,
    u: &DVector<f64>,
) -> StageDerivatives {
    cost.derivatives(x, u)
}

const FD_GRAD_STEP: f64 = 1e-6;
const FD_HESS_STEP: f64 = 1e-4;

fn fd_gradient(f: &dyn Fn(&DVector<f64>) -> f64, z: &DVector<f64>) -> DVector<f64> {
    let mut g = DVector::zeros(z.len());
    let mut zp = z.clone();
    for i in 0..z.len() {
        let h = FD_GRAD_STEP * z[i].abs().max(1.0);
        zp[i] = z[i] + h;
        let fp = f(&zp);
        zp[i] = z[i] - h;
        let fm = f(&zp);
        zp[i] = z[i];
        g[i] = (fp - fm) / (2.0 * h);
    }
    g
}

fn fd_hessian(f: &dyn Fn(&DVector<f64>) -> f64, z: &DVector<f64>) -> DMatrix<f64> {
    let n = z.len();
    let mut hess = DMatrix::zeros(n, n);
    let mut zp = z.clone();
    let steps: Vec<f64> = z.iter().map(|v| FD_HESS_STEP * v.abs().max(1.0)).collect();
    let f0 = f(z);
    for i in 0..n {
        let hi = steps[i];
        zp[i] = z[i] + hi;
        let fp = f(&zp);
        zp[i] = z[i] - hi;
        let fm = f(&zp);
        zp[i] = z[i];
        hess[(i, i)] = (fp - 2.0 * f0 + fm) / (hi * hi);
        for j in 0..i {
            let hj = steps[j];
            let mut corner = |si: f64, sj: f64| {
                zp[i] = z[i] + si * hi;
                zp[j] = z[j] + sj * hj;
                let v = f(&zp);
                zp[i] = z[i];
                zp[j] = z[j];
                v
            };
            let v = (corner(1.0, 1.0) - corner(1.0, -1.0) - corner(-1.0, 1.0) + corner(-1.0, -1.0))
                / (4.0 * hi * hj);
            hess[(i, j)] = v;
            hess[(j, i)] = v;
        }
    }
    hess
}

/// Finite-difference fallback for user-supplied running costs.
pub fn fd_running_derivatives<C: RunningCost + ?Sized>(
    cost: &C,
    x: &DVector<f64>,
    u: &DVector<f64>,
) -> StageDerivatives {
    let nx = x.len();
    let nu = u.len();
    let z = DVector::from_iterator(nx + nu, x.iter().chain(u.iter()).copied());
    let f = |z: &DVector<f64>| {
        let xs = z.rows(0, nx).into_owned();
        let us = z.rows(nx, nu).into_owned();
        cost.value(&xs, &us)
    };
    let g = fd_gradient(&f, &z);
    let h = fd_hessian(&f, &z);
    StageDerivatives {
        lx: g.rows(0, nx).into_owned(),
        lu: g.rows(nx, nu).into_owned(),
        lxx: h.view((0, 0), (nx, nx)).into_owned(),
        lux: h.view((nx, 0), (nu, nx)).into_owned(),
        luu: h.view((nx, nx), (nu, nu)).into_owned(),
    }
}

/// Finite-difference fallback for user-supplied terminal costs.
pub fn fd_terminal_derivatives<C: TerminalCost + ?Sized>(
    cost: &C,
    x: &DVector<f64>,
) -> TerminalDerivatives {
    let f = |z: &DVector<f64>| cost.value(z);
    TerminalDerivatives {
        lx: fd_gradient(&f, x),
        lxx: fd_hessian(&f, x),
    }
}

/// A differentiable task-space map `p(x)`, e.g. an end-effector position.
pub trait TaskMap: Send + Sync {
    fn output_dim(&self) -> usize;
    fn eval(&self, x: &DVector<f64>) -> DVector<f64>;
    /// `output_dim x n_x`.
    fn jacobian(&self, x: &DVector<f64>) -> DMatrix<f64>;
    /// One `n_x x n_x` Hessian per output component.
    fn hessians(&self, x: &DVector<f64>) -> Vec<DMatrix<f64>>;
}

/// `p(x) = S x` for a fixed selection/weighting matrix `S`.
#[derive(Debug, Clone)]
pub struct LinearTaskMap {
    pub selection: DMatrix<f64>,
}

impl LinearTaskMap {
    pub fn new(selection: DMatrix<f64>) -> Self {
        Self { selection }
    }

    /// Selects the listed state coordinates.
    pub fn select(nx: usize, coords: &[usize]) -> Self {
        let mut s = DMatrix::zeros(coords.len(), nx);
        for (row, &c) in coords.iter().enumerate() {
            s[(row, c)] = 1.0;
        }
        Self { selection: s }
    }
}

impl TaskMap for LinearTaskMap {
    fn output_dim(&self) -> usize {
        self.selection.nrows()
    }

    fn eval(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.selection * x
    }

    fn jacobian(&self, _x: &DVector<f64>) -> DMatrix<f64> {
        self.selection.clone()
    }

    fn hessians(&self, x: &DVector<f64>) -> Vec<DMatrix<f64>> {
        vec![DMatrix::zeros(x.len(), x.len()); self.output_dim()]
    }
}

/// Concatenation of several task maps.
pub struct StackedTaskMap {
    parts: Vec<Arc<dyn TaskMap>>,
}

impl StackedTaskMap {
    pub fn new(parts: Vec<Arc<dyn TaskMap>>) -> Self {
        Self { parts }
    }
}

impl TaskMap for StackedTaskMap {
    fn output_dim(&self) -> usize {
        self.parts.iter().map(|p| p.output_dim()).sum()
    }

    fn eval(&self, x: &DVector<f64>) -> DVector<f64> {
        let values: Vec<f64> = self
            .parts
            .iter()
            .flat_map(|p| p.eval(x).iter().copied().collect::<Vec<_>>())
            .collect();
        DVector::from_vec(values)
    }

    fn jacobian(&self, x: &DVector<f64>) -> DMatrix<f64> {
        let mut j = DMatrix::zeros(self.output_dim(), x.len());
        let mut row = 0;
        for p in &self.parts {
            let jp = p.jacobian(x);
            j.view_mut((row, 0), (jp.nrows(), jp.ncols()))
                .copy_from(&jp);
            row += jp.nrows();
        }
        j
    }

    fn hessians(&self, x: &DVector<f64>) -> Vec<DMatrix<f64>> {
        self.parts.iter().flat_map(|p| p.hessians(x)).collect()
    }
}

/// `J = w_p ||p(x_N) - p*||^2 + sum_t w_u ||u_t - u*||^2`.
///
/// Used as running cost it contributes the control term; used as terminal
/// cost it contributes the goal term.
pub struct QuadraticGoalCost {
    map: Arc<dyn TaskMap>,
    target: DVector<f64>,
    control_ref: DVector<f64>,
    w_p: f64,
    w_u: f64,
}

impl QuadraticGoalCost {
    pub fn new(
        map: Arc<dyn TaskMap>,
        target: DVector<f64>,
        control_ref: DVector<f64>,
        w_p: f64,
        w_u: f64,
    ) -> Result<Self, String> {
        if !(w_p >= 0.0 && w_u >= 0.0) {
            return Err(format!(
                "weights must be nonnegative (w_p={w_p}, w_u={w_u})"
            ));
        }
        if target.len() != map.output_dim() {
            return Err(format!(
                "target has dimension {} but the task map outputs {}",
                target.len(),
                map.output_dim()
            ));
        }
        Ok(Self {
            map,
            target,
            control_ref,
            w_p,
            w_u,
        })
    }

    pub fn task_map(&self) -> &Arc<dyn TaskMap> {
        &self.map
    }

    pub fn target(&self) -> &DVector<f64> {
        &self.target
    }

    /// `||p(x) - p*||`.
    pub fn goal_distance(&self, x: &DVector<f64>) -> f64 {
        (self.map.eval(x) - &self.target).norm()
    }
}

impl RunningCost for QuadraticGoalCost {
    fn value(&self, _x: &DVector<f64>, u: &DVector<f64>) -> f64 {
        self.w_u * (u - &self.control_ref).norm_squared()
    }

    fn derivatives(&self, x: &DVector<f64>, u: &DVector<f64>) -> StageDerivatives {
        let nu = u.len();
        let mut d = StageDerivatives::zeros(x.len(), nu);
        d.lu = (u - &self.control_ref) * (2.0 * self.w_u);
        d.luu = DMatrix::identity(nu, nu) * (2.0 * self.w_u);
        d
    }
}

impl TerminalCost for QuadraticGoalCost {
    fn value(&self, x: &DVector<f64>) -> f64 {
        self.w_p * (self.map.eval(x) - &self.target).norm_squared()
    }

    fn derivatives(&self, x: &DVector<f64>) -> TerminalDerivatives {
        let r = self.map.eval(x) - &self.target;
        let jac = self.map.jacobian(x);
        let mut lxx = jac.transpose() * &jac;
        for (ri, hi) in r.iter().zip(self.map.hessians(x)) {
            lxx += hi * *ri;
        }
        TerminalDerivatives {
            lx: jac.transpose() * &r * (2.0 * self.w_p),
            lxx: lxx * (2.0 * self.w_p),
        }
    }
}

/// A cost stage multiplied by a positive constant.
pub struct ScaledCost<C: ?Sized> {
    pub scale: f64,
    pub inner: Arc<C>,
}

impl<C: RunningCost + ?Sized> RunningCost for ScaledCost<C> {
    fn value(&self, x: &DVector<f64>, u: &DVector<f64>) -> f64 {
        self.scale * self.inner.value(x, u)
    }

    fn derivatives(&self, x: &DVector<f64>, u: &DVector<f64>) -> StageDerivatives {
        self.inner.derivatives(x, u).scaled(self.scale)
    }
}

impl<C: TerminalCost + ?Sized> TerminalCost for ScaledCost<C> {
    fn value(&self, x: &DVector<f64>) -> f64 {
        self.scale * self.inner.value(x)
    }

    fn derivatives(&self, x: &DVector<f64>) -> TerminalDerivatives {
        let d = self.inner.derivatives(x);
        TerminalDerivatives {
            lx: d.lx * self.scale,
            lxx: d.lxx * self.scale,
        }
    }
}

/// Quadratic running cost `x' Q x + u' R u` (and terminal `x' Qf x`).
#[derive(Debug, Clone)]
pub struct QuadraticCost {
    pub q: DMatrix<f64>,
    pub r: DMatrix<f64>,
}

impl RunningCost for QuadraticCost {
    fn value(&self, x: &DVector<f64>, u: &DVector<f64>) -> f64 {
        (x.transpose() * &self.q * x)[0] + (u.transpose() * &self.r * u)[0]
    }

    fn derivatives(&self, x: &DVector<f64>, u: &DVector<f64>) -> StageDerivatives {
        let qs = &self.q + self.q.transpose();
        let rs = &self.r + self.r.transpose();
        StageDerivatives {
            lx: &qs * x,
            lu: &rs * u,
            lxx: qs,
            lux: DMatrix::zeros(u.len(), x.len()),
            luu: rs,
        }
    }
}

impl TerminalCost for QuadraticCost {
    fn value(&self, x: &DVector<f64>) -> f64 {
        (x.transpose() * &self.q * x)[0]
    }

    fn derivatives(&self, x: &DVector<f64>) -> TerminalDerivatives {
        let qs = &self.q + self.q.transpose();
        TerminalDerivatives {
            lx: &qs * x,
            lxx: qs,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Circle;

    impl TaskMap for Circle {
        fn output_dim(&self) -> usize {
            2
        }
        fn eval(&self, x: &DVector<f64>) -> DVector<f64> {
            DVector::from_vec(vec![x[0].sin(), -x[0].cos()])
        }
        fn jacobian(&self, x: &DVector<f64>) -> DMatrix<f64> {
            DMatrix::from_row_slice(2, 2, &[x[0].cos(), 0.0, x[0].sin(), 0.0])
        }
        fn hessians(&self, x: &DVector<f64>) -> Vec<DMatrix<f64>> {
            vec![
                DMatrix::from_row_slice(2, 2, &[-x[0].sin(), 0.0, 0.0, 0.0]),
                DMatrix::from_row_slice(2, 2, &[x[0].cos(), 0.0, 0.0, 0.0]),
            ]
        }
    }

    fn goal_cost(w_p: f64, w_u: f64) -> QuadraticGoalCost {
        QuadraticGoalCost::new(
            Arc::new(Circle),
            DVector::from_vec(vec![0.0, 1.0]),
            DVector::from_element(1, 0.0),
            w_p,
            w_u,
        )
        .unwrap()
    }

    #[test]
    fn control_term_at_reference() {
        let c = goal_cost(2.0, 0.5);
        let d = RunningCost::derivatives(&c, &DVector::zeros(2), &DVector::zeros(1));
        assert_eq!(d.lu[0], 0.0);
        assert_eq!(d.luu[(0, 0)], 1.0);
    }

    #[test]
    fn zero_weights_give_zero_derivatives() {
        let c = goal_cost(0.0, 0.0);
        let x = DVector::from_vec(vec![0.4, 1.0]);
        let d = TerminalCost::derivatives(&c, &x);
        assert_eq!(d.lx.amax(), 0.0);
        assert_eq!(d.lxx.amax(), 0.0);
        let s = RunningCost::derivatives(&c, &x, &DVector::from_element(1, 3.0));
        assert_eq!(s.lu.amax(), 0.0);
        assert_eq!(s.luu.amax(), 0.0);
    }

    #[test]
    fn terminal_gradient_matches_finite_differences() {
        let c = goal_cost(2.0, 0.1);
        for &th in &[0.3, 1.7, -2.5] {
            let x = DVector::from_vec(vec![th, 0.2]);
            let analytic = TerminalCost::derivatives(&c, &x);
            let fd = fd_terminal_derivatives(&c, &x);
            assert!((&analytic.lx - &fd.lx).amax() < 1e-6 * analytic.lx.amax().max(1.0));
            assert!((&analytic.lxx - &fd.lxx).amax() < 1e-5 * analytic.lxx.amax().max(1.0));
        }
    }

    #[test]
    fn goal_cost_vanishes_at_target() {
        let c = goal_cost(2.0, 1.0);
        let x = DVector::from_vec(vec![std::f64::consts::PI, 0.0]);
        assert!(TerminalCost::value(&c, &x) < 1e-30);
        assert_eq!(RunningCost::value(&c, &x, &DVector::zeros(1)), 0.0);
    }

    #[test]
    fn stacked_map_concatenates() {
        let m = StackedTaskMap::new(vec![
            Arc::new(Circle),
            Arc::new(LinearTaskMap::select(2, &[1])),
        ]);
        let x = DVector::from_vec(vec![0.0, 3.0]);
        assert_eq!(m.output_dim(), 3);
        assert_eq!(m.eval(&x).as_slice(), &[0.0, -1.0, 3.0]);
        assert_eq!(m.jacobian(&x)[(2, 1)], 1.0);
        assert_eq!(m.hessians(&x).len(), 3);
    }
}
