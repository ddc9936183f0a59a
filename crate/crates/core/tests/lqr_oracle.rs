use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rsoc_core::{
    solve, solve_adaptive, solve_zeroth, AdaptiveSchedule, LinearDynamics, NoiseConfig,
    QuadraticCost, SolveStatus, SolverSettings, TrajectoryProblem, ZerothOrderSettings,
};

struct Lqr {
    a: DMatrix<f64>,
    b: DMatrix<f64>,
    q: DMatrix<f64>,
    r: DMatrix<f64>,
}

fn random_lqr(seed: u64) -> Lqr {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut a = DMatrix::<f64>::from_fn(4, 4, |_, _| rng.random_range(-1.0..1.0));
    let rho = a
        .complex_eigenvalues()
        .iter()
        .map(|e| e.norm())
        .fold(0.0, f64::max);
    a *= 0.9 / rho;
    let b = DMatrix::<f64>::from_fn(4, 2, |_, _| rng.random_range(-1.0..1.0));
    let lq = DMatrix::<f64>::from_fn(4, 4, |_, _| rng.random_range(-1.0..1.0));
    let lr = DMatrix::<f64>::from_fn(2, 2, |_, _| rng.random_range(-1.0..1.0));
    Lqr {
        a,
        b,
        q: &lq * lq.transpose() + DMatrix::identity(4, 4) * 0.1,
        r: &lr * lr.transpose() + DMatrix::identity(2, 2) * 0.1,
    }
}

fn problem(l: &Lqr, n: usize, x0: DVector<f64>, scale: f64) -> TrajectoryProblem {
    let cost = Arc::new(QuadraticCost {
        q: &l.q * scale,
        r: &l.r * scale,
    });
    TrajectoryProblem::new(
        n,
        x0,
        cost.clone(),
        cost,
        Arc::new(LinearDynamics::new(l.a.clone(), l.b.clone(), 0.1).unwrap()),
    )
    .unwrap()
}

/// Backward Riccati recursion for `Σ xᵀQx + uᵀRu + x_NᵀQx_N`; returns
/// `P_0` and the gains with `u = -K x`.
fn riccati(l: &Lqr, n: usize) -> (DMatrix<f64>, Vec<DMatrix<f64>>) {
    let mut p = l.q.clone();
    let mut gains = Vec::with_capacity(n);
    for _ in 0..n {
        let bt_p = l.b.transpose() * &p;
        let k = (&l.r + &bt_p * &l.b).try_inverse().unwrap() * &bt_p * &l.a;
        p = &l.q + l.a.transpose() * &p * &l.a - l.a.transpose() * &p * &l.b * &k;
        p = (&p + p.transpose()) * 0.5;
        gains.push(k);
    }
    gains.reverse();
    (p, gains)
}

fn dare_gain(l: &Lqr) -> DMatrix<f64> {
    let (_, gains) = riccati(l, 2000);
    gains[0].clone()
}

fn x0() -> DVector<f64> {
    DVector::from_vec(vec![1.0, -0.5, 0.3, 2.0])
}

#[test]
fn random_lqr_reaches_riccati_optimum() {
    for seed in 0..5 {
        let l = random_lqr(seed);
        let n = 40;
        let p = problem(&l, n, x0(), 1.0);
        let report = solve(&p, &p.zero_controls(), &SolverSettings::default(), None).unwrap();
        let (p0, _) = riccati(&l, n);
        let optimum = (x0().transpose() * p0 * x0())[0];
        assert_eq!(report.status, SolveStatus::Converged);
        assert!(
            report.records.len() <= 2,
            "{} iterations",
            report.records.len()
        );
        let rel = (report.final_cost - optimum).abs() / optimum;
        assert!(rel < 1e-8, "seed {seed}: relative error {rel:e}");
    }
}

#[test]
fn first_gain_matches_algebraic_riccati() {
    let l = random_lqr(42);
    let p = problem(&l, 50, x0(), 1.0);
    let report = solve(&p, &p.zero_controls(), &SolverSettings::default(), None).unwrap();
    let k = dare_gain(&l);
    let err = (&report.feedback[0] + &k).amax();
    assert!(err < 1e-6, "gain error {err:e}");
}

#[test]
fn value_gradient_matches_finite_differences() {
    use rsoc_core::ddp::{backward_pass, linearize};
    use rsoc_core::smoothing::{NoiseConfig, SmoothedModel};

    let l = random_lqr(5);
    let n = 30;
    let optimum = |x: &DVector<f64>| {
        let p = problem(&l, n, x.clone(), 1.0);
        solve(&p, &p.zero_controls(), &SolverSettings::default(), None)
            .unwrap()
            .final_cost
    };
    // value gradient of the optimal policy: linearize along the optimum
    let p = problem(&l, n, x0(), 1.0);
    let report = solve(&p, &p.zero_controls(), &SolverSettings::default(), None).unwrap();
    let raw = NoiseConfig {
        eps: 0.0,
        ..NoiseConfig::new(1.0, 1, 0).unwrap()
    };
    let model = SmoothedModel::new(&**p.dynamics(), raw, 0, n);
    let d = linearize(&p, &model, &report.trajectory).unwrap();
    let vx = backward_pass(&d, 0.0, false).unwrap().vx0;
    for i in 0..4 {
        let h = 1e-5;
        let mut xp = x0();
        let mut xm = x0();
        xp[i] += h;
        xm[i] -= h;
        let fd = (optimum(&xp) - optimum(&xm)) / (2.0 * h);
        assert!(
            (vx[i] - fd).abs() <= 1e-4 * fd.abs().max(1.0),
            "component {i}: {} vs {fd}",
            vx[i]
        );
    }
}

#[test]
fn adaptive_solution_matches_ddp_once_noise_vanishes() {
    let l = random_lqr(17);
    let p = problem(&l, 30, x0(), 1.0);
    let settings = SolverSettings::default();
    let plain = solve(&p, &p.zero_controls(), &settings, None).unwrap();
    let schedule = AdaptiveSchedule {
        eps0: 0.1,
        eps_target: Some(1e-9),
        alpha0: 1e-2,
        alpha_target: Some(1e-9),
        rho: 10.0,
        gamma: 10.0,
        stall_budget: 3,
        max_total_iterations: Some(500),
    };
    let noise = NoiseConfig::new(0.1, 8, 3).unwrap();
    let adaptive = solve_adaptive(&p, &p.zero_controls(), &schedule, &settings, &noise).unwrap();
    assert!(adaptive.report.records.last().unwrap().eps < 1e-8);
    for (a, b) in adaptive.report.controls.iter().zip(&plain.controls) {
        assert!((a - b).amax() < 1e-6, "{a} vs {b}");
    }
}

#[test]
fn zeroth_order_descent_approaches_the_riccati_optimum() {
    let l = random_lqr(3);
    let n = 10;
    let p = problem(&l, n, x0(), 1.0);
    let (p0, _) = riccati(&l, n);
    let optimum = (x0().transpose() * p0 * x0())[0];
    let settings = ZerothOrderSettings {
        eps: 0.01,
        samples: 32,
        step_size: 2e-3,
        max_iterations: 2000,
        ..Default::default()
    };
    let report = solve_zeroth(&p, &p.zero_controls(), &settings).unwrap();
    let costs: Vec<f64> = report.records.iter().map(|r| r.cost).collect();
    let early = costs[..100].iter().sum::<f64>() / 100.0;
    let late = costs[costs.len() - 100..].iter().sum::<f64>() / 100.0;
    assert!(late < early && costs[costs.len() - 1] < costs[0]);
    assert!(
        report.final_cost < 1.05 * optimum,
        "{} vs optimum {optimum}",
        report.final_cost
    );
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn cost_scaling_leaves_the_policy_unchanged(seed in 0u64..1000, scale in 0.01f64..100.0) {
        let l = random_lqr(seed);
        let a = problem(&l, 20, x0(), 1.0);
        let b = problem(&l, 20, x0(), scale);
        let settings = SolverSettings { reg_init: 1e-9, ..Default::default() };
        let ra = solve(&a, &a.zero_controls(), &settings, None).unwrap();
        let rb = solve(&b, &b.zero_controls(), &settings, None).unwrap();
        for (ua, ub) in ra.controls.iter().zip(&rb.controls) {
            prop_assert!((ua - ub).amax() < 1e-6 * (1.0 + ua.amax()));
        }
        for (ka, kb) in ra.feedback.iter().zip(&rb.feedback) {
            prop_assert!((ka - kb).amax() < 1e-6 * (1.0 + ka.amax()));
        }
        prop_assert!((rb.final_cost - scale * ra.final_cost).abs() < 1e-8 * scale * ra.final_cost);
    }

    #[test]
    fn accepted_steps_decrease_cost(seed in 0u64..1000) {
        let l = random_lqr(seed);
        let p = problem(&l, 20, x0(), 1.0);
        let start: Vec<_> = (0..20).map(|t| DVector::from_vec(vec![(t as f64).sin(), 0.5])).collect();
        let report = solve(&p, &start, &SolverSettings::default(), None).unwrap();
        for w in report.records.windows(2) {
            if w[0].ls_alpha > 0.0 {
                prop_assert!(w[1].cost < w[0].cost);
            }
        }
    }

    #[test]
    fn solve_is_bit_reproducible(seed in 0u64..1000) {
        let l = random_lqr(seed);
        let p = problem(&l, 15, x0(), 1.0);
        let a = solve(&p, &p.zero_controls(), &SolverSettings::default(), None).unwrap();
        let b = solve(&p, &p.zero_controls(), &SolverSettings::default(), None).unwrap();
        prop_assert_eq!(a.timeless_records(), b.timeless_records());
        prop_assert_eq!(a.controls, b.controls);
    }
}
