use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rsoc_core::cost::LinearTaskMap;
use rsoc_core::models::{Cube, CubeParams, Pendulum, PendulumParams, PendulumTip};
use rsoc_core::smoothing::{draw_sample_set, SmoothedModel};
use rsoc_core::*;

fn pendulum_swingup(n: usize) -> TrajectoryProblem {
    let pendulum = Pendulum::new(PendulumParams {
        dt: 5e-3,
        ..Default::default()
    })
    .unwrap();
    let goal = Arc::new(
        QuadraticGoalCost::new(
            Arc::new(PendulumTip {
                length: pendulum.params().length,
            }),
            DVector::from_vec(vec![0.0, 1.0]),
            DVector::zeros(1),
            2.0,
            2e-5,
        )
        .unwrap(),
    );
    TrajectoryProblem::new(n, DVector::zeros(2), goal.clone(), goal, Arc::new(pendulum)).unwrap()
}

fn cube_lift(n: usize) -> TrajectoryProblem {
    let goal = Arc::new(
        QuadraticGoalCost::new(
            Arc::new(LinearTaskMap::select(4, &[0, 1])),
            DVector::from_vec(vec![0.0, 0.1]),
            DVector::zeros(2),
            10.0,
            1e-2,
        )
        .unwrap(),
    );
    let cube = Cube::new(CubeParams::default()).unwrap();
    TrajectoryProblem::new(n, DVector::zeros(4), goal.clone(), goal, Arc::new(cube)).unwrap()
}

#[test]
fn plain_ddp_stalls_at_the_bottom() {
    let p = pendulum_swingup(400);
    let settings = SolverSettings {
        max_iterations: 24,
        tolerance: 0.0,
        ..Default::default()
    };
    let report = solve(&p, &p.zero_controls(), &settings, None).unwrap();
    assert!((report.final_cost - report.initial_cost).abs() < 1e-9);
    assert!(report.records.iter().all(|r| r.qu_inf == 0.0));
}

#[test]
fn zero_initial_noise_degenerates_to_ddp() {
    let p = pendulum_swingup(100);
    let settings = SolverSettings {
        max_iterations: 30,
        ..Default::default()
    };
    let start: Vec<_> = (0..100)
        .map(|t| DVector::from_element(1, 0.3 * (t as f64 * 0.1).sin()))
        .collect();
    let plain = solve(&p, &start, &settings, None).unwrap();
    let schedule = AdaptiveSchedule {
        eps0: 0.0,
        ..Default::default()
    };
    let noise = NoiseConfig::new(1.0, 4, 0).unwrap();
    let adaptive = solve_adaptive(&p, &start, &schedule, &settings, &noise).unwrap();
    assert_eq!(plain.timeless_records(), adaptive.report.timeless_records());
    assert_eq!(plain.controls, adaptive.report.controls);
    assert_eq!(plain.status, adaptive.report.status);
}

#[test]
fn smoothing_breaks_the_stall() {
    let p = pendulum_swingup(400);
    let noise = NoiseConfig::new(1.0, 4, 0).unwrap();
    let report = solve(
        &p,
        &p.zero_controls(),
        &SolverSettings::default(),
        Some(&noise),
    )
    .unwrap();
    assert!(
        report.final_cost < 0.5 * report.initial_cost,
        "{} -> {}",
        report.initial_cost,
        report.final_cost
    );
}

#[test]
fn cascade_lowers_noise_monotonically() {
    let p = cube_lift(40);
    let schedule = AdaptiveSchedule {
        eps0: 0.1,
        stall_budget: 10,
        ..Default::default()
    };
    let noise = NoiseConfig::new(0.1, 8, 3).unwrap();
    let out = solve_adaptive(
        &p,
        &p.zero_controls(),
        &schedule,
        &SolverSettings::default(),
        &noise,
    )
    .unwrap();
    let records = &out.report.records;
    assert!(records
        .windows(2)
        .all(|w| w[1].eps <= w[0].eps && w[1].stage >= w[0].stage));
    assert!(records.windows(2).all(|w| w[1].iter == w[0].iter + 1));
    for s in &out.stages {
        let rows = &records[s.first_row..s.first_row + s.rows];
        assert!(rows
            .iter()
            .all(|r| r.eps == s.eps && r.stage == s.stage && r.alpha_tol == s.alpha_tol));
    }
    assert_eq!(out.stages.len(), schedule.stages().len());
}

#[test]
fn smoothed_solves_are_thread_count_independent() {
    let p = cube_lift(40);
    let noise = NoiseConfig::new(0.1, 16, 9).unwrap();
    let settings = SolverSettings {
        max_iterations: 15,
        ..Default::default()
    };
    let run = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| solve(&p, &p.zero_controls(), &settings, Some(&noise)).unwrap())
    };
    let one = run(1);
    for threads in [2, 4, 8] {
        let other = run(threads);
        assert_eq!(one.timeless_records(), other.timeless_records());
        assert_eq!(one.controls, other.controls);
    }
}

#[test]
fn smoothed_linear_dynamics_shift_by_the_sample_mean() {
    let a = DMatrix::from_row_slice(2, 2, &[1.0, 0.1, 0.0, 1.0]);
    let b = DMatrix::from_row_slice(2, 1, &[0.005, 0.1]);
    let lin = LinearDynamics::new(a.clone(), b.clone(), 0.1).unwrap();
    let noise = NoiseConfig::new(0.7, 5, 2).unwrap();
    let model = SmoothedModel::new(&lin, noise, 4, 3);
    let x = DVector::from_vec(vec![0.2, -1.0]);
    let u = DVector::from_element(1, 0.4);
    for t in 0..3 {
        let z = draw_sample_set(&noise, 1, 4, t);
        let mean = z.z.iter().fold(DVector::zeros(1), |acc, zi| acc + zi) / z.len() as f64;
        let expected = &a * &x + &b * (&u + mean * noise.eps);
        let got = model.step(t, &x, &u).unwrap();
        assert!((got - expected).amax() < 1e-14);
    }
}

#[test]
fn zeroth_order_baseline_reports_in_the_same_schema() {
    let p = pendulum_swingup(50);
    let settings = ZerothOrderSettings {
        max_iterations: 5,
        ..Default::default()
    };
    let report = solve_zeroth(&p, &p.zero_controls(), &settings).unwrap();
    assert_eq!(report.records.len(), 6);
    assert!(report
        .records
        .windows(2)
        .all(|w| w[1].dyn_evals > w[0].dyn_evals));
    let again = solve_zeroth(&p, &p.zero_controls(), &settings).unwrap();
    assert_eq!(report.timeless_records(), again.timeless_records());
}

#[test]
fn zeroth_order_descends_on_a_smooth_problem() {
    let lin = LinearDynamics::double_integrator(0.1);
    let cost = Arc::new(QuadraticCost {
        q: DMatrix::identity(2, 2),
        r: DMatrix::identity(1, 1) * 0.1,
    });
    let p = TrajectoryProblem::new(
        10,
        DVector::from_vec(vec![1.0, 0.0]),
        cost.clone(),
        cost,
        Arc::new(lin),
    )
    .unwrap();
    let settings = ZerothOrderSettings {
        eps: 0.05,
        samples: 64,
        step_size: 1e-2,
        max_iterations: 50,
        ..Default::default()
    };
    let report = solve_zeroth(&p, &p.zero_controls(), &settings).unwrap();
    assert!(report.final_cost < report.initial_cost);
}

#[test]
fn zeroth_order_escapes_the_hanging_plateau() {
    let p = pendulum_swingup(400);
    let settings = ZerothOrderSettings {
        eps: 0.5,
        samples: 16,
        step_size: 100.0,
        max_iterations: 50,
        ..Default::default()
    };
    let (grad, _) =
        rsoc_core::zeroth::zeroth_order_gradient(&p, &p.zero_controls(), &settings, 0).unwrap();
    assert!(grad.iter().any(|g| g.amax() > 1e-6));
    let report = solve_zeroth(&p, &p.zero_controls(), &settings).unwrap();
    assert!(
        report.final_cost < report.initial_cost,
        "{} -> {}",
        report.initial_cost,
        report.final_cost
    );
}
