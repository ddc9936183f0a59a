use nalgebra::{DMatrix, DVector};
use rsoc_core::smoothing::{
    draw_sample_set, smoothed_jacobian_zeroth_order, smoothed_jacobians_first_order, smoothed_step,
    NoiseConfig,
};
use rsoc_core::zeroth::score_gradient;
use rsoc_core::{Dynamics, DynamicsError};

/// `x' = max(0, u)`.
struct Ramp;

impl Dynamics for Ramp {
    fn state_dim(&self) -> usize {
        1
    }
    fn control_dim(&self) -> usize {
        1
    }
    fn dt(&self) -> f64 {
        1.0
    }
    fn step(&self, _x: &DVector<f64>, u: &DVector<f64>) -> Result<DVector<f64>, DynamicsError> {
        Ok(DVector::from_element(1, u[0].max(0.0)))
    }
    fn jacobians(
        &self,
        _x: &DVector<f64>,
        u: &DVector<f64>,
    ) -> Result<(DMatrix<f64>, DMatrix<f64>), DynamicsError> {
        let slope = if u[0] > 0.0 { 1.0 } else { 0.0 };
        Ok((DMatrix::zeros(1, 1), DMatrix::from_element(1, 1, slope)))
    }
}

// Gaussian convolution of the ramp at u = 0, ε = 1.
const VALUE: f64 = 0.398_942_280_401_432_7; // 1/sqrt(2π)
const SLOPE: f64 = 0.5;
// Per-sample variances of max(0,Z), 1{Z>0} and max(0,Z)·Z.
const VAR_VALUE: f64 = 0.5 - VALUE * VALUE;
const VAR_FIRST: f64 = 0.25;
const VAR_ZEROTH: f64 = 1.25;

struct Estimates {
    value: f64,
    first: f64,
    zeroth: f64,
}

fn estimate(m: usize, seed: u64, epoch: u64) -> Estimates {
    let config = NoiseConfig::new(1.0, m, seed).unwrap();
    let samples = draw_sample_set(&config, 1, epoch, 0);
    let x = DVector::zeros(1);
    let u = DVector::zeros(1);
    Estimates {
        value: smoothed_step(&Ramp, &x, &u, &samples, 1.0).unwrap()[0],
        first: smoothed_jacobians_first_order(&Ramp, &x, &u, &samples, 1.0)
            .unwrap()
            .1[(0, 0)],
        zeroth: smoothed_jacobian_zeroth_order(&Ramp, &x, &u, &samples, 1.0).unwrap()[(0, 0)],
    }
}

#[test]
fn large_sample_estimates_match_gaussian_convolution() {
    let m = 100_000;
    let e = estimate(m, 1, 0);
    let band = |var: f64| 3.0 * (var / m as f64).sqrt();
    assert!(
        (e.value - VALUE).abs() < band(VAR_VALUE),
        "value {}",
        e.value
    );
    assert!(
        (e.first - SLOPE).abs() < band(VAR_FIRST),
        "first order {}",
        e.first
    );
    assert!(
        (e.zeroth - SLOPE).abs() < band(VAR_ZEROTH),
        "zeroth order {}",
        e.zeroth
    );
}

#[test]
fn error_decays_like_inverse_square_root() {
    let reps = 200;
    for (m, seed) in [(100usize, 2u64), (1000, 3), (10_000, 4)] {
        let mut se = [0.0f64; 3];
        for r in 0..reps {
            let e = estimate(m, seed, r);
            se[0] += (e.value - VALUE).powi(2);
            se[1] += (e.first - SLOPE).powi(2);
            se[2] += (e.zeroth - SLOPE).powi(2);
        }
        for (s, var) in se.iter().zip([VAR_VALUE, VAR_FIRST, VAR_ZEROTH]) {
            let rmse = (s / reps as f64).sqrt();
            let predicted = (var / m as f64).sqrt();
            let ratio = rmse / predicted;
            assert!(
                (0.75..1.25).contains(&ratio),
                "M={m}: rmse {rmse:e}, predicted {predicted:e}"
            );
        }
    }
}

#[test]
fn baseline_reduces_variance() {
    let ramp = |u: &DVector<f64>| Some(u[0].max(0.0));
    let u = DVector::from_element(1, 1.0);
    let draws = 400;
    let mut wins = 0;
    for trial in 0..100u64 {
        let mut with = Vec::with_capacity(draws);
        let mut without = Vec::with_capacity(draws);
        for k in 0..draws as u64 {
            let epoch = trial * draws as u64 + k;
            with.push(
                score_gradient(ramp, &u, 1.0, 1, 9, epoch, true)
                    .unwrap()
                    .gradient[0],
            );
            without.push(
                score_gradient(ramp, &u, 1.0, 1, 9, epoch, false)
                    .unwrap()
                    .gradient[0],
            );
        }
        if variance(&with) < variance(&without) {
            wins += 1;
        }
    }
    assert!(wins >= 95, "baseline won {wins} of 100 trials");
}

fn variance(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
}

#[test]
fn score_estimator_is_unbiased_on_quadratics() {
    let a = DMatrix::from_row_slice(3, 3, &[2.0, 0.5, 0.0, 0.5, 1.0, -0.3, 0.0, -0.3, 3.0]);
    let b = DVector::from_vec(vec![1.0, -2.0, 0.5]);
    let j = |u: &DVector<f64>| Some((u.transpose() * &a * u)[0] + b.dot(u));
    let u = DVector::from_vec(vec![0.3, -0.7, 1.1]);
    let exact = &a * &u * 2.0 + &b;
    let eps = 0.2;
    let n = 10_000u64;
    let draws: Vec<DVector<f64>> = (0..n)
        .map(|k| score_gradient(j, &u, eps, 1, 4, k, true).unwrap().gradient)
        .collect();
    for i in 0..3 {
        let xs: Vec<f64> = draws.iter().map(|g| g[i]).collect();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let sigma = (variance(&xs) / n as f64).sqrt();
        assert!(
            (mean - exact[i]).abs() < 3.0 * sigma,
            "component {i}: {mean} vs {}",
            exact[i]
        );
    }
}

#[test]
fn constant_offset_cancels_with_baseline() {
    let j = |u: &DVector<f64>| Some(u.norm_squared() + u[0].abs());
    let shifted = |u: &DVector<f64>| Some(u.norm_squared() + u[0].abs() + 1e3);
    let u = DVector::from_vec(vec![0.5, -0.25]);
    let a = score_gradient(j, &u, 0.1, 256, 5, 0, true).unwrap();
    let b = score_gradient(shifted, &u, 0.1, 256, 5, 0, true).unwrap();
    assert!((a.gradient - b.gradient).amax() < 1e-9);
}

#[test]
fn sample_streams_are_uncorrelated_across_timesteps() {
    let config = NoiseConfig::new(1.0, 10_000, 12).unwrap();
    let a = draw_sample_set(&config, 1, 0, 0);
    let pairs = [
        draw_sample_set(&config, 1, 0, 1),
        draw_sample_set(&config, 1, 1, 0),
    ];
    for b in pairs {
        let xs: Vec<f64> = a.z.iter().map(|z| z[0]).collect();
        let ys: Vec<f64> = b.z.iter().map(|z| z[0]).collect();
        let n = xs.len() as f64;
        let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
        let cov: f64 = xs
            .iter()
            .zip(&ys)
            .map(|(x, y)| (x - mx) * (y - my))
            .sum::<f64>()
            / n;
        let corr = cov / (variance(&xs) * variance(&ys)).sqrt();
        assert!(corr.abs() < 0.05, "correlation {corr}");
    }
    assert_eq!(
        draw_sample_set(&NoiseConfig::new(1.0, 1, 0).unwrap(), 3, 0, 0).len(),
        1
    );
}

#[test]
fn zeroth_order_jacobian_recovers_linear_input_matrix() {
    let a = DMatrix::from_row_slice(2, 2, &[1.0, 0.1, -0.2, 0.9]);
    let b = DMatrix::from_row_slice(2, 2, &[0.5, -1.0, 2.0, 0.3]);
    let lin = rsoc_core::LinearDynamics::new(a, b.clone(), 0.1).unwrap();
    let eps = 0.5;
    let m = 10_000;
    let samples = draw_sample_set(&NoiseConfig::new(eps, m, 6).unwrap(), 2, 0, 0);
    let x = DVector::from_vec(vec![0.3, -0.4]);
    let u = DVector::from_vec(vec![1.0, 0.2]);
    let est = smoothed_jacobian_zeroth_order(&lin, &x, &u, &samples, eps).unwrap();
    let base = lin.step(&x, &u).unwrap();
    let per_sample: Vec<DMatrix<f64>> = samples
        .z
        .iter()
        .map(|z| (lin.step(&x, &(&u + z * eps)).unwrap() - &base) * z.transpose() / eps)
        .collect();
    for i in 0..2 {
        for j in 0..2 {
            let xs: Vec<f64> = per_sample.iter().map(|s| s[(i, j)]).collect();
            let half_width = 3.0 * (variance(&xs) / m as f64).sqrt();
            assert!(
                (est[(i, j)] - b[(i, j)]).abs() < half_width,
                "entry ({i},{j}): {}",
                est[(i, j)]
            );
        }
    }
}

fn score_draws<F>(j: F, u: &DVector<f64>, n: u64, baseline: bool) -> Vec<DVector<f64>>
where
    F: Fn(&DVector<f64>) -> Option<f64> + Sync + Copy,
{
    (0..n)
        .map(|k| {
            score_gradient(j, u, 0.3, 1, 21, k, baseline)
                .unwrap()
                .gradient
        })
        .collect()
}

fn assert_mean_within_3_sigma(draws: &[DVector<f64>], expected: &DVector<f64>) {
    let n = draws.len() as f64;
    for i in 0..expected.len() {
        let xs: Vec<f64> = draws.iter().map(|g| g[i]).collect();
        let mean = xs.iter().sum::<f64>() / n;
        let sigma = (variance(&xs) / n).sqrt();
        assert!(
            (mean - expected[i]).abs() < 3.0 * sigma,
            "component {i}: {mean} vs {}",
            expected[i]
        );
    }
}

#[test]
fn score_estimator_on_the_squared_norm() {
    let j = |u: &DVector<f64>| Some(u.norm_squared());
    let origin = DVector::zeros(3);
    assert_mean_within_3_sigma(&score_draws(j, &origin, 10_000, true), &origin);
    let e1 = DVector::from_vec(vec![1.0, 0.0, 0.0]);
    assert_mean_within_3_sigma(&score_draws(j, &e1, 10_000, true), &(&e1 * 2.0));
}

#[test]
fn score_estimator_on_a_linear_objective() {
    let c = DVector::from_vec(vec![1.5, -0.5]);
    let j = |u: &DVector<f64>| Some(c.dot(u) + 4.0);
    let u = DVector::from_vec(vec![0.7, 0.1]);
    assert_mean_within_3_sigma(&score_draws(j, &u, 10_000, true), &c);

    let mut with = Vec::new();
    let mut without = Vec::new();
    for rep in 0..100u64 {
        with.push(
            score_gradient(j, &u, 0.3, 16, 30, rep, true)
                .unwrap()
                .gradient[0],
        );
        without.push(
            score_gradient(j, &u, 0.3, 16, 30, rep, false)
                .unwrap()
                .gradient[0],
        );
    }
    assert!(variance(&with) < variance(&without));
}
