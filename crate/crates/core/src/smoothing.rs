//! Randomized smoothing of the dynamics over the control input.
//!
//! `f_ε(x, u) = E[f(x, u + εZ)]` is estimated with `M` samples. Samples come
//! from counter-based streams keyed by `(seed, epoch, t)`, so a sample set is
//! reproducible regardless of thread schedule, and stays frozen while the
//! solver evaluates trials within one epoch.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::Dynamics;
use crate::error::{DynamicsError, SmoothingError};

/// Below this many samples the perturbed evaluations run serially.
const PARALLEL_MIN_SAMPLES: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NoiseDistribution {
    Gaussian,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GradientEstimator {
    /// Average of the Jacobians at the perturbed controls.
    FirstOrder,
    /// Baseline-subtracted finite-sample estimator using values only.
    ZerothOrder,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseConfig {
    pub eps: f64,
    pub samples: usize,
    pub distribution: NoiseDistribution,
    pub seed: u64,
    pub estimator: GradientEstimator,
}

impl NoiseConfig {
    pub fn new(eps: f64, samples: usize, seed: u64) -> Result<Self, SmoothingError> {
        let config = Self {
            eps,
            samples,
            distribution: NoiseDistribution::Gaussian,
            seed,
            estimator: GradientEstimator::FirstOrder,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), SmoothingError> {
        if self.samples == 0 {
            return Err(SmoothingError::NoSamples);
        }
        if !(self.eps.is_finite() && self.eps >= 0.0) {
            return Err(SmoothingError::Dynamics(DynamicsError::Invalid(format!(
                "noise intensity must be finite and >= 0, got {}",
                self.eps
            ))));
        }
        Ok(())
    }

    pub fn with_eps(&self, eps: f64) -> Self {
        Self { eps, ..*self }
    }

    pub fn with_estimator(&self, estimator: GradientEstimator) -> Self {
        Self { estimator, ..*self }
    }
}

/// `M` noise directions drawn for one `(seed, epoch, t)` key.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleSet {
    pub seed: u64,
    pub epoch: u64,
    pub t: u64,
    pub z: Vec<DVector<f64>>,
}

impl SampleSet {
    pub fn len(&self) -> usize {
        self.z.len()
    }

    pub fn is_empty(&self) -> bool {
        self.z.is_empty()
    }
}

/// Deterministic stream for a `(seed, epoch, counter)` key.
pub(crate) fn stream(seed: u64, epoch: u64, counter: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((epoch << 32) | (counter & 0xffff_ffff));
    rng
}

pub(crate) fn gaussian_vector(rng: &mut ChaCha8Rng, dim: usize) -> DVector<f64> {
    DVector::from_iterator(dim, (0..dim).map(|_| rng.sample::<f64, _>(StandardNormal)))
}

/// Draws the sample set of timestep `t` in `epoch`.
pub fn draw_sample_set(config: &NoiseConfig, dim: usize, epoch: u64, t: usize) -> SampleSet {
    let mut rng = stream(config.seed, epoch, t as u64);
    let z = (0..config.samples)
        .map(|_| match config.distribution {
            NoiseDistribution::Gaussian => gaussian_vector(&mut rng, dim),
        })
        .collect();
    SampleSet {
        seed: config.seed,
        epoch,
        t: t as u64,
        z,
    }
}

/// Evaluates `f` on every sample, in parallel for large sets, keeping index
/// order so the reduction is schedule independent.
fn map_samples<T, F>(samples: &SampleSet, f: F) -> Result<Vec<T>, DynamicsError>
where
    T: Send,
    F: Fn(&DVector<f64>) -> Result<T, DynamicsError> + Sync,
{
    let tag = |i: usize, e: DynamicsError| DynamicsError::Sample {
        index: i,
        source: Box::new(e),
    };
    if samples.len() < PARALLEL_MIN_SAMPLES {
        samples
            .z
            .iter()
            .enumerate()
            .map(|(i, z)| f(z).map_err(|e| tag(i, e)))
            .collect()
    } else {
        samples
            .z
            .par_iter()
            .enumerate()
            .map(|(i, z)| f(z).map_err(|e| tag(i, e)))
            .collect()
    }
}

fn perturbed(u: &DVector<f64>, z: &DVector<f64>, eps: f64) -> DVector<f64> {
    u + z * eps
}

/// `(1/M) Σ f(x, u + ε Z_i)`; the raw step when `ε = 0`.
pub fn smoothed_step(
    model: &dyn Dynamics,
    x: &DVector<f64>,
    u: &DVector<f64>,
    samples: &SampleSet,
    eps: f64,
) -> Result<DVector<f64>, DynamicsError> {
    if eps == 0.0 {
        return model.step(x, u);
    }
    if samples.is_empty() {
        return Err(DynamicsError::Invalid("empty sample set".into()));
    }
    let outputs = map_samples(samples, |z| model.step(x, &perturbed(u, z, eps)))?;
    let mut sum = DVector::zeros(model.state_dim());
    for y in &outputs {
        sum += y;
    }
    Ok(sum / samples.len() as f64)
}

/// Average of `(f_x, f_u)` over the perturbed controls.
pub fn smoothed_jacobians_first_order(
    model: &dyn Dynamics,
    x: &DVector<f64>,
    u: &DVector<f64>,
    samples: &SampleSet,
    eps: f64,
) -> Result<(DMatrix<f64>, DMatrix<f64>), DynamicsError> {
    if eps == 0.0 {
        return model.jacobians(x, u);
    }
    if samples.is_empty() {
        return Err(DynamicsError::Invalid("empty sample set".into()));
    }
    let jacs = map_samples(samples, |z| model.jacobians(x, &perturbed(u, z, eps)))?;
    let (nx, nu) = (model.state_dim(), model.control_dim());
    let mut fx = DMatrix::zeros(nx, nx);
    let mut fu = DMatrix::zeros(nx, nu);
    for (a, b) in &jacs {
        fx += a;
        fu += b;
    }
    let m = samples.len() as f64;
    Ok((fx / m, fu / m))
}

/// `(1/(Mε)) Σ (f(x, u + εZ_i) - f(x, u)) Z_iᵀ`.
pub fn smoothed_jacobian_zeroth_order(
    model: &dyn Dynamics,
    x: &DVector<f64>,
    u: &DVector<f64>,
    samples: &SampleSet,
    eps: f64,
) -> Result<DMatrix<f64>, SmoothingError> {
    if !(eps > 0.0) {
        return Err(SmoothingError::ZeroNoise);
    }
    if samples.is_empty() {
        return Err(SmoothingError::NoSamples);
    }
    let base = model.step(x, u)?;
    let outputs = map_samples(samples, |z| model.step(x, &perturbed(u, z, eps)))?;
    let mut fu = DMatrix::zeros(model.state_dim(), model.control_dim());
    for (y, z) in outputs.iter().zip(&samples.z) {
        fu += (y - &base) * z.transpose();
    }
    Ok(fu / (samples.len() as f64 * eps))
}

/// Central differences of `x ↦ f_ε(x, u)` with the samples held fixed.
pub fn smoothed_state_jacobian_fd(
    model: &dyn Dynamics,
    x: &DVector<f64>,
    u: &DVector<f64>,
    samples: &SampleSet,
    eps: f64,
    h: f64,
) -> Result<DMatrix<f64>, DynamicsError> {
    let n = x.len();
    let mut fx = DMatrix::zeros(model.state_dim(), n);
    for i in 0..n {
        let step = h * x[i].abs().max(1.0);
        let mut xp = x.clone();
        let mut xm = x.clone();
        xp[i] += step;
        xm[i] -= step;
        let yp = smoothed_step(model, &xp, u, samples, eps)?;
        let ym = smoothed_step(model, &xm, u, samples, eps)?;
        fx.set_column(i, &((yp - ym) / (xp[i] - xm[i])));
    }
    Ok(fx)
}

/// The smoothed dynamics along a horizon for one epoch: a time-varying map
/// whose sample sets are drawn once and reused by every evaluation.
pub struct SmoothedModel<'a> {
    model: &'a dyn Dynamics,
    config: NoiseConfig,
    epoch: u64,
    samples: Vec<SampleSet>,
}

impl<'a> SmoothedModel<'a> {
    pub fn new(model: &'a dyn Dynamics, config: NoiseConfig, epoch: u64, horizon: usize) -> Self {
        let samples = if config.eps == 0.0 {
            Vec::new()
        } else {
            (0..horizon)
                .map(|t| draw_sample_set(&config, model.control_dim(), epoch, t))
                .collect()
        };
        Self {
            model,
            config,
            epoch,
            samples,
        }
    }

    pub fn epoch(&self) -> u64 {
        self.epoch
    }

    pub fn config(&self) -> &NoiseConfig {
        &self.config
    }

    pub fn is_raw(&self) -> bool {
        self.config.eps == 0.0
    }

    pub fn model(&self) -> &dyn Dynamics {
        self.model
    }

    pub fn step(
        &self,
        t: usize,
        x: &DVector<f64>,
        u: &DVector<f64>,
    ) -> Result<DVector<f64>, DynamicsError> {
        if self.is_raw() {
            return self.model.step(x, u);
        }
        smoothed_step(self.model, x, u, &self.samples[t], self.config.eps)
    }

    pub fn jacobians(
        &self,
        t: usize,
        x: &DVector<f64>,
        u: &DVector<f64>,
    ) -> Result<(DMatrix<f64>, DMatrix<f64>), SmoothingError> {
        if self.is_raw() {
            return Ok(self.model.jacobians(x, u)?);
        }
        let samples = &self.samples[t];
        let eps = self.config.eps;
        match self.config.estimator {
            GradientEstimator::FirstOrder => Ok(smoothed_jacobians_first_order(
                self.model, x, u, samples, eps,
            )?),
            GradientEstimator::ZerothOrder => {
                let fu = smoothed_jacobian_zeroth_order(self.model, x, u, samples, eps)?;
                let fx = smoothed_state_jacobian_fd(
                    self.model,
                    x,
                    u,
                    samples,
                    eps,
                    crate::dynamics::FD_RELATIVE_STEP,
                )?;
                Ok((fx, fu))
            }
        }
    }

    /// Second-order terms exist only for the unsmoothed model.
    pub fn second_order(&self, x: &DVector<f64>, u: &DVector<f64>) -> Option<Vec<DMatrix<f64>>> {
        if self.is_raw() {
            self.model.second_order(x, u)
        } else {
            None
        }
    }
}
