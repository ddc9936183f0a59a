use thiserror::Error;

/// Failures of the velocity-level contact solver.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ContactError {
    #[error("mass matrix is not symmetric positive definite")]
    SingularMass,
    #[error("malformed contact problem: {0}")]
    Malformed(String),
    #[error("contact solver did not converge after {iterations} sweeps (worst residual {residual:e} at contact {contact})")]
    NotConverged {
        iterations: usize,
        residual: f64,
        contact: usize,
    },
}

/// Failures raised while stepping a dynamics model.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum DynamicsError {
    #[error("{what}: expected dimension {expected}, got {got}")]
    Dimension {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("mass matrix is singular")]
    SingularMass,
    #[error(transparent)]
    Contact(#[from] ContactError),
    #[error("noise sample {index}: {source}")]
    Sample {
        index: usize,
        #[source]
        source: Box<DynamicsError>,
    },
    #[error("{0}")]
    Invalid(String),
}

/// Failures of a trajectory rollout.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum RolloutError {
    #[error("rejected input: {0}")]
    InvalidInput(String),
    #[error("rollout diverged: non-finite state at timestep {timestep}")]
    Divergence { timestep: usize },
    #[error("dynamics failed at timestep {timestep}: {source}")]
    Dynamics {
        timestep: usize,
        #[source]
        source: DynamicsError,
    },
}

/// Problem construction and evaluation errors.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ProblemError {
    #[error("rejected input: {0}")]
    InvalidInput(String),
}

/// Failure signal of the backward pass.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum BackwardPassError {
    #[error("Q_uu is not positive definite at timestep {timestep}")]
    NotPositiveDefinite { timestep: usize },
    #[error("stage derivatives do not match the trajectory: {0}")]
    Shape(String),
}

/// Errors of the Monte-Carlo estimators.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum SmoothingError {
    #[error("the zero-th order estimator requires eps > 0")]
    ZeroNoise,
    #[error("empty sample set")]
    NoSamples,
    #[error("all {0} perturbed rollouts diverged")]
    AllSamplesDiscarded(usize),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error(transparent)]
    Rollout(#[from] RolloutError),
}
