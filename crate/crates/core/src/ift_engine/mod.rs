//! Data-driven gradient and Gauss–Newton tuning of the PID parameters.
//!
//! Each iteration runs three closed-loop experiments on the plant:
//!
//! 1. normal tracking of `r`, giving `e¹`;
//! 2. a special experiment whose reference is `e¹`; filtering its output and
//!    control variation by `(1/C)·∂C/∂ρ` yields the signal sensitivities;
//! 3. a repeat of (1) with fresh noise, supplying the residuals that multiply
//!    the sensitivities. Using (1) again instead would correlate the noise in
//!    both factors and bias the gradient.

mod cost;
mod gradient;
mod optimize;
mod scenario;
mod verify;

pub use cost::{evaluate_cost, CostBreakdown, CostWeights};
pub use gradient::{
    estimate_cost_gradient, estimate_signal_gradients, gauss_newton_step, run_experiment_triple, ExperimentTriple,
    GradientEstimate, SignalGradients, DEFAULT_LAMBDA_REL, MAX_CONDITION,
};
pub use optimize::{optimize, IterationReport, OptimizeConfig, OptimizeOutcome, Termination};
pub use scenario::{Scenario, BUNDLED_DAMPING, BUNDLED_DWELL_S, BUNDLED_MASS, DEFAULT_TS, INITIAL_GAINS};
pub use verify::{
    central_difference, finite_difference_gradient, noise_free_cost, peak_noise_free_error, unbiasedness_trial,
    ComponentStats, UnbiasednessReport, MIN_TRIALS, Z_LIMIT,
};

use thiserror::Error;

use crate::controller::ControllerError;
use crate::plant_sim::SimError;

#[derive(Debug, Error)]
pub enum IftError {
    #[error("invalid cost weights: {0}")]
    InvalidWeights(String),
    #[error("experiment record is empty")]
    EmptyRecord,
    #[error("series lengths disagree: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("experiment {experiment} failed: {source}")]
    Experiment {
        experiment: u8,
        #[source]
        source: SimError,
    },
    #[error(transparent)]
    Simulation(#[from] SimError),
    #[error(transparent)]
    Controller(#[from] ControllerError),
    #[error("Hessian is numerically singular (condition number {0:.3e}); increase lambda_rel")]
    SingularHessian(f64),
    #[error("finite-difference probe on component {component} failed: {source}")]
    Probe {
        component: usize,
        #[source]
        source: Box<IftError>,
    },
}
