use nalgebra::{Matrix3, SymmetricEigen, Vector3};

use super::{CostWeights, IftError, Scenario};
use crate::controller::{ControllerBasis, ParamVector};
use crate::exec::compensated_dot;
use crate::plant_sim::{ExperimentRecord, NoiseSpec};

/// Regularizer relative to the trace of the equilibrated Hessian.
pub const DEFAULT_LAMBDA_REL: f64 = 1e-8;
pub const MAX_CONDITION: f64 = 1e12;
/// Lower bound on each updated parameter as a fraction of its old value.
const PROJECTION_FLOOR: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentTriple {
    pub rec1: ExperimentRecord,
    pub rec2: ExperimentRecord,
    pub rec3: ExperimentRecord,
}

/// Runs experiments I–III at `ρ`, drawing noise streams `(seed, index, 1..3)`.
pub fn run_experiment_triple(scenario: &Scenario, rho: &ParamVector, index: u64) -> Result<ExperimentTriple, IftError> {
    let noise = |k| NoiseSpec::for_experiment(scenario.noise_sigma, scenario.seed, index, k);
    let run = |reference: &[f64], k: u8, dist: bool| match scenario.simulate(rho, reference, &noise(k), dist) {
        Err(IftError::Simulation(source)) => Err(IftError::Experiment { experiment: k, source }),
        r => r,
    };
    let rec1 = run(&scenario.reference, 1, true)?;
    let rec2 = run(&rec1.e, 2, false)?;
    let rec3 = run(&scenario.reference, 3, true)?;
    Ok(ExperimentTriple { rec1, rec2, rec3 })
}

/// Sensitivities `∂e/∂ρ_j` and `∂u̇/∂ρ_j` over the record, one row per
/// parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct SignalGradients {
    pub e: [Vec<f64>; 3],
    pub udot: [Vec<f64>; 3],
}

pub fn estimate_signal_gradients(
    rec2: &ExperimentRecord,
    rho: &ParamVector,
    basis: &ControllerBasis,
) -> Result<SignalGradients, IftError> {
    if rec2.is_empty() {
        return Err(IftError::EmptyRecord);
    }
    let filters = basis.gradient_filters(rho)?;
    let e = filters
        .each_ref()
        .map(|f| f.apply(&rec2.y).into_iter().map(|v| -v).collect::<Vec<_>>());
    let udot = filters.each_ref().map(|f| f.apply(&rec2.udot));
    Ok(SignalGradients { e, udot })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradientEstimate {
    pub grad: Vector3<f64>,
    pub hessian: Matrix3<f64>,
}

impl GradientEstimate {
    pub fn grad_array(&self) -> [f64; 3] {
        [self.grad[0], self.grad[1], self.grad[2]]
    }

    pub fn min_eigenvalue(&self) -> f64 {
        SymmetricEigen::new(self.hessian).eigenvalues.min()
    }

    pub fn asymmetry(&self) -> f64 {
        (self.hessian - self.hessian.transpose()).abs().max()
    }

    /// Symmetric, and no eigenvalue below `−1e-12·trace`.
    pub fn hessian_is_psd(&self) -> bool {
        let scale = self.hessian.abs().max();
        self.asymmetry() <= 1e-14 * scale && self.min_eigenvalue() >= -1e-12 * self.hessian.trace()
    }
}

/// Gradient from the sensitivities and the residuals of `rec` (experiment
/// III for the unbiased estimate), with the Gauss–Newton Hessian.
pub fn estimate_cost_gradient(
    sg: &SignalGradients,
    rec: &ExperimentRecord,
    weights: &CostWeights,
) -> Result<GradientEstimate, IftError> {
    let n = rec.len();
    for s in sg.e.iter().chain(&sg.udot) {
        if s.len() != n {
            return Err(IftError::LengthMismatch(s.len(), n));
        }
    }
    let (a, b) = (2.0 * weights.w1, 2.0 * weights.w2);
    let grad = Vector3::from_fn(|j, _| {
        a * compensated_dot(&sg.e[j], &rec.e) + b * compensated_dot(&sg.udot[j], &rec.udot)
    });
    let mut hessian = Matrix3::zeros();
    for i in 0..3 {
        for j in i..3 {
            let h = a * compensated_dot(&sg.e[i], &sg.e[j]) + b * compensated_dot(&sg.udot[i], &sg.udot[j]);
            hessian[(i, j)] = h;
            hessian[(j, i)] = h;
        }
    }
    Ok(GradientEstimate { grad, hessian })
}

/// `ρ⁺ = ρ − γ (H + λI)⁻¹ ∇J`, solved on the Jacobi-equilibrated Hessian
/// `D H D` with `D = diag(H_ii^{-1/2})` and `λ = lambda_rel·trace(D H D)`.
/// The components of `ρ` span many decades, so both the regularizer and the
/// conditioning test are only meaningful after equilibration.
pub fn gauss_newton_step(
    rho: &ParamVector,
    est: &GradientEstimate,
    gamma: f64,
    lambda_rel: f64,
) -> Result<ParamVector, IftError> {
    if !(gamma > 0.0 && gamma <= 1.0) {
        return Err(IftError::InvalidConfig(format!("step size must be in (0, 1], got {gamma}")));
    }
    if !(lambda_rel >= 0.0 && lambda_rel.is_finite()) {
        return Err(IftError::InvalidConfig(format!("lambda_rel must be >= 0, got {lambda_rel}")));
    }
    if est.grad.iter().all(|g| *g == 0.0) {
        return Ok(*rho);
    }
    let d = Vector3::from_fn(|i, _| {
        let h = est.hessian[(i, i)];
        if h > 0.0 {
            1.0 / h.sqrt()
        } else {
            1.0
        }
    });
    let dm = Matrix3::from_diagonal(&d);
    let mut h = dm * est.hessian * dm;
    h = 0.5 * (h + h.transpose());
    let lambda = lambda_rel * h.trace();
    h += Matrix3::identity() * lambda;

    let eig = SymmetricEigen::new(h).eigenvalues;
    let (lo, hi) = (eig.min(), eig.max());
    let cond = if lo > 0.0 { hi / lo } else { f64::INFINITY };
    if cond.is_nan() || cond > MAX_CONDITION {
        return Err(IftError::SingularHessian(cond));
    }
    let chol = h.cholesky().ok_or(IftError::SingularHessian(cond))?;
    let step = dm * chol.solve(&(dm * est.grad));

    let old = rho.as_array();
    let mut new = [0.0; 3];
    for j in 0..3 {
        new[j] = (old[j] - gamma * step[j]).max(PROJECTION_FLOOR * old[j]);
    }
    Ok(ParamVector::new(new)?)
}
