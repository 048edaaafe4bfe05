use serde::{Deserialize, Serialize};

use super::{
    estimate_cost_gradient, estimate_signal_gradients, evaluate_cost, gauss_newton_step, CostBreakdown,
    GradientEstimate, IftError, Scenario, DEFAULT_LAMBDA_REL,
};
use crate::controller::ParamVector;
use crate::plant_sim::{ExperimentRecord, NoiseSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizeConfig {
    /// Step sizes per iteration; the last entry repeats.
    pub gammas: Vec<f64>,
    pub max_iter: usize,
    /// Relative improvement below which an iteration counts as stalled; two
    /// stalled iterations in a row stop the run.
    pub stop_tol: f64,
    pub stop_threshold: Option<f64>,
    /// A candidate whose noise-free cost exceeds this multiple of the current
    /// one is rejected and the step halved.
    pub guard_factor: f64,
    pub max_retries: u32,
    pub lambda_rel: f64,
}

impl Default for OptimizeConfig {
    fn default() -> Self {
        Self {
            gammas: vec![0.3, 0.5, 1.0],
            max_iter: 20,
            stop_tol: 1e-3,
            stop_threshold: None,
            guard_factor: 10.0,
            max_retries: 4,
            lambda_rel: DEFAULT_LAMBDA_REL,
        }
    }
}

impl OptimizeConfig {
    pub fn validate(&self) -> Result<(), IftError> {
        let bad = |m: String| Err(IftError::InvalidConfig(m));
        if self.gammas.is_empty() {
            return bad("step schedule is empty".into());
        }
        if let Some(g) = self.gammas.iter().find(|g| !(**g > 0.0 && **g <= 1.0)) {
            return bad(format!("step sizes must be in (0, 1], got {g}"));
        }
        if !(self.stop_tol >= 0.0 && self.stop_tol.is_finite()) {
            return bad(format!("stop_tol must be >= 0, got {}", self.stop_tol));
        }
        if let Some(t) = self.stop_threshold {
            if !(t >= 0.0 && t.is_finite()) {
                return bad(format!("stop_threshold must be >= 0, got {t}"));
            }
        }
        if !(self.guard_factor >= 1.0 && self.guard_factor.is_finite()) {
            return bad(format!("guard_factor must be >= 1, got {}", self.guard_factor));
        }
        if !(self.lambda_rel >= 0.0 && self.lambda_rel.is_finite()) {
            return bad(format!("lambda_rel must be >= 0, got {}", self.lambda_rel));
        }
        Ok(())
    }

    pub fn gamma(&self, iteration: usize) -> f64 {
        *self.gammas.get(iteration).or(self.gammas.last()).unwrap_or(&1.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterationReport {
    pub index: usize,
    pub rho: ParamVector,
    pub cost: CostBreakdown,
    pub gradient: Option<GradientEstimate>,
    /// Step size finally used, after any halving.
    pub step: Option<f64>,
    /// The update computed in this iteration became the next `ρ`.
    pub accepted: bool,
    pub retries: u32,
    /// Experiment I only on the final iteration, otherwise I–III.
    pub records: Vec<ExperimentRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Termination {
    MaxIterations,
    Threshold,
    Converged,
    GuardExhausted(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizeOutcome {
    pub reports: Vec<IterationReport>,
    pub termination: Termination,
}

impl OptimizeOutcome {
    pub fn final_rho(&self) -> Option<ParamVector> {
        self.reports.last().map(|r| r.rho)
    }

    pub fn costs(&self) -> Vec<f64> {
        self.reports.iter().map(|r| r.cost.total).collect()
    }
}

fn noise_free_total(scenario: &Scenario, rho: &ParamVector) -> Result<f64, IftError> {
    let rec = scenario.simulate(rho, &scenario.reference, &NoiseSpec::off(), true)?;
    Ok(evaluate_cost(&rec, &scenario.weights)?.total)
}

/// Iterates experiments, gradient estimation and guarded Gauss–Newton
/// updates starting from `scenario.rho0`.
pub fn optimize(scenario: &Scenario, config: &OptimizeConfig) -> Result<OptimizeOutcome, IftError> {
    scenario.validate()?;
    config.validate()?;
    let mut reports = Vec::new();
    let mut rho = scenario.rho0;
    let mut stalled = 0usize;
    let mut prev_cost: Option<f64> = None;

    for i in 0..=config.max_iter {
        let index = i as u64;
        let noise = |k| NoiseSpec::for_experiment(scenario.noise_sigma, scenario.seed, index, k);
        let wrap = |k: u8| {
            move |e| match e {
                IftError::Simulation(source) => IftError::Experiment { experiment: k, source },
                other => other,
            }
        };
        let rec1 = scenario
            .simulate(&rho, &scenario.reference, &noise(1), true)
            .map_err(wrap(1))?;
        let cost = evaluate_cost(&rec1, &scenario.weights)?;

        if let Some(prev) = prev_cost {
            let rel = (prev - cost.total) / prev;
            stalled = if rel < config.stop_tol { stalled + 1 } else { 0 };
        }
        prev_cost = Some(cost.total);

        let stop = if i == config.max_iter {
            Some(Termination::MaxIterations)
        } else if config.stop_threshold.is_some_and(|t| cost.total <= t) {
            Some(Termination::Threshold)
        } else if stalled >= 2 {
            Some(Termination::Converged)
        } else {
            None
        };
        if let Some(termination) = stop {
            reports.push(IterationReport {
                index: i,
                rho,
                cost,
                gradient: None,
                step: None,
                accepted: false,
                retries: 0,
                records: vec![rec1],
            });
            return Ok(OptimizeOutcome { reports, termination });
        }

        let rec2 = scenario.simulate(&rho, &rec1.e, &noise(2), false).map_err(wrap(2))?;
        let rec3 = scenario
            .simulate(&rho, &scenario.reference, &noise(3), true)
            .map_err(wrap(3))?;
        let sg = estimate_signal_gradients(&rec2, &rho, &scenario.basis)?;
        let est = estimate_cost_gradient(&sg, &rec3, &scenario.weights)?;

        let current = if scenario.noise_sigma == 0.0 {
            cost.total
        } else {
            noise_free_total(scenario, &rho)?
        };
        let mut gamma = config.gamma(i);
        let mut accepted = None;
        let mut last_reason = String::new();
        for attempt in 0..=config.max_retries {
            let cand = gauss_newton_step(&rho, &est, gamma, config.lambda_rel)?;
            match noise_free_total(scenario, &cand) {
                Ok(j) if j <= config.guard_factor * current => {
                    accepted = Some((cand, attempt));
                    break;
                }
                Ok(j) => last_reason = format!("cost {j:.6e} exceeds {:.1}x current {current:.6e}", config.guard_factor),
                Err(e) => last_reason = e.to_string(),
            }
            if attempt < config.max_retries {
                gamma *= 0.5;
            }
        }

        let records = vec![rec1, rec2, rec3];
        match accepted {
            Some((cand, retries)) => {
                reports.push(IterationReport {
                    index: i,
                    rho,
                    cost,
                    gradient: Some(est),
                    step: Some(gamma),
                    accepted: true,
                    retries,
                    records,
                });
                rho = cand;
            }
            None => {
                reports.push(IterationReport {
                    index: i,
                    rho,
                    cost,
                    gradient: Some(est),
                    step: Some(gamma),
                    accepted: false,
                    retries: config.max_retries,
                    records,
                });
                let diagnostic = format!(
                    "iteration {i}: update rejected after {} step halvings (last gamma {gamma:.4e}): {last_reason}",
                    config.max_retries
                );
                return Ok(OptimizeOutcome {
                    reports,
                    termination: Termination::GuardExhausted(diagnostic),
                });
            }
        }
    }
    unreachable!("loop returns on the final iteration")
}
