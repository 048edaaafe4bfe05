//! Oracles for the data-driven estimate: central differences of the
//! simulated cost, and a Monte-Carlo check that the estimator is unbiased.

use serde::Serialize;

use super::{
    estimate_cost_gradient, estimate_signal_gradients, evaluate_cost, run_experiment_triple, CostBreakdown, IftError,
    Scenario,
};
use crate::controller::ParamVector;
use crate::exec::{compensated_sum, map_indexed, Execution};
use crate::plant_sim::NoiseSpec;

/// Band, in standard errors, within which the Monte-Carlo mean must fall.
pub const Z_LIMIT: f64 = 4.0;
pub const MIN_TRIALS: usize = 100;

pub fn noise_free_cost(scenario: &Scenario, rho: &ParamVector) -> Result<CostBreakdown, IftError> {
    let rec = scenario.simulate(rho, &scenario.reference, &NoiseSpec::off(), true)?;
    evaluate_cost(&rec, &scenario.weights)
}

/// `max |e¹|` of the noise-free normal experiment.
pub fn peak_noise_free_error(scenario: &Scenario, rho: &ParamVector) -> Result<f64, IftError> {
    let rec = scenario.simulate(rho, &scenario.reference, &NoiseSpec::off(), true)?;
    Ok(rec.e.iter().fold(0.0, |m, e| m.max(e.abs())))
}

/// `(f(x + h_j e_j) − f(x − h_j e_j)) / 2h_j` for each component; the six
/// probes are independent and run under `exec`.
pub fn central_difference<F>(f: F, x: [f64; 3], steps: [f64; 3], exec: Execution) -> Result<[f64; 3], IftError>
where
    F: Fn(&[f64; 3]) -> Result<f64, IftError> + Sync + Send,
{
    let probes = map_indexed(6, exec, |k| {
        let (j, sign) = (k / 2, if k % 2 == 0 { 1.0 } else { -1.0 });
        let mut p = x;
        p[j] += sign * steps[j];
        f(&p)
    });
    let mut out = [0.0; 3];
    let mut it = probes.into_iter();
    for (j, o) in out.iter_mut().enumerate() {
        let wrap = |e| IftError::Probe {
            component: j,
            source: Box::new(e),
        };
        let plus = it.next().expect("six probes").map_err(wrap)?;
        let minus = it.next().expect("six probes").map_err(wrap)?;
        *o = (plus - minus) / (2.0 * steps[j]);
    }
    Ok(out)
}

/// Central differences of the noise-free cost with relative step `delta`.
pub fn finite_difference_gradient(
    scenario: &Scenario,
    rho: &ParamVector,
    delta: f64,
    exec: Execution,
) -> Result<[f64; 3], IftError> {
    if !(1e-6..=1e-2).contains(&delta) {
        return Err(IftError::InvalidConfig(format!("delta must be in [1e-6, 1e-2], got {delta}")));
    }
    let x = rho.as_array();
    let steps = x.map(|v| if v != 0.0 { delta * v.abs() } else { delta });
    central_difference(
        |p| noise_free_cost(scenario, &ParamVector::new(*p)?).map(|c| c.total),
        x,
        steps,
        exec,
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ComponentStats {
    /// Mean of `estimate − noise-free gradient`.
    pub mean_deviation: f64,
    pub std_error: f64,
    pub z: f64,
}

impl ComponentStats {
    fn from_deviations(dev: &[f64]) -> Self {
        let n = dev.len() as f64;
        let mean = compensated_sum(dev.iter().copied()) / n;
        let var = compensated_sum(dev.iter().map(|d| (d - mean) * (d - mean))) / (n - 1.0);
        let std_error = (var / n).sqrt();
        let z = if std_error > 0.0 {
            mean / std_error
        } else if mean == 0.0 {
            0.0
        } else {
            mean.signum() * f64::INFINITY
        };
        Self {
            mean_deviation: mean,
            std_error,
            z,
        }
    }

    pub fn passes(&self) -> bool {
        self.z.abs() <= Z_LIMIT
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UnbiasednessReport {
    pub trials: usize,
    pub sigma: f64,
    /// Data-driven gradient with noise off.
    pub reference: [f64; 3],
    /// Residuals from experiment III.
    pub correct: [ComponentStats; 3],
    /// Residuals reused from experiment I.
    pub biased: [ComponentStats; 3],
}

impl UnbiasednessReport {
    pub fn correct_passes(&self) -> bool {
        self.correct.iter().all(ComponentStats::passes)
    }

    pub fn biased_flagged(&self) -> bool {
        self.biased.iter().any(|c| !c.passes())
    }
}

/// Repeats the experiment triple `trials` times with independent noise
/// streams (trial `t` uses index `t`) and compares both estimators to the
/// noise-free estimate.
pub fn unbiasedness_trial(
    scenario: &Scenario,
    rho: &ParamVector,
    trials: usize,
    exec: Execution,
) -> Result<UnbiasednessReport, IftError> {
    if trials < MIN_TRIALS {
        return Err(IftError::InvalidConfig(format!(
            "at least {MIN_TRIALS} trials are required, got {trials}"
        )));
    }
    scenario.validate()?;
    let estimate = |s: &Scenario, index: u64| -> Result<([f64; 3], [f64; 3]), IftError> {
        let t = run_experiment_triple(s, rho, index)?;
        let sg = estimate_signal_gradients(&t.rec2, rho, &s.basis)?;
        let good = estimate_cost_gradient(&sg, &t.rec3, &s.weights)?;
        let bad = estimate_cost_gradient(&sg, &t.rec1, &s.weights)?;
        Ok((good.grad_array(), bad.grad_array()))
    };
    let quiet = Scenario {
        noise_sigma: 0.0,
        ..scenario.clone()
    };
    let (reference, _) = estimate(&quiet, 0)?;

    let results = map_indexed(trials, exec, |t| estimate(scenario, t as u64));
    let mut good = [const { Vec::new() }; 3];
    let mut bad = [const { Vec::new() }; 3];
    for r in results {
        let (g, b) = r?;
        for j in 0..3 {
            good[j].push(g[j] - reference[j]);
            bad[j].push(b[j] - reference[j]);
        }
    }
    Ok(UnbiasednessReport {
        trials,
        sigma: scenario.noise_sigma,
        reference,
        correct: good.each_ref().map(|d| ComponentStats::from_deviations(d)),
        biased: bad.each_ref().map(|d| ComponentStats::from_deviations(d)),
    })
}
