//! Scenario files: sectioned TOML, every key optional, unknown keys rejected.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use ddtune::controller::{ControllerBasis, ParamVector, PidGains, DEFAULT_N_FILT};
use ddtune::ift_engine::{peak_noise_free_error, CostWeights, OptimizeConfig, Scenario, DEFAULT_LAMBDA_REL};
use ddtune::plant_sim::{make_reference_plant, sinusoidal_disturbance};
use ddtune::trajectory::{plan_fourth_order, MotionProfile, ProfileBounds};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulationSection {
    pub ts: f64,
}

impl Default for SimulationSection {
    fn default() -> Self {
        Self { ts: ddtune::ift_engine::DEFAULT_TS }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PlantSection {
    pub mass: f64,
    pub damping: f64,
}

impl Default for PlantSection {
    fn default() -> Self {
        Self {
            mass: ddtune::ift_engine::BUNDLED_MASS,
            damping: ddtune::ift_engine::BUNDLED_DAMPING,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ControllerSection {
    pub kp: f64,
    pub ti: f64,
    pub td: f64,
    pub n_filt: f64,
}

impl Default for ControllerSection {
    fn default() -> Self {
        let g = ddtune::ift_engine::INITIAL_GAINS;
        Self {
            kp: g.kp,
            ti: g.ti,
            td: g.td,
            n_filt: DEFAULT_N_FILT,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WeightsSection {
    pub w1: f64,
    pub w2: f64,
}

impl Default for WeightsSection {
    fn default() -> Self {
        let w = CostWeights::default();
        Self { w1: w.w1, w2: w.w2 }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProfileSection {
    pub v_max: f64,
    pub a_max: f64,
    pub j_max: f64,
    pub s_max: f64,
    pub displacement: f64,
    /// Standstill appended after the move, seconds.
    pub dwell: f64,
}

impl Default for ProfileSection {
    fn default() -> Self {
        let b = ProfileBounds::default();
        Self {
            v_max: b.v_max,
            a_max: b.a_max,
            j_max: b.j_max,
            s_max: b.s_max,
            displacement: b.displacement,
            dwell: ddtune::ift_engine::BUNDLED_DWELL_S,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseSection {
    pub sigma: Option<f64>,
    /// Noise level as a fraction of the peak noise-free tracking error at the
    /// initial gains.
    pub sigma_peak_fraction: Option<f64>,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DisturbanceSection {
    pub freq_hz: f64,
    pub amplitude: f64,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScheduleSection {
    pub gamma: Vec<f64>,
    pub max_iter: usize,
    pub stop_tol: f64,
    pub stop_threshold: Option<f64>,
    pub guard_factor: f64,
    pub max_retries: u32,
    pub lambda_rel: f64,
}

impl Default for ScheduleSection {
    fn default() -> Self {
        let c = OptimizeConfig::default();
        Self {
            gamma: c.gammas,
            max_iter: c.max_iter,
            stop_tol: c.stop_tol,
            stop_threshold: c.stop_threshold,
            guard_factor: c.guard_factor,
            max_retries: c.max_retries,
            lambda_rel: DEFAULT_LAMBDA_REL,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub dir: PathBuf,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self { dir: PathBuf::from("out") }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioConfig {
    pub simulation: SimulationSection,
    pub plant: PlantSection,
    pub controller: ControllerSection,
    pub weights: WeightsSection,
    pub profile: ProfileSection,
    pub noise: NoiseSection,
    pub disturbance: Option<DisturbanceSection>,
    pub schedule: ScheduleSection,
    pub output: OutputSection,
}

fn invalid(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

impl ScenarioConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path).map_err(|e| invalid(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| invalid(format!("{}: {e}", path.display())))
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        let cfg: Self = toml::from_str(text).map_err(|e| invalid(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let ts = self.simulation.ts;
        if !(ts > 0.0 && ts.is_finite()) {
            return Err(invalid(format!("simulation.ts must be > 0, got {ts}")));
        }
        make_reference_plant(self.plant.mass, self.plant.damping, ts).map_err(|e| invalid(format!("plant: {e}")))?;
        self.gains()?;
        if !(self.controller.n_filt > 0.0 && self.controller.n_filt.is_finite()) {
            return Err(invalid(format!("controller.n_filt must be > 0, got {}", self.controller.n_filt)));
        }
        self.cost_weights()?;
        self.bounds().validate().map_err(|e| invalid(format!("profile: {e}")))?;
        if !(self.profile.dwell >= 0.0 && self.profile.dwell.is_finite()) {
            return Err(invalid(format!("profile.dwell must be >= 0, got {}", self.profile.dwell)));
        }
        match (self.noise.sigma, self.noise.sigma_peak_fraction) {
            (Some(_), Some(_)) => return Err(invalid("noise: set either sigma or sigma_peak_fraction, not both")),
            (Some(s), None) | (None, Some(s)) if !(s >= 0.0 && s.is_finite()) => {
                return Err(invalid(format!("noise level must be >= 0, got {s}")))
            }
            _ => {}
        }
        if let Some(d) = &self.disturbance {
            if !(d.freq_hz > 0.0 && d.freq_hz.is_finite() && d.amplitude.is_finite()) {
                return Err(invalid("disturbance: freq_hz must be > 0 and amplitude finite"));
            }
        }
        self.optimize_config()
            .validate()
            .map_err(|e| invalid(format!("schedule: {e}")))?;
        Ok(())
    }

    pub fn gains(&self) -> Result<PidGains, CliError> {
        let c = &self.controller;
        PidGains::new(c.kp, c.ti, c.td).map_err(|e| invalid(format!("controller: {e}")))
    }

    pub fn cost_weights(&self) -> Result<CostWeights, CliError> {
        CostWeights::new(self.weights.w1, self.weights.w2).map_err(|e| invalid(format!("weights: {e}")))
    }

    pub fn bounds(&self) -> ProfileBounds {
        let p = &self.profile;
        ProfileBounds {
            v_max: p.v_max,
            a_max: p.a_max,
            j_max: p.j_max,
            s_max: p.s_max,
            displacement: p.displacement,
        }
    }

    pub fn noise_requested(&self) -> bool {
        self.noise.sigma.or(self.noise.sigma_peak_fraction).unwrap_or(0.0) > 0.0
    }

    pub fn optimize_config(&self) -> OptimizeConfig {
        let s = &self.schedule;
        OptimizeConfig {
            gammas: s.gamma.clone(),
            max_iter: s.max_iter,
            stop_tol: s.stop_tol,
            stop_threshold: s.stop_threshold,
            guard_factor: s.guard_factor,
            max_retries: s.max_retries,
            lambda_rel: s.lambda_rel,
        }
    }

    /// Reference profile including the dwell.
    pub fn profile(&self) -> Result<MotionProfile, CliError> {
        let ts = self.simulation.ts;
        let dwell = (self.profile.dwell / ts).round() as usize;
        plan_fourth_order(&self.bounds(), ts)
            .map(|p| p.with_dwell(dwell))
            .map_err(|e| CliError::Infeasible(format!("profile: {e}")))
    }

    /// Builds the simulation scenario, resolving a relative noise level
    /// against the noise-free run at the initial gains.
    pub fn scenario(&self) -> Result<Scenario, CliError> {
        let ts = self.simulation.ts;
        let gains = self.gains()?;
        let plant = make_reference_plant(self.plant.mass, self.plant.damping, ts).map_err(|e| invalid(e.to_string()))?;
        let basis =
            ControllerBasis::from_gains(&gains, ts, self.controller.n_filt).map_err(|e| invalid(e.to_string()))?;
        let reference = self.profile()?.pos;
        let disturbance = self
            .disturbance
            .as_ref()
            .map(|d| sinusoidal_disturbance(d.freq_hz, d.amplitude, reference.len(), ts));
        let mut scenario = Scenario {
            plant,
            basis,
            rho0: ParamVector::from_gains(&gains),
            reference,
            weights: self.cost_weights()?,
            noise_sigma: 0.0,
            seed: self.noise.seed,
            disturbance,
        };
        scenario.noise_sigma = match (self.noise.sigma, self.noise.sigma_peak_fraction) {
            (Some(s), _) => s,
            (None, Some(f)) if f > 0.0 => {
                f * peak_noise_free_error(&scenario, &scenario.rho0).map_err(|e| CliError::Failed(e.to_string()))?
            }
            _ => 0.0,
        };
        Ok(scenario)
    }
}
