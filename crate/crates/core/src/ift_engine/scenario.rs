use super::{CostWeights, IftError};
use crate::controller::{ControllerBasis, ParamVector, PidGains, DEFAULT_N_FILT};
use crate::plant_sim::{make_reference_plant, simulate_closed_loop, ExperimentRecord, NoiseSpec, PlantModel};
use crate::trajectory::{plan_fourth_order, ProfileBounds};

pub const DEFAULT_TS: f64 = 1.0 / 5000.0;
/// Surrogate plant `1/(m s² + c s)`; see README for why it is not 1 kg.
pub const BUNDLED_MASS: f64 = 1e-3;
pub const BUNDLED_DAMPING: f64 = 8.0;
pub const BUNDLED_DWELL_S: f64 = 0.1;
/// Y-axis gains before tuning.
pub const INITIAL_GAINS: PidGains = PidGains {
    kp: 30.0,
    ti: 0.002,
    td: 0.00012,
};

/// Everything an experiment needs apart from `ρ`.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub plant: PlantModel,
    pub basis: ControllerBasis,
    pub rho0: ParamVector,
    pub reference: Vec<f64>,
    pub weights: CostWeights,
    pub noise_sigma: f64,
    pub seed: u64,
    /// Output disturbance applied in the two normal experiments. The special
    /// experiment is run disturbance-free so that it measures the loop
    /// response to `e¹` alone.
    pub disturbance: Option<Vec<f64>>,
}

impl Scenario {
    /// Default surrogate plant, initial gains and S-curve, noise off.
    pub fn bundled() -> Result<Self, IftError> {
        let plant = make_reference_plant(BUNDLED_MASS, BUNDLED_DAMPING, DEFAULT_TS)?;
        let basis = ControllerBasis::from_gains(&INITIAL_GAINS, DEFAULT_TS, DEFAULT_N_FILT)?;
        let dwell = (BUNDLED_DWELL_S / DEFAULT_TS).round() as usize;
        let profile = plan_fourth_order(&ProfileBounds::default(), DEFAULT_TS)
            .map_err(|e| IftError::InvalidConfig(e.to_string()))?
            .with_dwell(dwell);
        Ok(Self {
            plant,
            basis,
            rho0: ParamVector::from_gains(&INITIAL_GAINS),
            reference: profile.pos,
            weights: CostWeights::default(),
            noise_sigma: 0.0,
            seed: 0,
            disturbance: None,
        })
    }

    pub fn ts(&self) -> f64 {
        self.basis.ts()
    }

    pub fn with_noise(mut self, sigma: f64, seed: u64) -> Self {
        self.noise_sigma = sigma;
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<(), IftError> {
        self.weights.validate()?;
        self.rho0.validate()?;
        if self.reference.is_empty() {
            return Err(IftError::InvalidConfig("reference is empty".into()));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(IftError::InvalidConfig(format!(
                "noise sigma must be >= 0, got {}",
                self.noise_sigma
            )));
        }
        if let Some(d) = &self.disturbance {
            if d.len() != self.reference.len() {
                return Err(IftError::LengthMismatch(self.reference.len(), d.len()));
            }
        }
        Ok(())
    }

    /// One closed-loop run of `ρ` against `reference`.
    pub fn simulate(
        &self,
        rho: &ParamVector,
        reference: &[f64],
        noise: &NoiseSpec,
        with_disturbance: bool,
    ) -> Result<ExperimentRecord, IftError> {
        let c = self.basis.controller(rho)?;
        let d = if with_disturbance { self.disturbance.as_deref() } else { None };
        Ok(simulate_closed_loop(&self.plant, &c, reference, noise, d)?)
    }
}
