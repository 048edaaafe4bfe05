use serde::{Deserialize, Serialize};

use super::IftError;
use crate::exec::compensated_dot;
use crate::plant_sim::ExperimentRecord;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostWeights {
    pub w1: f64,
    pub w2: f64,
}

impl Default for CostWeights {
    fn default() -> Self {
        Self { w1: 1e7, w2: 1.0 }
    }
}

impl CostWeights {
    pub fn new(w1: f64, w2: f64) -> Result<Self, IftError> {
        let w = Self { w1, w2 };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<(), IftError> {
        if !(self.w1 >= 0.0 && self.w2 >= 0.0 && self.w1.is_finite() && self.w2.is_finite()) {
            return Err(IftError::InvalidWeights(format!(
                "w1 and w2 must be finite and >= 0, got w1={} w2={}",
                self.w1, self.w2
            )));
        }
        if self.w1 + self.w2 <= 0.0 {
            return Err(IftError::InvalidWeights("w1 + w2 must be > 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostBreakdown {
    pub total: f64,
    pub tracking: f64,
    pub variation: f64,
}

/// `J = w1·eᵀe + w2·u̇ᵀu̇` over the whole record.
pub fn evaluate_cost(record: &ExperimentRecord, weights: &CostWeights) -> Result<CostBreakdown, IftError> {
    if record.is_empty() {
        return Err(IftError::EmptyRecord);
    }
    if record.e.len() != record.udot.len() {
        return Err(IftError::LengthMismatch(record.e.len(), record.udot.len()));
    }
    let tracking = weights.w1 * compensated_dot(&record.e, &record.e);
    let variation = weights.w2 * compensated_dot(&record.udot, &record.udot);
    Ok(CostBreakdown {
        total: tracking + variation,
        tracking,
        variation,
    })
}
