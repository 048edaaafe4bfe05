//! Fixed-structure PID controller `C(s, ρ) = ρᵀ C̄(s)` and its gradient filters.
//!
//! The tunable vector is `ρ = [K_p, K_p/T_i, K_p·T_d]` and the basis is
//! `C̄(s) = [1, 1/s, s/(1 + T_f s)]`. The derivative filter constant `T_f`
//! belongs to the basis, not to `ρ`, so `C` stays linear in `ρ` and
//! `∂C/∂ρ_j = C̄_j` holds exactly for the controller that is actually in the
//! loop.

use std::f64::consts::PI;

use nalgebra::Complex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::filter::{bilinear, FilterError, LinearFilter};

/// Default derivative filter ratio `T_d / T_f`.
pub const DEFAULT_N_FILT: f64 = 100.0;

/// Poles closer than this to the unit circle count as marginal.
const UNIT_CIRCLE_MARGIN: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ControllerError {
    #[error("invalid PID gains: {0}")]
    InvalidGains(String),
    #[error("invalid parameter vector: {0}")]
    InvalidParams(String),
    #[error("sample period must be positive and finite, got {0}")]
    InvalidSamplePeriod(f64),
    #[error("derivative filter coefficient must be positive and finite, got {0}")]
    InvalidFilterCoefficient(f64),
    #[error("gradient filter denominator has a root at z = {re:.6} {im:+.6}i (|z| = {mag:.9}), outside the open unit disk")]
    UnstableGradientFilter { re: f64, im: f64, mag: f64 },
    #[error("frequency {0} rad/s must be positive and below Nyquist ({1} rad/s)")]
    FrequencyOutOfRange(f64, f64),
    #[error(transparent)]
    Filter(#[from] FilterError),
}

/// Textbook PID parameters: `K_p (1 + 1/(T_i s) + T_d s)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PidGains {
    pub kp: f64,
    pub ti: f64,
    pub td: f64,
}

impl PidGains {
    pub fn new(kp: f64, ti: f64, td: f64) -> Result<Self, ControllerError> {
        let g = Self { kp, ti, td };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<(), ControllerError> {
        if !(self.kp > 0.0 && self.kp.is_finite()) {
            return Err(ControllerError::InvalidGains(format!("kp must be > 0, got {}", self.kp)));
        }
        if !(self.ti > 0.0 && self.ti.is_finite()) {
            return Err(ControllerError::InvalidGains(format!("ti must be > 0 and finite, got {}", self.ti)));
        }
        if !(self.td >= 0.0 && self.td.is_finite()) {
            return Err(ControllerError::InvalidGains(format!("td must be >= 0, got {}", self.td)));
        }
        Ok(())
    }
}

/// Controller parameter vector `ρ = [K_p, K_i, K_d]` with `K_i = K_p/T_i`
/// and `K_d = K_p·T_d`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParamVector([f64; 3]);

impl ParamVector {
    pub fn new(rho: [f64; 3]) -> Result<Self, ControllerError> {
        let p = Self(rho);
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), ControllerError> {
        let [kp, ki, kd] = self.0;
        if !(kp > 0.0 && kp.is_finite()) {
            return Err(ControllerError::InvalidParams(format!("rho[0] must be > 0, got {kp}")));
        }
        if !(ki > 0.0 && ki.is_finite()) {
            return Err(ControllerError::InvalidParams(format!("rho[1] must be > 0, got {ki}")));
        }
        if !(kd >= 0.0 && kd.is_finite()) {
            return Err(ControllerError::InvalidParams(format!("rho[2] must be >= 0, got {kd}")));
        }
        Ok(())
    }

    pub fn from_gains(g: &PidGains) -> Self {
        Self([g.kp, g.kp / g.ti, g.kp * g.td])
    }

    pub fn to_gains(&self) -> PidGains {
        let [kp, ki, kd] = self.0;
        PidGains {
            kp,
            ti: kp / ki,
            td: kd / kp,
        }
    }

    pub fn as_array(&self) -> [f64; 3] {
        self.0
    }

    pub fn kp(&self) -> f64 {
        self.0[0]
    }

    pub fn ki(&self) -> f64 {
        self.0[1]
    }

    pub fn kd(&self) -> f64 {
        self.0[2]
    }

    /// Continuous response of the unfiltered PID `K_p + K_i/(jω) + K_d jω`.
    /// Frequencies must lie in `(0, π/ts)`.
    pub fn frequency_response(
        &self,
        omegas: &[f64],
        ts: f64,
    ) -> Result<Vec<FrequencyPoint>, ControllerError> {
        let nyquist = PI / ts;
        omegas
            .iter()
            .map(|&w| {
                if !(w > 0.0 && w < nyquist) {
                    return Err(ControllerError::FrequencyOutOfRange(w, nyquist));
                }
                let c = Complex::new(self.kp(), self.kd() * w - self.ki() / w);
                Ok(FrequencyPoint {
                    omega: w,
                    magnitude: c.norm(),
                    phase: c.arg(),
                })
            })
            .collect()
    }
}

impl std::ops::Index<usize> for ParamVector {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FrequencyPoint {
    /// rad/s
    pub omega: f64,
    pub magnitude: f64,
    /// radians
    pub phase: f64,
}

/// The parameter-independent part `C̄(s)` of the controller together with
/// its discretization settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControllerBasis {
    ts: f64,
    tf: f64,
}

impl ControllerBasis {
    pub fn new(ts: f64, tf: f64) -> Result<Self, ControllerError> {
        if !(ts > 0.0 && ts.is_finite()) {
            return Err(ControllerError::InvalidSamplePeriod(ts));
        }
        if !(tf > 0.0 && tf.is_finite()) {
            return Err(ControllerError::InvalidFilterCoefficient(tf));
        }
        Ok(Self { ts, tf })
    }

    /// Sets `T_f = T_d / n_filt`. With `T_d = 0` the derivative channel is
    /// idle and `T_f = ts / n_filt` is used so later tuning can still move
    /// `K_d` off zero.
    pub fn from_gains(gains: &PidGains, ts: f64, n_filt: f64) -> Result<Self, ControllerError> {
        gains.validate()?;
        if !(n_filt > 0.0 && n_filt.is_finite()) {
            return Err(ControllerError::InvalidFilterCoefficient(n_filt));
        }
        if !(ts > 0.0 && ts.is_finite()) {
            return Err(ControllerError::InvalidSamplePeriod(ts));
        }
        let tf = if gains.td > 0.0 { gains.td / n_filt } else { ts / n_filt };
        Self::new(ts, tf)
    }

    pub fn ts(&self) -> f64 {
        self.ts
    }

    pub fn tf(&self) -> f64 {
        self.tf
    }

    /// `Kd s² + Kp s + Ki` generalized for the derivative filter: the
    /// numerator of `C` over `s (1 + T_f s)`.
    fn closed_numerator(&self, rho: &ParamVector) -> [f64; 3] {
        let [kp, ki, kd] = rho.as_array();
        [ki, kp + ki * self.tf, kp * self.tf + kd]
    }

    /// Discrete realization of `C(s, ρ)`.
    pub fn controller(&self, rho: &ParamVector) -> Result<LinearFilter, ControllerError> {
        rho.validate()?;
        Ok(bilinear(&self.closed_numerator(rho), &[0.0, 1.0, self.tf], self.ts)?)
    }

    /// The three filters `(∂C/∂ρ_j)/C`, sharing one denominator.
    pub fn gradient_filters(&self, rho: &ParamVector) -> Result<[LinearFilter; 3], ControllerError> {
        rho.validate()?;
        let den = self.closed_numerator(rho);
        let tf = self.tf;
        let nums = [[0.0, 1.0, tf], [1.0, tf, 0.0], [0.0, 0.0, 1.0]];
        let filters = [
            bilinear(&nums[0], &den, self.ts)?,
            bilinear(&nums[1], &den, self.ts)?,
            bilinear(&nums[2], &den, self.ts)?,
        ];
        if let Some(p) = filters[0]
            .poles()
            .into_iter()
            .find(|p| p.norm() >= 1.0 - UNIT_CIRCLE_MARGIN)
        {
            return Err(ControllerError::UnstableGradientFilter {
                re: p.re,
                im: p.im,
                mag: p.norm(),
            });
        }
        Ok(filters)
    }
}

/// Discrete PID realization from textbook gains.
pub fn make_controller(gains: &PidGains, ts: f64, n_filt: f64) -> Result<LinearFilter, ControllerError> {
    let basis = ControllerBasis::from_gains(gains, ts, n_filt)?;
    basis.controller(&ParamVector::from_gains(gains))
}

/// Gradient filters for `ρ` on the given basis.
pub fn gradient_filters(rho: &ParamVector, basis: &ControllerBasis) -> Result<[LinearFilter; 3], ControllerError> {
    basis.gradient_filters(rho)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    const TS: f64 = 1.0 / 5000.0;

    fn table_before() -> PidGains {
        PidGains::new(30.0, 0.002, 0.00012).unwrap()
    }

    #[test]
    fn gains_validation() {
        assert!(PidGains::new(0.0, 1.0, 0.0).is_err());
        assert!(PidGains::new(1.0, 0.0, 0.0).is_err());
        assert!(PidGains::new(1.0, f64::INFINITY, 0.0).is_err());
        assert!(PidGains::new(1.0, 1.0, -1e-9).is_err());
        assert!(PidGains::new(1.0, 1.0, 0.0).is_ok());
        assert!(ParamVector::new([1.0, 0.0, 0.0]).is_err());
        assert!(ParamVector::new([1.0, 1.0, 0.0]).is_ok());
    }

    #[test]
    fn round_trip_gains() {
        let g = table_before();
        let back = ParamVector::from_gains(&g).to_gains();
        assert_relative_eq!(back.kp, g.kp, max_relative = 1e-15);
        assert_relative_eq!(back.ti, g.ti, max_relative = 1e-15);
        assert_relative_eq!(back.td, g.td, max_relative = 1e-15);
    }

    #[test]
    fn controller_has_integrator_pole() {
        let c = make_controller(&table_before(), TS, DEFAULT_N_FILT).unwrap();
        let poles = c.poles();
        assert!(poles.iter().any(|p| (p - Complex::new(1.0, 0.0)).norm() < 1e-12));
        assert!(poles.iter().filter(|p| (p.re - 1.0).abs() > 1e-9).all(|p| p.norm() < 1.0));
    }

    #[test]
    fn rejects_bad_settings() {
        assert!(make_controller(&table_before(), 0.0, 100.0).is_err());
        assert!(make_controller(&table_before(), TS, 0.0).is_err());
        let bad = PidGains { kp: 1.0, ti: f64::INFINITY, td: 0.0 };
        assert!(make_controller(&bad, TS, 100.0).is_err());
    }

    #[test]
    fn step_response_slope_is_integral_gain() {
        let g = table_before();
        let mut c = make_controller(&g, TS, DEFAULT_N_FILT).unwrap();
        let y = c.filter(&vec![1.0; 4000]);
        let slope = y[3999] - y[3998];
        // trapezoidal integration of a unit step adds K_i·ts per sample
        assert_relative_eq!(slope, g.kp / g.ti * TS, max_relative = 1e-9);
    }

    #[test]
    fn gradient_filters_dc_gains() {
        let rho = ParamVector::from_gains(&table_before());
        let basis = ControllerBasis::from_gains(&table_before(), TS, DEFAULT_N_FILT).unwrap();
        let f = basis.gradient_filters(&rho).unwrap();
        // s→0 limits of [s(1+Tf s), 1+Tf s, s²]/N(s) are [0, 1/Ki, 0]
        assert!(f[0].dc_gain().abs() < 1e-9);
        assert_relative_eq!(f[1].dc_gain(), 1.0 / rho.ki(), max_relative = 1e-9);
        assert!(f[2].dc_gain().abs() < 1e-9);
        // shared denominator
        assert_eq!(f[0].den(), f[1].den());
        assert_eq!(f[1].den(), f[2].den());
    }

    #[test]
    fn optimized_gains_give_stable_filters() {
        let after = PidGains::new(25.1221, 2.8459e-4, 1.3490e-4).unwrap();
        let basis = ControllerBasis::from_gains(&after, TS, DEFAULT_N_FILT).unwrap();
        let f = basis.gradient_filters(&ParamVector::from_gains(&after)).unwrap();
        assert!(f.iter().all(|fi| fi.spectral_radius() < 1.0));
    }

    #[test]
    fn marginal_gradient_filter_is_reported() {
        // no proportional action and Tf-free numerator Ki + Kd s² puts the
        // roots on the imaginary axis, which the bilinear map sends to |z| = 1
        let basis = ControllerBasis::new(TS, 1e-12).unwrap();
        let rho = ParamVector([1e-30, 1.0, 1.0]);
        match basis.gradient_filters(&rho) {
            Err(ControllerError::UnstableGradientFilter { mag, .. }) => assert!(mag > 1.0 - 1e-9),
            other => panic!("expected unstable filter, got {other:?}"),
        }
    }

    #[test]
    fn phase_is_zero_where_imaginary_parts_cancel() {
        let rho = ParamVector::from_gains(&table_before());
        let w0 = (rho.ki() / rho.kd()).sqrt();
        let r = rho.frequency_response(&[w0], TS).unwrap();
        assert!(r[0].phase.abs() < 1e-12);
        assert_relative_eq!(r[0].magnitude, rho.kp(), max_relative = 1e-12);
    }

    #[test]
    fn low_frequency_asymptote_is_integrator() {
        let rho = ParamVector::from_gains(&table_before());
        let w = 1e-3;
        let r = rho.frequency_response(&[w], TS).unwrap();
        assert_relative_eq!(r[0].magnitude, rho.ki() / w, max_relative = 1e-6);
    }

    #[test]
    fn frequency_precondition() {
        let rho = ParamVector::from_gains(&table_before());
        assert!(rho.frequency_response(&[0.0], TS).is_err());
        assert!(rho.frequency_response(&[PI / TS], TS).is_err());
    }

    #[test]
    fn before_after_responses_differ_most_at_low_frequency() {
        let before = ParamVector::from_gains(&table_before());
        let after = ParamVector::from_gains(&PidGains::new(25.1221, 2.8459e-4, 1.3490e-4).unwrap());
        let grid: Vec<f64> = (0..200).map(|i| 10f64.powf(-1.0 + 5.0 * i as f64 / 199.0)).collect();
        let grid: Vec<f64> = grid.into_iter().filter(|&w| w < PI / TS).collect();
        let rb = before.frequency_response(&grid, TS).unwrap();
        let ra = after.frequency_response(&grid, TS).unwrap();
        let (idx, _) = rb
            .iter()
            .zip(&ra)
            .map(|(b, a)| (a.magnitude / b.magnitude).log10().abs())
            .enumerate()
            .fold((0, f64::MIN), |acc, (i, d)| if d > acc.1 { (i, d) } else { acc });
        assert!(grid[idx] < 100.0, "largest log-magnitude gap at {} rad/s", grid[idx]);
    }
}
