//! Square-coil forcer model of the planar maglev stage.
//!
//! Each phase sees force constants that are a sinusoid in `x` and decay
//! exponentially in the air gap `z`. The second phase is shifted by `3τ`, so
//! `Φ(x, z)` is a scaled rotation: its determinant is independent of `x`.

use std::f64::consts::{FRAC_PI_2, SQRT_2};

use nalgebra::{Matrix2, Vector2};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const DEFAULT_ALPHA: f64 = 1.144;
pub const DEFAULT_BETA: f64 = 2.3924;
pub const DEFAULT_TAU: f64 = 0.01;
pub const DEFAULT_CURRENT_LIMIT: f64 = 1.2;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MaglevError {
    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),
    #[error("air gap must be non-negative and finite, got {0}")]
    InvalidGap(f64),
    #[error("requested force needs i1={:.6} A, i2={:.6} A, beyond the {limit} A limit", .currents.i1, .currents.i2)]
    OverLimit { currents: PhaseCurrents, limit: f64 },
    #[error("force matrix is singular at this pose (det = {det:e})")]
    Singular { det: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaglevGeometry {
    pub tau: f64,
    pub alpha: f64,
    pub beta: f64,
    pub cf: f64,
    pub n_coils: u32,
}

impl Default for MaglevGeometry {
    fn default() -> Self {
        Self {
            tau: DEFAULT_TAU,
            alpha: DEFAULT_ALPHA,
            beta: DEFAULT_BETA,
            cf: 1.0,
            n_coils: 4,
        }
    }
}

impl MaglevGeometry {
    pub fn new(tau: f64, alpha: f64, beta: f64, cf: f64, n_coils: u32) -> Result<Self, MaglevError> {
        let g = Self {
            tau,
            alpha,
            beta,
            cf,
            n_coils,
        };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<(), MaglevError> {
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(MaglevError::InvalidGeometry(format!("tau must be > 0, got {}", self.tau)));
        }
        if !(self.cf > 0.0 && self.cf.is_finite()) {
            return Err(MaglevError::InvalidGeometry(format!("cf must be > 0, got {}", self.cf)));
        }
        if !self.alpha.is_finite() || !self.beta.is_finite() {
            return Err(MaglevError::InvalidGeometry("alpha and beta must be finite".into()));
        }
        if self.n_coils == 0 {
            return Err(MaglevError::InvalidGeometry("n_coils must be >= 1".into()));
        }
        if self.margin_is_degenerate() {
            return Err(MaglevError::InvalidGeometry(format!(
                "alpha={} beta={} make the phase matrix singular",
                self.alpha, self.beta
            )));
        }
        Ok(())
    }

    /// Spatial wave number, `γτ = π/2`.
    pub fn gamma(&self) -> f64 {
        FRAC_PI_2 / self.tau
    }

    fn margin_is_degenerate(&self) -> bool {
        invertibility_margin(self).abs() <= 1e-12 * SQRT_2 * self.tau
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseCurrents {
    pub i1: f64,
    pub i2: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForceVector {
    pub fx: f64,
    pub fz: f64,
}

/// `√2τ − (2α/γ)·cos(γτ/2 + β)`; the phase matrix is invertible iff nonzero.
pub fn invertibility_margin(geom: &MaglevGeometry) -> f64 {
    let g = geom.gamma();
    SQRT_2 * geom.tau - (2.0 * geom.alpha / g) * (0.5 * g * geom.tau + geom.beta).cos()
}

/// Common amplitude `C_f e^{−γz}(−√2τ + (2α/γ)cos(γτ/2+β))`.
fn amplitude(z: f64, geom: &MaglevGeometry) -> f64 {
    -geom.cf * (-geom.gamma() * z).exp() * invertibility_margin(geom)
}

fn check_gap(z: f64) -> Result<(), MaglevError> {
    if z >= 0.0 && z.is_finite() {
        Ok(())
    } else {
        Err(MaglevError::InvalidGap(z))
    }
}

/// `(K_x, K_z)` for a single coil at offset `x` and gap `z`.
pub fn force_constants(x: f64, z: f64, geom: &MaglevGeometry) -> Result<(f64, f64), MaglevError> {
    check_gap(z)?;
    let a = amplitude(z, geom);
    let (s, c) = (geom.gamma() * x).sin_cos();
    Ok((a * s, a * c))
}

pub fn phi_matrix(x: f64, z: f64, geom: &MaglevGeometry) -> Result<Matrix2<f64>, MaglevError> {
    let (kx1, kz1) = force_constants(x, z, geom)?;
    let (kx2, kz2) = force_constants(x + 3.0 * geom.tau, z, geom)?;
    Ok(Matrix2::new(kx1, kx2, kz1, kz2))
}

/// `(C_f e^{−γz})² · margin²`.
pub fn closed_form_determinant(z: f64, geom: &MaglevGeometry) -> Result<f64, MaglevError> {
    check_gap(z)?;
    let a = amplitude(z, geom);
    Ok(a * a)
}

pub fn direct_determinant(x: f64, z: f64, geom: &MaglevGeometry) -> Result<f64, MaglevError> {
    let m = phi_matrix(x, z, geom)?;
    Ok(m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)])
}

pub fn forcer_force(x: f64, z: f64, currents: PhaseCurrents, geom: &MaglevGeometry) -> Result<ForceVector, MaglevError> {
    let f = phi_matrix(x, z, geom)? * Vector2::new(currents.i1, currents.i2) * f64::from(geom.n_coils);
    Ok(ForceVector { fx: f[0], fz: f[1] })
}

/// Currents realising `desired` at pose `(x, z)`. Requests beyond `limit`
/// are rejected with the unclamped solution attached.
pub fn allocate_currents(
    desired: ForceVector,
    x: f64,
    z: f64,
    geom: &MaglevGeometry,
    limit: f64,
) -> Result<PhaseCurrents, MaglevError> {
    let phi = phi_matrix(x, z, geom)?;
    let det = phi[(0, 0)] * phi[(1, 1)] - phi[(0, 1)] * phi[(1, 0)];
    // compare against the determinant a unit margin would give at this gap
    let reference = (geom.cf * (-geom.gamma() * z).exp() * SQRT_2 * geom.tau).powi(2);
    if det.is_nan() || det.abs() <= 1e-24 * reference {
        return Err(MaglevError::Singular { det });
    }
    let inv = phi.try_inverse().ok_or(MaglevError::Singular { det })?;
    let i = inv * Vector2::new(desired.fx, desired.fz) / f64::from(geom.n_coils);
    let currents = PhaseCurrents { i1: i[0], i2: i[1] };
    if currents.i1.abs() > limit || currents.i2.abs() > limit {
        return Err(MaglevError::OverLimit { currents, limit });
    }
    Ok(currents)
}
