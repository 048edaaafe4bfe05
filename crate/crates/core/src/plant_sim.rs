//! Closed-loop simulator used as a stand-in for the physical stage.
//!
//! Loop convention per sample `k`:
//!
//! ```text
//! y[k]          = y_plant[k] + n[k] + d[k]     (measured output)
//! e[k]          = r[k] − y[k]
//! u[k]          = C(e)[k]
//! y_plant[k+1]  = P(u)[k]                       (one-sample compute delay)
//! ```

use std::f64::consts::PI;
use std::io::{self, Write};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::filter::{bilinear, FilterError, LinearFilter};

/// Divergence guard: abort when |y| exceeds this multiple of the input scale.
pub const DIVERGENCE_FACTOR: f64 = 1e6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("closed loop diverged at sample {sample} (|y| = {magnitude:e} > {threshold:e})")]
    Unstable {
        sample: usize,
        magnitude: f64,
        threshold: f64,
    },
    #[error("reference contains non-finite values")]
    NonFiniteReference,
    #[error("disturbance length {got} does not match reference length {expected}")]
    DisturbanceLength { expected: usize, got: usize },
    #[error("controller and plant sample periods differ ({0} vs {1})")]
    SamplePeriodMismatch(f64, f64),
    #[error("invalid plant: {0}")]
    InvalidPlant(String),
    #[error("invalid noise spec: {0}")]
    InvalidNoise(String),
    #[error(transparent)]
    Filter(#[from] FilterError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlantModel {
    pub filter: LinearFilter,
    pub label: String,
}

impl PlantModel {
    pub fn new(filter: LinearFilter, label: impl Into<String>) -> Self {
        Self {
            filter,
            label: label.into(),
        }
    }

    pub fn ts(&self) -> f64 {
        self.filter.ts()
    }
}

/// Damped double integrator `1/(m s² + c s)`, bilinear-discretized.
pub fn make_reference_plant(mass: f64, damping: f64, ts: f64) -> Result<PlantModel, SimError> {
    if !(mass > 0.0 && mass.is_finite()) {
        return Err(SimError::InvalidPlant(format!("mass must be > 0, got {mass}")));
    }
    if !(damping >= 0.0 && damping.is_finite()) {
        return Err(SimError::InvalidPlant(format!("damping must be >= 0, got {damping}")));
    }
    let filter = bilinear(&[1.0], &[0.0, damping, mass], ts)?;
    Ok(PlantModel::new(
        filter,
        format!("1/({mass:e} s^2 + {damping:e} s)"),
    ))
}

/// Measurement noise for one experiment: i.i.d. `N(0, sigma²)` drawn from
/// ChaCha stream `stream_id` of `seed`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub sigma: f64,
    pub seed: u64,
    pub stream_id: u64,
}

impl NoiseSpec {
    pub fn off() -> Self {
        Self {
            sigma: 0.0,
            seed: 0,
            stream_id: 0,
        }
    }

    pub fn new(sigma: f64, seed: u64, stream_id: u64) -> Result<Self, SimError> {
        if !(sigma >= 0.0 && sigma.is_finite()) {
            return Err(SimError::InvalidNoise(format!("sigma must be >= 0, got {sigma}")));
        }
        Ok(Self {
            sigma,
            seed,
            stream_id,
        })
    }

    /// Stream for experiment `experiment` (1, 2 or 3) of run `index`
    /// (an iteration or a Monte-Carlo trial).
    pub fn for_experiment(sigma: f64, seed: u64, index: u64, experiment: u8) -> Self {
        debug_assert!((1..=3).contains(&experiment));
        Self {
            sigma,
            seed,
            stream_id: index * 4 + experiment as u64,
        }
    }

    pub fn is_off(&self) -> bool {
        self.sigma == 0.0
    }

    pub fn samples(&self, len: usize) -> Vec<f64> {
        if self.is_off() {
            return vec![0.0; len];
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream_id);
        (0..len)
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut rng);
                self.sigma * z
            })
            .collect()
    }
}

/// Sampled signals from one closed-loop run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRecord {
    pub ts: f64,
    pub r: Vec<f64>,
    pub y: Vec<f64>,
    pub u: Vec<f64>,
    pub e: Vec<f64>,
    pub udot: Vec<f64>,
}

impl ExperimentRecord {
    pub fn len(&self) -> usize {
        self.r.len()
    }

    pub fn is_empty(&self) -> bool {
        self.r.is_empty()
    }

    /// CSV with header `t,r,y,u,e,udot` and 17 significant digits.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "t,r,y,u,e,udot")?;
        for k in 0..self.len() {
            writeln!(
                w,
                "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
                k as f64 * self.ts,
                self.r[k],
                self.y[k],
                self.u[k],
                self.e[k],
                self.udot[k]
            )?;
        }
        Ok(())
    }
}

/// Backward difference `(u[k] − u[k−1])/ts` with `u̇[0] = 0`.
pub fn derivative_series(u: &[f64], ts: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(u.len());
    if u.is_empty() {
        return out;
    }
    out.push(0.0);
    out.extend(u.windows(2).map(|w| (w[1] - w[0]) / ts));
    out
}

/// `d[k] = amplitude · sin(2π f k ts)`.
pub fn sinusoidal_disturbance(freq_hz: f64, amplitude: f64, len: usize, ts: f64) -> Vec<f64> {
    (0..len)
        .map(|k| amplitude * (2.0 * PI * freq_hz * k as f64 * ts).sin())
        .collect()
}

/// Runs one experiment from zero initial state.
pub fn simulate_closed_loop(
    plant: &PlantModel,
    controller: &LinearFilter,
    reference: &[f64],
    noise: &NoiseSpec,
    disturbance: Option<&[f64]>,
) -> Result<ExperimentRecord, SimError> {
    let n = reference.len();
    let ts = plant.ts();
    if (controller.ts() - ts).abs() > 1e-12 * ts {
        return Err(SimError::SamplePeriodMismatch(controller.ts(), ts));
    }
    if reference.iter().any(|r| !r.is_finite()) {
        return Err(SimError::NonFiniteReference);
    }
    if let Some(d) = disturbance {
        if d.len() != n {
            return Err(SimError::DisturbanceLength {
                expected: n,
                got: d.len(),
            });
        }
    }
    let noise_seq = noise.samples(n);
    let scale = reference
        .iter()
        .chain(disturbance.unwrap_or(&[]))
        .fold(noise.sigma, |m, v| m.max(v.abs()));
    let threshold = DIVERGENCE_FACTOR * scale;

    let mut c = controller.clone();
    c.reset();
    let mut p = plant.filter.clone();
    p.reset();

    let mut y = Vec::with_capacity(n);
    let mut u = Vec::with_capacity(n);
    let mut e = Vec::with_capacity(n);
    let mut y_plant = 0.0;
    for k in 0..n {
        let d = disturbance.map_or(0.0, |d| d[k]);
        let yk = y_plant + noise_seq[k] + d;
        let ek = reference[k] - yk;
        let uk = c.step(ek);
        y.push(yk);
        e.push(ek);
        u.push(uk);
        y_plant = p.step(uk);
        if !y_plant.is_finite() || y_plant.abs() > threshold {
            return Err(SimError::Unstable {
                sample: k + 1,
                magnitude: y_plant.abs(),
                threshold,
            });
        }
    }
    let udot = derivative_series(&u, ts);
    Ok(ExperimentRecord {
        ts,
        r: reference.to_vec(),
        y,
        u,
        e,
        udot,
    })
}
