//! Rest-to-rest fourth-order S-curve references.
//!
//! A rectangular velocity pulse of exact area `displacement` is smoothed by
//! three moving averages whose lengths bound acceleration, jerk and snap.
//! With `v_core` the smoothed pulse and `Δ` the backward difference, the
//! stored series are
//!
//! ```text
//! snap = Δ³ v_core / ts³
//! jerk = ½(1 + q)  Δ² v_core / ts²
//! acc  = ¼(1 + q)² Δ  v_core / ts
//! vel  = ⅛(1 + q)³    v_core
//! ```
//!
//! so every level is the exact trapezoidal integral of the one below it, and
//! the two-tap averages never raise a peak.

use std::io::{self, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Upper limit on generated profile length.
const MAX_SAMPLES: usize = 50_000_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TrajectoryError {
    #[error("invalid profile bounds: {0}")]
    InvalidBounds(String),
    #[error("sample period must be positive and finite, got {0}")]
    InvalidSamplePeriod(f64),
    #[error("displacement {displacement} is below one cruise sample (v_max·ts = {min}); use ts <= {suggested_ts:e} s or relax v_max")]
    TooShort {
        displacement: f64,
        min: f64,
        suggested_ts: f64,
    },
    #[error("profile would need more than {0} samples; increase ts or the bounds")]
    TooLong(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProfileBounds {
    pub v_max: f64,
    pub a_max: f64,
    pub j_max: f64,
    pub s_max: f64,
    pub displacement: f64,
}

impl Default for ProfileBounds {
    fn default() -> Self {
        Self {
            v_max: 0.05,
            a_max: 1.0,
            j_max: 100.0,
            s_max: 1e4,
            displacement: 0.01,
        }
    }
}

impl ProfileBounds {
    pub fn validate(&self) -> Result<(), TrajectoryError> {
        for (name, v) in [
            ("v_max", self.v_max),
            ("a_max", self.a_max),
            ("j_max", self.j_max),
            ("s_max", self.s_max),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(TrajectoryError::InvalidBounds(format!("{name} must be > 0, got {v}")));
            }
        }
        if self.displacement == 0.0 || !self.displacement.is_finite() {
            return Err(TrajectoryError::InvalidBounds(format!(
                "displacement must be nonzero and finite, got {}",
                self.displacement
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MotionProfile {
    pub ts: f64,
    pub pos: Vec<f64>,
    pub vel: Vec<f64>,
    pub acc: Vec<f64>,
    pub jerk: Vec<f64>,
    pub snap: Vec<f64>,
}

impl MotionProfile {
    pub fn len(&self) -> usize {
        self.pos.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pos.is_empty()
    }

    pub fn duration(&self) -> f64 {
        self.len().saturating_sub(1) as f64 * self.ts
    }

    /// Appends `samples` of standstill at the final position.
    pub fn with_dwell(mut self, samples: usize) -> Self {
        let last = self.pos.last().copied().unwrap_or(0.0);
        self.pos.extend(std::iter::repeat_n(last, samples));
        for s in [&mut self.vel, &mut self.acc, &mut self.jerk, &mut self.snap] {
            s.extend(std::iter::repeat_n(0.0, samples));
        }
        self
    }

    /// CSV with header `t,pos,vel,acc,jerk,snap`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "t,pos,vel,acc,jerk,snap")?;
        for k in 0..self.len() {
            writeln!(
                w,
                "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
                k as f64 * self.ts,
                self.pos[k],
                self.vel[k],
                self.acc[k],
                self.jerk[k],
                self.snap[k]
            )?;
        }
        Ok(())
    }
}

/// `ceil` that ignores representation noise just above an integer.
fn ceil_samples(x: f64) -> usize {
    let c = (x - 1e-9 * x.abs().max(1.0)).ceil();
    c.max(1.0) as usize
}

fn box_filter(x: &[f64], n: usize) -> Vec<f64> {
    // full convolution with a length-n moving average
    let mut out = vec![0.0; x.len() + n - 1];
    let inv = 1.0 / n as f64;
    let mut acc = 0.0;
    for (k, o) in out.iter_mut().enumerate() {
        if k < x.len() {
            acc += x[k];
        }
        if k >= n && k - n < x.len() {
            acc -= x[k - n];
        }
        *o = acc * inv;
    }
    out
}

fn backward_diff(x: &[f64]) -> Vec<f64> {
    let mut prev = 0.0;
    x.iter()
        .map(|&v| {
            let d = v - prev;
            prev = v;
            d
        })
        .collect()
}

fn pair_average(x: &[f64]) -> Vec<f64> {
    let mut prev = 0.0;
    x.iter()
        .map(|&v| {
            let a = 0.5 * (v + prev);
            prev = v;
            a
        })
        .collect()
}

fn peak(x: &[f64]) -> f64 {
    x.iter().fold(0.0, |m, v| m.max(v.abs()))
}

struct Windows {
    cruise: usize,
    acc: usize,
    jerk: usize,
    snap: usize,
}

impl Windows {
    fn total(&self) -> usize {
        self.cruise + self.acc + self.jerk + self.snap
    }
}

/// Smoothed pulse with one leading and three trailing zero samples so the
/// two-tap averages can run to completion.
fn core_velocity(height: f64, w: &Windows) -> Vec<f64> {
    let mut pulse = vec![0.0];
    pulse.extend(std::iter::repeat_n(height, w.cruise));
    let mut v = box_filter(&box_filter(&box_filter(&pulse, w.acc), w.jerk), w.snap);
    v.extend([0.0; 4]);
    v
}

pub fn plan_fourth_order(bounds: &ProfileBounds, ts: f64) -> Result<MotionProfile, TrajectoryError> {
    bounds.validate()?;
    if !(ts > 0.0 && ts.is_finite()) {
        return Err(TrajectoryError::InvalidSamplePeriod(ts));
    }
    let d = bounds.displacement;
    let min = bounds.v_max * ts;
    if d.abs() < min * (1.0 - 1e-12) {
        return Err(TrajectoryError::TooShort {
            displacement: d,
            min,
            suggested_ts: d.abs() / bounds.v_max,
        });
    }

    let cruise = ceil_samples(d.abs() / min);
    let height = d / (cruise as f64 * ts);
    let acc = ceil_samples(height.abs() / (bounds.a_max * ts));
    let a_peak = height.abs() / (acc as f64 * ts);
    let jerk = ceil_samples(a_peak / (bounds.j_max * ts));
    let j_peak = a_peak / (jerk as f64 * ts);
    let snap = ceil_samples(j_peak / (bounds.s_max * ts));
    let mut w = Windows {
        cruise,
        acc,
        jerk,
        snap,
    };

    // coincident box edges can stack; grow windows until measured peaks fit
    let tol = 1.0 + 1e-12;
    loop {
        if w.total() > MAX_SAMPLES {
            return Err(TrajectoryError::TooLong(MAX_SAMPLES));
        }
        let v = core_velocity(height, &w);
        let d2 = backward_diff(&backward_diff(&v));
        if peak(&d2) / (ts * ts) > bounds.j_max * tol {
            w.jerk += 1;
            continue;
        }
        let d3 = backward_diff(&d2);
        if peak(&d3) / (ts * ts * ts) > bounds.s_max * tol {
            w.snap += 1;
            continue;
        }
        return Ok(assemble(&v, ts));
    }
}

fn assemble(v_core: &[f64], ts: f64) -> MotionProfile {
    let d1 = backward_diff(v_core);
    let d2 = backward_diff(&d1);
    let d3 = backward_diff(&d2);
    let snap: Vec<f64> = d3.iter().map(|x| x / (ts * ts * ts)).collect();
    let jerk: Vec<f64> = pair_average(&d2).iter().map(|x| x / (ts * ts)).collect();
    let acc: Vec<f64> = pair_average(&pair_average(&d1)).iter().map(|x| x / ts).collect();
    let vel = pair_average(&pair_average(&pair_average(v_core)));
    let pos = cumulative_trapezoid(&vel, ts);
    MotionProfile {
        ts,
        pos,
        vel,
        acc,
        jerk,
        snap,
    }
}

/// `out[0] = 0`, `out[k] = out[k−1] + ts·(x[k−1] + x[k])/2`.
pub fn cumulative_trapezoid(x: &[f64], ts: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(x.len());
    let mut acc = 0.0;
    for k in 0..x.len() {
        if k > 0 {
            acc += 0.5 * ts * (x[k - 1] + x[k]);
        }
        out.push(acc);
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProfileCheck {
    pub name: &'static str,
    pub passed: bool,
    /// Worst observed value relative to the allowed value (≤ 1 passes for
    /// bounds; absolute residual over tolerance otherwise).
    pub margin: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProfileReport {
    pub checks: Vec<ProfileCheck>,
}

impl ProfileReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn get(&self, name: &str) -> Option<&ProfileCheck> {
        self.checks.iter().find(|c| c.name == name)
    }
}

impl std::fmt::Display for ProfileReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        for c in &self.checks {
            writeln!(
                f,
                "{:<24} {:<4} margin={:.6e}",
                c.name,
                if c.passed { "PASS" } else { "FAIL" },
                c.margin
            )?;
        }
        Ok(())
    }
}

/// Relative residual of `upper` against the trapezoidal integral of `lower`.
fn integration_residual(upper: &[f64], lower: &[f64], ts: f64) -> f64 {
    let reint = cumulative_trapezoid(lower, ts);
    let start = upper.first().copied().unwrap_or(0.0);
    let scale = peak(upper).max(f64::MIN_POSITIVE);
    upper
        .iter()
        .zip(&reint)
        .map(|(u, r)| (u - start - r).abs())
        .fold(0.0, f64::max)
        / scale
}

pub fn validate_profile(profile: &MotionProfile, bounds: &ProfileBounds) -> ProfileReport {
    let ts = profile.ts;
    let mut checks = Vec::new();
    let n = profile.len();
    let lengths_ok = [&profile.vel, &profile.acc, &profile.jerk, &profile.snap]
        .iter()
        .all(|s| s.len() == n);
    checks.push(ProfileCheck {
        name: "equal_lengths",
        passed: lengths_ok && n > 0,
        margin: if lengths_ok { 0.0 } else { 1.0 },
    });
    if !lengths_ok || n == 0 {
        return ProfileReport { checks };
    }

    let bound_tol = 1.0 + 1e-9;
    for (name, series, limit) in [
        ("vel_bound", &profile.vel, bounds.v_max),
        ("acc_bound", &profile.acc, bounds.a_max),
        ("jerk_bound", &profile.jerk, bounds.j_max),
        ("snap_bound", &profile.snap, bounds.s_max),
    ] {
        let m = peak(series) / limit;
        checks.push(ProfileCheck {
            name,
            passed: m <= bound_tol,
            margin: m,
        });
    }

    let integ_tol = 1e-9;
    for (name, upper, lower) in [
        ("jerk_from_snap", &profile.jerk, &profile.snap),
        ("acc_from_jerk", &profile.acc, &profile.jerk),
        ("vel_from_acc", &profile.vel, &profile.acc),
        ("pos_from_vel", &profile.pos, &profile.vel),
    ] {
        let r = integration_residual(upper, lower, ts);
        checks.push(ProfileCheck {
            name,
            passed: r <= integ_tol,
            margin: r / integ_tol,
        });
    }

    let rest = [&profile.vel, &profile.acc, &profile.jerk]
        .iter()
        .map(|s| {
            let scale = peak(s).max(f64::MIN_POSITIVE);
            (s[0].abs().max(s[n - 1].abs())) / scale
        })
        .fold(0.0, f64::max);
    checks.push(ProfileCheck {
        name: "rest_to_rest",
        passed: rest <= 1e-9,
        margin: rest / 1e-9,
    });

    let terminal = (profile.pos[n - 1] - profile.pos[0] - bounds.displacement).abs() / (bounds.v_max * ts);
    checks.push(ProfileCheck {
        name: "terminal_position",
        passed: terminal <= 1.0,
        margin: terminal,
    });

    ProfileReport { checks }
}
