//! Discrete rational transfer functions with internal state.
//!
//! Coefficients are stored in ascending powers of the unit delay `q = z⁻¹`:
//!
//! ```text
//!          num[0] + num[1] q + … + num[m] q^m
//! H(q) = --------------------------------------
//!          den[0] + den[1] q + … + den[n] q^n
//! ```
//!
//! Realized as a direct form II transposed structure so one `step` costs
//! `O(n)` and the state is exactly the delay line.

use nalgebra::{Complex, DMatrix};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FilterError {
    #[error("denominator is empty")]
    EmptyDenominator,
    #[error("leading denominator coefficient is zero")]
    ZeroLeadingCoefficient,
    #[error("filter is improper: numerator has {num} coefficients, denominator {den}")]
    Improper { num: usize, den: usize },
    #[error("non-finite coefficient")]
    NonFinite,
    #[error("sample period must be positive and finite, got {0}")]
    InvalidSamplePeriod(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearFilter {
    num: Vec<f64>,
    den: Vec<f64>,
    state: Vec<f64>,
    ts: f64,
}

impl LinearFilter {
    /// Builds a filter from delay-ordered coefficients. Both polynomials are
    /// normalized so that `den[0] == 1`; the numerator is zero-padded to the
    /// denominator length.
    pub fn new(num: Vec<f64>, den: Vec<f64>, ts: f64) -> Result<Self, FilterError> {
        if !(ts > 0.0 && ts.is_finite()) {
            return Err(FilterError::InvalidSamplePeriod(ts));
        }
        if den.is_empty() {
            return Err(FilterError::EmptyDenominator);
        }
        if num.iter().chain(den.iter()).any(|c| !c.is_finite()) {
            return Err(FilterError::NonFinite);
        }
        if den[0] == 0.0 {
            return Err(FilterError::ZeroLeadingCoefficient);
        }
        if num.len() > den.len() {
            return Err(FilterError::Improper {
                num: num.len(),
                den: den.len(),
            });
        }
        let a0 = den[0];
        let order = den.len() - 1;
        let mut b: Vec<f64> = num.iter().map(|c| c / a0).collect();
        b.resize(order + 1, 0.0);
        let a: Vec<f64> = den.iter().map(|c| c / a0).collect();
        Ok(Self {
            num: b,
            den: a,
            state: vec![0.0; order],
            ts,
        })
    }

    /// Pure gain `k`.
    pub fn gain(k: f64, ts: f64) -> Result<Self, FilterError> {
        Self::new(vec![k], vec![1.0], ts)
    }

    pub fn num(&self) -> &[f64] {
        &self.num
    }

    pub fn den(&self) -> &[f64] {
        &self.den
    }

    pub fn state(&self) -> &[f64] {
        &self.state
    }

    pub fn ts(&self) -> f64 {
        self.ts
    }

    pub fn order(&self) -> usize {
        self.state.len()
    }

    pub fn reset(&mut self) {
        self.state.iter_mut().for_each(|s| *s = 0.0);
    }

    #[inline]
    pub fn step(&mut self, x: f64) -> f64 {
        let y = self.num[0] * x + self.state.first().copied().unwrap_or(0.0);
        let n = self.state.len();
        for i in 0..n {
            let next = if i + 1 < n { self.state[i + 1] } else { 0.0 };
            self.state[i] = next + self.num[i + 1] * x - self.den[i + 1] * y;
        }
        y
    }

    /// Filters a whole series starting from the current state.
    pub fn filter(&mut self, input: &[f64]) -> Vec<f64> {
        input.iter().map(|&x| self.step(x)).collect()
    }

    /// Filters a series from zero initial state without touching `self`.
    pub fn apply(&self, input: &[f64]) -> Vec<f64> {
        let mut f = self.clone();
        f.reset();
        f.filter(input)
    }

    /// Value of the transfer function at `z = 1`.
    pub fn dc_gain(&self) -> f64 {
        self.num.iter().sum::<f64>() / self.den.iter().sum::<f64>()
    }

    /// Evaluates `H` at a point `z` on the complex plane.
    pub fn eval(&self, z: Complex<f64>) -> Complex<f64> {
        let q = z.inv();
        let horner = |c: &[f64]| {
            c.iter()
                .rev()
                .fold(Complex::new(0.0, 0.0), |acc, &ci| acc * q + ci)
        };
        horner(&self.num) / horner(&self.den)
    }

    /// Poles in the z-plane.
    pub fn poles(&self) -> Vec<Complex<f64>> {
        polynomial_roots(&self.den)
    }

    /// Zeros in the z-plane (excluding zeros at the origin created by padding).
    pub fn zeros(&self) -> Vec<Complex<f64>> {
        let mut b = self.num.clone();
        while b.len() > 1 && b[0] == 0.0 {
            b.remove(0);
        }
        while b.len() > 1 && *b.last().unwrap() == 0.0 {
            b.pop();
        }
        polynomial_roots(&b)
    }

    /// Largest pole magnitude; 0 for a pure gain.
    pub fn spectral_radius(&self) -> f64 {
        self.poles().iter().map(|p| p.norm()).fold(0.0, f64::max)
    }
}

/// Roots in `z` of `c[0] z^n + c[1] z^(n-1) + … + c[n]`, i.e. of a
/// delay-ordered polynomial multiplied through by `z^n`.
pub fn polynomial_roots(coeffs: &[f64]) -> Vec<Complex<f64>> {
    let mut c = coeffs.to_vec();
    while c.len() > 1 && *c.last().unwrap() == 0.0 {
        // trailing zero coefficient means a root at z = 0
        c.pop();
    }
    let trailing_zero_roots = coeffs.len() - c.len();
    let n = c.len().saturating_sub(1);
    let mut roots = Vec::with_capacity(n + trailing_zero_roots);
    match n {
        0 => {}
        1 => roots.push(Complex::new(-c[1] / c[0], 0.0)),
        2 => {
            let (a, b, cc) = (c[0], c[1], c[2]);
            let disc = b * b - 4.0 * a * cc;
            if disc >= 0.0 {
                // numerically stable quadratic formula
                let sgn = if b >= 0.0 { 1.0 } else { -1.0 };
                let qv = -0.5 * (b + sgn * disc.sqrt());
                let r1 = qv / a;
                let r2 = if qv != 0.0 { cc / qv } else { 0.0 };
                roots.push(Complex::new(r1, 0.0));
                roots.push(Complex::new(r2, 0.0));
            } else {
                let re = -b / (2.0 * a);
                let im = (-disc).sqrt() / (2.0 * a);
                roots.push(Complex::new(re, im));
                roots.push(Complex::new(re, -im));
            }
        }
        _ => {
            let mut companion = DMatrix::<f64>::zeros(n, n);
            for j in 0..n {
                companion[(0, j)] = -c[j + 1] / c[0];
            }
            for i in 1..n {
                companion[(i, i - 1)] = 1.0;
            }
            roots.extend(companion.complex_eigenvalues().iter().copied());
        }
    }
    roots.extend(std::iter::repeat_n(Complex::new(0.0, 0.0), trailing_zero_roots));
    roots
}

/// Polynomial product, ascending coefficients.
pub fn poly_mul(a: &[f64], b: &[f64]) -> Vec<f64> {
    if a.is_empty() || b.is_empty() {
        return Vec::new();
    }
    let mut out = vec![0.0; a.len() + b.len() - 1];
    for (i, &ai) in a.iter().enumerate() {
        for (j, &bj) in b.iter().enumerate() {
            out[i + j] += ai * bj;
        }
    }
    out
}

fn poly_pow(base: &[f64], k: usize) -> Vec<f64> {
    (0..k).fold(vec![1.0], |acc, _| poly_mul(&acc, base))
}

/// Bilinear (Tustin) discretization of a continuous transfer function.
///
/// `num_s` and `den_s` hold ascending powers of `s`. Substitutes
/// `s = (2/ts)(1 − q)/(1 + q)` and clears the `(1 + q)` denominators, giving
/// delay-ordered coefficients of equal length.
pub fn bilinear(num_s: &[f64], den_s: &[f64], ts: f64) -> Result<LinearFilter, FilterError> {
    if !(ts > 0.0 && ts.is_finite()) {
        return Err(FilterError::InvalidSamplePeriod(ts));
    }
    let trim = |p: &[f64]| {
        let mut v = p.to_vec();
        while v.len() > 1 && *v.last().unwrap() == 0.0 {
            v.pop();
        }
        v
    };
    let num_s = trim(num_s);
    let den_s = trim(den_s);
    if den_s.is_empty() || den_s.iter().all(|&c| c == 0.0) {
        return Err(FilterError::EmptyDenominator);
    }
    if num_s.len() > den_s.len() {
        return Err(FilterError::Improper {
            num: num_s.len(),
            den: den_s.len(),
        });
    }
    let order = den_s.len() - 1;
    let k = 2.0 / ts;
    let minus = [1.0, -1.0];
    let plus = [1.0, 1.0];
    let map = |p: &[f64]| {
        let mut out = vec![0.0; order + 1];
        for (power, &coef) in p.iter().enumerate() {
            if coef == 0.0 {
                continue;
            }
            let term = poly_mul(&poly_pow(&minus, power), &poly_pow(&plus, order - power));
            let scale = coef * k.powi(power as i32);
            for (o, t) in out.iter_mut().zip(term) {
                *o += scale * t;
            }
        }
        out
    };
    LinearFilter::new(map(&num_s), map(&den_s), ts)
}

/// Image of a continuous pole or zero under the bilinear map.
pub fn bilinear_point(s: Complex<f64>, ts: f64) -> Complex<f64> {
    let half = s * (ts / 2.0);
    (Complex::new(1.0, 0.0) + half) / (Complex::new(1.0, 0.0) - half)
}
