//! Regularized upper incomplete gamma function for integer shape, and the
//! Poisson distribution functions built on it.
//!
//! For integer `s ≥ 1` the tail integral collapses to a finite sum,
//!
//! ```text
//! Q(s, x) = Σ_{k=0}^{s−1} x^k e^{−x} / k!  =  P(X ≤ s−1),  X ~ Poisson(x)
//! ```
//!
//! which is what every routine here evaluates. Terms are generated by the
//! recursion `term_{k+1} = term_k · x / (k+1)`, never through explicit
//! factorials.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest shape accepted by [`regularized_upper_gamma`].
pub const MAX_SHAPE: u32 = 512;

/// Above this argument `e^{−x}` is evaluated in log space.
const LINEAR_SPACE_LIMIT: f64 = 700.0;

const PROBABILITY_SLACK: f64 = 1e-12;

/// A real number in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct Probability(f64);

impl Probability {
    pub const ZERO: Probability = Probability(0.0);
    pub const ONE: Probability = Probability(1.0);

    /// Accepts values in `[−1e−12, 1 + 1e−12]` and clamps them into `[0, 1]`.
    pub fn new(value: f64) -> Result<Self> {
        if !(-PROBABILITY_SLACK..=1.0 + PROBABILITY_SLACK).contains(&value) {
            return Err(Error::Domain(format!("{value} is not a probability")));
        }
        Ok(Probability(value.clamp(0.0, 1.0)))
    }

    pub fn value(self) -> f64 {
        self.0
    }

    /// `self^n`, the probability that `n` independent events all occur.
    pub fn powi(self, n: u32) -> Probability {
        Probability(self.0.powi(n as i32))
    }
}

impl TryFrom<f64> for Probability {
    type Error = Error;

    fn try_from(value: f64) -> Result<Self> {
        Probability::new(value)
    }
}

impl From<Probability> for f64 {
    fn from(p: Probability) -> f64 {
        p.0
    }
}

/// `Q(s, x)` for integer `s ∈ [1, 512]` and `x ≥ 0`.
pub fn regularized_upper_gamma(s: u32, x: f64) -> Result<Probability> {
    if s < 1 || s > MAX_SHAPE {
        return Err(Error::Domain(format!(
            "shape {s} outside [1, {MAX_SHAPE}]"
        )));
    }
    if !x.is_finite() || x < 0.0 {
        return Err(Error::Domain(format!("argument {x} must be finite and ≥ 0")));
    }
    if x == 0.0 {
        return Ok(Probability::ONE);
    }
    let value = if x + 1.0 < f64::from(s) {
        // Q is near 1 here; sum the lower tail Σ_{k≥s} instead, whose terms
        // shrink geometrically, and complement it
        let mut term = (f64::from(s) * x.ln() - x - ln_factorial(u64::from(s))).exp();
        let mut tail = 0.0;
        let mut k = f64::from(s);
        while term > tail * 1e-18 {
            tail += term;
            k += 1.0;
            term *= x / k;
        }
        1.0 - tail
    } else if x <= LINEAR_SPACE_LIMIT {
        let mut term = (-x).exp();
        let mut sum = term;
        for k in 1..s {
            term *= x / f64::from(k);
            sum += term;
        }
        sum
    } else {
        // log-sum-exp over ln term_k = k ln x − x − ln k!
        let ln_x = x.ln();
        let mut ln_terms = Vec::with_capacity(s as usize);
        let mut ln_term = -x;
        ln_terms.push(ln_term);
        for k in 1..s {
            ln_term += ln_x - f64::from(k).ln();
            ln_terms.push(ln_term);
        }
        let peak = ln_terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let scaled: f64 = ln_terms.iter().map(|t| (t - peak).exp()).sum();
        (peak + scaled.ln()).exp()
    };
    Probability::new(value)
}

/// `P(X ≤ k)` for `X ~ Poisson(lambda)`; equal to `Q(k+1, lambda)`.
pub fn poisson_cdf(k: u32, lambda: f64) -> Result<Probability> {
    check_rate(lambda)?;
    if k >= MAX_SHAPE {
        // Beyond the tabulated shape range the sum is built directly.
        let mut sum = 0.0;
        for j in 0..=k {
            sum += poisson_pmf(j, lambda)?.value();
        }
        return Probability::new(sum.min(1.0));
    }
    regularized_upper_gamma(k + 1, lambda)
}

/// `P(X = k)` for `X ~ Poisson(lambda)`, evaluated in log space.
pub fn poisson_pmf(k: u32, lambda: f64) -> Result<Probability> {
    check_rate(lambda)?;
    let ln_pmf = f64::from(k) * lambda.ln() - lambda - ln_factorial(u64::from(k));
    Probability::new(ln_pmf.exp())
}

fn check_rate(lambda: f64) -> Result<()> {
    if !lambda.is_finite() || lambda <= 0.0 {
        return Err(Error::Domain(format!("Poisson rate {lambda} must be finite and > 0")));
    }
    Ok(())
}

/// `ln k!`. Exact summation for small `k`, Stirling series beyond.
pub fn ln_factorial(k: u64) -> f64 {
    if k < 256 {
        return (2..=k).map(|i| (i as f64).ln()).sum();
    }
    let n = (k + 1) as f64;
    let n3 = n * n * n;
    (n - 0.5) * n.ln() - n + 0.5 * (2.0 * std::f64::consts::PI).ln() + 1.0 / (12.0 * n)
        - 1.0 / (360.0 * n3)
        + 1.0 / (1260.0 * n3 * n * n)
}
