//! Monomial-basis polynomials on a finite horizon `[0, T]`.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Slack allowed on the horizon bounds when evaluating, to absorb the
/// rounding of `k * dt` sample times.
const DOMAIN_SLACK: f64 = 1e-9;

/// A quartic or quintic motion profile, constant term first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Polynomial {
    coefficients: Vec<f64>,
    horizon: f64,
}

impl Polynomial {
    pub fn new(coefficients: Vec<f64>, horizon: f64) -> Result<Self> {
        if !(5..=6).contains(&coefficients.len()) {
            return Err(Error::CoefficientCount(coefficients.len()));
        }
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(Error::Horizon(horizon));
        }
        Ok(Self { coefficients, horizon })
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn degree(&self) -> usize {
        self.coefficients.len() - 1
    }

    /// The `order`-th derivative at `t`.
    pub fn eval(&self, t: f64, order: usize) -> Result<f64> {
        if order > 3 {
            return Err(Error::Order(order));
        }
        if !(t >= -DOMAIN_SLACK && t <= self.horizon + DOMAIN_SLACK) {
            return Err(Error::Domain { t, horizon: self.horizon });
        }
        Ok(eval_unchecked(&self.coefficients, t.clamp(0.0, self.horizon), order))
    }

    /// Position, velocity, acceleration and jerk at `t`.
    pub fn state(&self, t: f64) -> Result<[f64; 4]> {
        Ok([self.eval(t, 0)?, self.eval(t, 1)?, self.eval(t, 2)?, self.eval(t, 3)?])
    }
}

/// Horner evaluation of the `order`-th derivative, no domain check.
pub(crate) fn eval_unchecked(coefficients: &[f64], t: f64, order: usize) -> f64 {
    let mut acc = 0.0;
    for k in (order..coefficients.len()).rev() {
        acc = acc * t + falling(k, order) * coefficients[k];
    }
    acc
}

/// `k (k-1) ... (k-r+1)`, the factor the `r`-th derivative puts on `t^k`.
pub(crate) fn falling(k: usize, r: usize) -> f64 {
    if r > k {
        return 0.0;
    }
    ((k - r + 1)..=k).map(|j| j as f64).product()
}

/// Row of the `order`-th derivative basis at `t`: entry `k` is
/// `d^order/dt^order t^k`.
pub(crate) fn basis_row(len: usize, t: f64, order: usize) -> Vec<f64> {
    (0..len)
        .map(|k| {
            if k < order {
                0.0
            } else {
                falling(k, order) * t.powi((k - order) as i32)
            }
        })
        .collect()
}

/// Gram matrix `G[i][j] = ∫₀ᵀ φᵢ⁽ʳ⁾(t) φⱼ⁽ʳ⁾(t) dt` of the monomial basis
/// under the `r`-th derivative, in closed form.
pub(crate) fn derivative_gram(len: usize, horizon: f64, order: usize) -> Vec<Vec<f64>> {
    let mut gram = vec![vec![0.0; len]; len];
    for i in order..len {
        for j in order..len {
            let power = (i - order) + (j - order) + 1;
            gram[i][j] =
                falling(i, order) * falling(j, order) * horizon.powi(power as i32) / power as f64;
        }
    }
    gram
}
