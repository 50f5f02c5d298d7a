//! Piecewise-linear rate processes `h` on `[0, T]`.
//!
//! The divergence-type formulae hold for any finite-energy `h` with
//! `h(0) = 0`, `h(T) = 1`; the backward gradient formulae use
//! `ℓ(t) = (1 - h(t))·v`, which needs the same endpoints. Piecewise-linear
//! knots keep `∫ ḣ² dt` finite automatically.

use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct RateProcess {
    knots: Vec<f64>,
    values: Vec<f64>,
    horizon: f64,
}

impl RateProcess {
    /// The default choice `h(t) = t/T`.
    pub fn linear(horizon: f64) -> Self {
        RateProcess {
            knots: alloc::vec![0.0, horizon],
            values: alloc::vec![0.0, 1.0],
            horizon,
        }
    }

    /// Piecewise-linear interpolation of `f` sampled at `segments + 1`
    /// equally spaced knots.
    pub fn sampled(horizon: f64, segments: usize, f: impl Fn(f64) -> f64) -> Self {
        let knots: Vec<f64> = (0..=segments)
            .map(|k| horizon * k as f64 / segments as f64)
            .collect();
        let values: Vec<f64> = knots.iter().map(|&t| f(t)).collect();
        RateProcess {
            knots,
            values,
            horizon,
        }
    }

    pub fn from_knots(knots: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if knots.len() != values.len() || knots.len() < 2 {
            return Err(Error::Config(String::from(
                "rate process needs matching knots/values with at least two entries",
            )));
        }
        if knots.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Config(String::from(
                "rate process knots must be strictly increasing",
            )));
        }
        if knots[0] != 0.0 {
            return Err(Error::Config(String::from(
                "rate process must start at t = 0",
            )));
        }
        let horizon = *knots.last().unwrap();
        Ok(RateProcess {
            knots,
            values,
            horizon,
        })
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    /// `h(t)`, clamped to the knot range.
    pub fn value(&self, t: f64) -> f64 {
        if t <= self.knots[0] {
            return self.values[0];
        }
        if t >= self.horizon {
            return *self.values.last().unwrap();
        }
        let i = match self
            .knots
            .binary_search_by(|k| k.partial_cmp(&t).unwrap())
        {
            Ok(i) => return self.values[i],
            Err(i) => i - 1,
        };
        let w = (t - self.knots[i]) / (self.knots[i + 1] - self.knots[i]);
        self.values[i] * (1.0 - w) + self.values[i + 1] * w
    }

    /// Right-continuous derivative `ḣ(t)`: the slope of the segment containing
    /// `t` (left endpoint inclusive), matching the left-point Itô convention.
    pub fn derivative(&self, t: f64) -> f64 {
        let i = if t <= self.knots[0] {
            0
        } else if t >= self.horizon {
            self.knots.len() - 2
        } else {
            match self
                .knots
                .binary_search_by(|k| k.partial_cmp(&t).unwrap())
            {
                Ok(i) => i.min(self.knots.len() - 2),
                Err(i) => i - 1,
            }
        };
        (self.values[i + 1] - self.values[i]) / (self.knots[i + 1] - self.knots[i])
    }

    /// `∫₀ᵀ ḣ² dt` (finite by construction; used in reports).
    pub fn energy(&self) -> f64 {
        self.knots
            .windows(2)
            .zip(self.values.windows(2))
            .map(|(k, v)| {
                let slope = (v[1] - v[0]) / (k[1] - k[0]);
                slope * slope * (k[1] - k[0])
            })
            .sum()
    }

    /// Require `h(0) = 0` and `h(T) = 1` (divergence-formula mode; the
    /// backward-gradient process `ℓ = (1-h)·v` then runs from `v` to `0`).
    pub fn require_unit_endpoints(&self, context: &str) -> Result<()> {
        let h0 = self.values[0];
        let h_t = *self.values.last().unwrap();
        if h0.abs() > 1e-12 || (h_t - 1.0).abs() > 1e-12 {
            return Err(Error::Config(alloc::format!(
                "{context}: rate process must satisfy h(0) = 0 and h(T) = 1, got h(0) = {h0}, h(T) = {h_t}"
            )));
        }
        Ok(())
    }

    /// Require the horizon to match the estimator horizon.
    pub fn require_horizon(&self, horizon: f64) -> Result<()> {
        if (self.horizon - horizon).abs() > 1e-12 * horizon.max(1.0) {
            return Err(Error::Config(alloc::format!(
                "rate process horizon {} does not match estimator horizon {horizon}",
                self.horizon
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_rate() {
        let h = RateProcess::linear(2.0);
        assert_eq!(h.value(0.0), 0.0);
        assert_eq!(h.value(2.0), 1.0);
        assert!((h.value(0.5) - 0.25).abs() < 1e-15);
        assert!((h.derivative(1.3) - 0.5).abs() < 1e-15);
        assert!((h.energy() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn sampled_quadratic_keeps_endpoints() {
        let t_max = 1.0;
        let h = RateProcess::sampled(t_max, 64, |t| (t / t_max) * (t / t_max));
        h.require_unit_endpoints("test").unwrap();
        assert!((h.value(0.5) - 0.25).abs() < 2e-4);
        // slope of the first segment is near h'(0) = 0, last near 2
        assert!(h.derivative(0.0) < 0.02);
        assert!((h.derivative(0.999) - 2.0).abs() < 0.02);
    }

    #[test]
    fn bad_endpoints_rejected() {
        let h = RateProcess::sampled(1.0, 4, |t| 0.5 * t);
        assert!(h.require_unit_endpoints("divergence").is_err());
    }
}
