//! Fault accommodation: rescale the commanded input by the estimated loss of
//! effectiveness so the plant's effective input matches the nominal command.
//!
//! Compensation is multiplicative, `u / (1 - gamma_hat)`. When the estimate
//! equals the true fault, `(1 - gamma) * u / (1 - gamma_hat) = u` exactly,
//! which is the intended restored-nominal outcome. The additive reading of
//! the accommodation law would need the true fault at the actuator, which is
//! not available.

use nalgebra::Vector2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AccommodationConfig {
    pub enabled: bool,
    /// Cap on the usable fault estimate; keeps the compensation gain bounded
    /// near total failure.
    pub gamma_max: f64,
    /// Estimates below this leave the command untouched, so measurement
    /// noise cannot chatter the compensation on a healthy plant.
    pub activation_threshold: f64,
}

impl Default for AccommodationConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            gamma_max: 0.95,
            activation_threshold: 0.05,
        }
    }
}

impl AccommodationConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0 < self.gamma_max && self.gamma_max < 1.0) {
            return Err(Error::Config(format!(
                "accommodation.gamma_max must be in (0, 1), got {}",
                self.gamma_max
            )));
        }
        if !(0.0 <= self.activation_threshold && self.activation_threshold < self.gamma_max) {
            return Err(Error::Config(format!(
                "accommodation.activation_threshold must be in [0, gamma_max), got {}",
                self.activation_threshold
            )));
        }
        Ok(())
    }
}

/// Adjust the commanded input using the estimated fault parameters.
/// Saturation to the plant's voltage limits is applied by the caller, after
/// accommodation.
pub fn accommodate(
    u: Vector2<f64>,
    gamma_hat: Vector2<f64>,
    cfg: &AccommodationConfig,
) -> Vector2<f64> {
    if !cfg.enabled {
        return u;
    }
    Vector2::from_fn(|i, _| {
        let g = gamma_hat[i].clamp(0.0, cfg.gamma_max);
        if g >= cfg.activation_threshold {
            u[i] / (1.0 - g)
        } else {
            u[i]
        }
    })
}
