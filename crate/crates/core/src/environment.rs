//! Perturbation models behind the reliability protocols: read noise, supply
//! variation, long-term drift and temperature.
//!
//! The forms are deliberately simple and fully config-exposed; the defaults
//! are calibration constants chosen so the stock experiments land in
//! realistic bit-error ranges.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::crossbar::CrossbarArray;
use crate::rng::Stream;

#[derive(Debug, Error, PartialEq)]
pub enum EnvError {
    #[error("invalid perturbation model: {0}")]
    InvalidModel(String),
    #[error("aging window must be non-negative, got {0} days")]
    NegativeDays(f64),
    #[error("temperature must be positive kelvin, got {0}")]
    InvalidTemperature(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerturbationModel {
    /// Relative current-read noise.
    pub sigma_read: f64,
    /// Maximum relative supply deviation; the effective bias is
    /// `v_b * (1 + U(-supply_frac, +supply_frac))` per read.
    pub supply_frac: f64,
    /// Stddev of the daily `ln(g_ref)` random walk.
    pub drift_sigma_per_day: f64,
    /// Reference temperature (K).
    pub temp_ref: f64,
    /// Ambient temperature of the reads this model describes (K).
    pub temp: f64,
    /// Activation scale of the thermal conductance factor (K).
    pub e_act: f64,
    /// Extra read-noise multiplier per kelvin above `temp_ref`.
    pub temp_noise_gain: f64,
    /// Per-device lognormal scatter of the thermal factor.
    pub thermal_scatter: f64,
}

impl Default for PerturbationModel {
    fn default() -> Self {
        PerturbationModel {
            sigma_read: 0.01,
            supply_frac: 0.20,
            drift_sigma_per_day: 0.005,
            temp_ref: 300.0,
            temp: 300.0,
            e_act: 500.0,
            temp_noise_gain: 0.03,
            thermal_scatter: 0.02,
        }
    }
}

impl PerturbationModel {
    /// All perturbations off: downstream responses become bit-identical
    /// across trials.
    pub fn zeroed() -> Self {
        PerturbationModel {
            sigma_read: 0.0,
            supply_frac: 0.0,
            drift_sigma_per_day: 0.0,
            temp_ref: 300.0,
            temp: 300.0,
            e_act: 0.0,
            temp_noise_gain: 0.0,
            thermal_scatter: 0.0,
        }
    }

    pub fn validate(&self) -> Result<(), EnvError> {
        if self.sigma_read < 0.0
            || self.drift_sigma_per_day < 0.0
            || self.temp_noise_gain < 0.0
            || self.thermal_scatter < 0.0
            || self.e_act < 0.0
        {
            return Err(EnvError::InvalidModel("negative scale".into()));
        }
        if !(0.0..1.0).contains(&self.supply_frac) {
            return Err(EnvError::InvalidModel("supply_frac must be in [0, 1)".into()));
        }
        if self.temp_ref <= 0.0 || self.temp <= 0.0 {
            return Err(EnvError::InvalidModel("temperatures must be positive kelvin".into()));
        }
        Ok(())
    }

    /// Read-noise multiplier at the model's ambient temperature.
    pub fn noise_gain(&self) -> f64 {
        1.0 + self.temp_noise_gain * (self.temp - self.temp_ref).max(0.0)
    }

    /// Supply-perturbed evaluation bias.
    pub fn effective_bias(&self, v_b: f64, rng: &mut Stream) -> f64 {
        let u: f64 = rng.random();
        v_b * (1.0 + self.supply_frac * (2.0 * u - 1.0))
    }

    /// Read a current through the noisy measurement chain.
    pub fn noisy_current(&self, current: f64, rng: &mut Stream) -> f64 {
        let z: f64 = rng.sample(StandardNormal);
        current * (1.0 + self.sigma_read * self.noise_gain() * z)
    }
}

/// One read through the perturbation model: supply-perturbed bias and a
/// noisy current sample.
pub fn perturb_read(
    model: &PerturbationModel,
    v_b: f64,
    current: f64,
    rng: &mut Stream,
) -> (f64, f64) {
    (model.effective_bias(v_b, rng), model.noisy_current(current, rng))
}

/// Age an array by `days`: a lognormal random walk on every device state,
/// variance growing linearly in time, clamped to the dynamic range.
pub fn age_array(
    array: &CrossbarArray,
    model: &PerturbationModel,
    days: f64,
    rng: &mut Stream,
) -> Result<CrossbarArray, EnvError> {
    if days.is_nan() || days < 0.0 {
        return Err(EnvError::NegativeDays(days));
    }
    let sigma = model.drift_sigma_per_day * days.sqrt();
    if sigma == 0.0 {
        return Ok(array.clone());
    }
    let mut aged = array.clone();
    for addr in array.addrs().collect::<Vec<_>>() {
        let z: f64 = rng.sample(StandardNormal);
        let xp = aged.device_mut(addr);
        let g = (xp.state.g_ref.ln() + sigma * z).exp();
        xp.state.g_ref = g.clamp(xp.params.g_min, xp.params.g_max);
    }
    Ok(aged)
}

/// Deterministic thermal response at a given temperature.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThermalEffect {
    /// Multiplicative conductance factor, 1 at `temp_ref`.
    pub conductance_factor: f64,
    /// Read-noise multiplier, 1 at and below `temp_ref`.
    pub noise_gain: f64,
}

/// Arrhenius-style conductance factor plus the read-noise gain at `temp`.
pub fn thermal_factor(model: &PerturbationModel, temp: f64) -> Result<ThermalEffect, EnvError> {
    if temp.is_nan() || temp <= 0.0 {
        return Err(EnvError::InvalidTemperature(temp));
    }
    let factor = (model.e_act * (1.0 / model.temp_ref - 1.0 / temp)).exp();
    let noise_gain = 1.0 + model.temp_noise_gain * (temp - model.temp_ref).max(0.0);
    Ok(ThermalEffect { conductance_factor: factor, noise_gain })
}

/// Array as seen at the model's ambient temperature: every conductance
/// scaled by the thermal factor with per-device scatter, clamped to range.
pub fn thermal_snapshot(
    array: &CrossbarArray,
    model: &PerturbationModel,
    rng: &mut Stream,
) -> Result<CrossbarArray, EnvError> {
    let effect = thermal_factor(model, model.temp)?;
    let mut hot = array.clone();
    for addr in array.addrs().collect::<Vec<_>>() {
        let z: f64 = rng.sample(StandardNormal);
        let xp = hot.device_mut(addr);
        let g = xp.state.g_ref * effect.conductance_factor * (model.thermal_scatter * z).exp();
        xp.state.g_ref = g.clamp(xp.params.g_min, xp.params.g_max);
    }
    Ok(hot)
}
