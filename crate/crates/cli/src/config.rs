//! Experiment configuration: sectioned key-value file (TOML), defaults for
//! every field, unknown keys rejected, validated before use.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use nlpuf_core::device::{DeviceParams, ProcessVariation};
use nlpuf_core::environment::PerturbationModel;
use nlpuf_core::puf::FreeLinePolicy;
use nlpuf_core::tuning::TuningPolicy;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("cannot parse config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    /// Seed every named substream derives from.
    pub master_seed: u64,
    pub device: DeviceSection,
    pub array: ArraySection,
    pub tuning: TuningSection,
    pub puf: PufSection,
    pub perturbation: PerturbationSection,
    pub experiment: ExperimentSection,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            master_seed: 1,
            device: DeviceSection::default(),
            array: ArraySection::default(),
            tuning: TuningSection::default(),
            puf: PufSection::default(),
            perturbation: PerturbationSection::default(),
            experiment: ExperimentSection::default(),
        }
    }
}

/// Device nominals plus process variation, all in SI units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DeviceSection {
    pub b_nl: f64,
    pub kappa: f64,
    pub g_min: f64,
    pub g_max: f64,
    pub v_set: f64,
    pub v_reset: f64,
    pub eta_set: f64,
    pub eta_reset: f64,
    pub v_slope: f64,
    pub sigma_switch: f64,
    pub sigma_nl: f64,
    pub nl_reroll: f64,
    pub v_window: f64,
    pub sigma_ln_b: f64,
    pub sigma_ln_vset: f64,
    pub sigma_ln_vreset: f64,
    pub init_g_median: f64,
    pub sigma_ln_g: f64,
    pub yield_frac: f64,
}

impl Default for DeviceSection {
    fn default() -> Self {
        let p = DeviceParams::default();
        let v = ProcessVariation::default();
        DeviceSection {
            b_nl: p.b_nl,
            kappa: p.kappa,
            g_min: p.g_min,
            g_max: p.g_max,
            v_set: p.v_set,
            v_reset: p.v_reset,
            eta_set: p.eta_set,
            eta_reset: p.eta_reset,
            v_slope: p.v_slope,
            sigma_switch: p.sigma_switch,
            sigma_nl: p.sigma_nl,
            nl_reroll: p.nl_reroll,
            v_window: p.v_window,
            sigma_ln_b: v.sigma_ln_b,
            sigma_ln_vset: v.sigma_ln_vset,
            sigma_ln_vreset: v.sigma_ln_vreset,
            init_g_median: v.init_g_median,
            sigma_ln_g: v.sigma_ln_g,
            yield_frac: v.yield_frac,
        }
    }
}

impl DeviceSection {
    pub fn to_process(&self) -> ProcessVariation {
        ProcessVariation {
            nominal: DeviceParams {
                b_nl: self.b_nl,
                kappa: self.kappa,
                g_min: self.g_min,
                g_max: self.g_max,
                v_set: self.v_set,
                v_reset: self.v_reset,
                eta_set: self.eta_set,
                eta_reset: self.eta_reset,
                v_slope: self.v_slope,
                sigma_switch: self.sigma_switch,
                sigma_nl: self.sigma_nl,
                nl_reroll: self.nl_reroll,
                v_window: self.v_window,
                defect: false,
            },
            sigma_ln_b: self.sigma_ln_b,
            sigma_ln_vset: self.sigma_ln_vset,
            sigma_ln_vreset: self.sigma_ln_vreset,
            init_g_median: self.init_g_median,
            sigma_ln_g: self.sigma_ln_g,
            yield_frac: self.yield_frac,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ArraySection {
    pub layers: usize,
    pub rows: usize,
    pub cols: usize,
    pub shared_middle: bool,
}

impl Default for ArraySection {
    fn default() -> Self {
        ArraySection { layers: 1, rows: 10, cols: 10, shared_middle: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TuningSection {
    pub tolerance: f64,
    pub max_pulses: u32,
    pub start_amplitude: f64,
    pub amplitude_step: f64,
    pub max_amplitude_frac: f64,
    pub pulse_width: f64,
    /// Target distribution at the reference bias.
    pub mu_w: f64,
    pub sigma_w: f64,
    pub margin: f64,
}

impl Default for TuningSection {
    fn default() -> Self {
        let p = TuningPolicy::default();
        TuningSection {
            tolerance: p.tolerance,
            max_pulses: p.max_pulses,
            start_amplitude: p.start_amplitude,
            amplitude_step: p.amplitude_step,
            max_amplitude_frac: p.max_amplitude_frac,
            pulse_width: p.pulse_width,
            mu_w: 20e-6,
            sigma_w: 6e-6,
            margin: 0.02,
        }
    }
}

impl TuningSection {
    pub fn policy(&self) -> TuningPolicy {
        TuningPolicy {
            tolerance: self.tolerance,
            max_pulses: self.max_pulses,
            start_amplitude: self.start_amplitude,
            amplitude_step: self.amplitude_step,
            max_amplitude_frac: self.max_amplitude_frac,
            pulse_width: self.pulse_width,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PufSection {
    /// Driven lines per challenge.
    pub m: usize,
    /// Sensed lines per challenge (even).
    pub n: usize,
    /// Evaluation biases (V).
    pub biases: Vec<f64>,
    /// Bias-code grid endpoints (V).
    pub v_lo: f64,
    pub v_hi: f64,
    pub bias_code_bits: u32,
    /// `floating` or `configurable` unselected lines.
    pub unselected: String,
    /// Swap the driven/sensed pools (rows driven instead of columns).
    pub transpose: bool,
}

impl Default for PufSection {
    fn default() -> Self {
        PufSection {
            m: 5,
            n: 2,
            biases: vec![0.2, 0.4, 0.6],
            v_lo: 0.2,
            v_hi: 0.6,
            bias_code_bits: 3,
            unselected: "configurable".to_string(),
            transpose: false,
        }
    }
}

impl PufSection {
    pub fn policy(&self) -> Result<FreeLinePolicy, ConfigError> {
        match self.unselected.as_str() {
            "floating" => Ok(FreeLinePolicy::AllFloating),
            "configurable" => Ok(FreeLinePolicy::Configurable),
            other => Err(ConfigError::Invalid(format!(
                "puf.unselected must be `floating` or `configurable`, got `{other}`"
            ))),
        }
    }

    pub fn orientation(&self) -> nlpuf_core::puf::Orientation {
        if self.transpose {
            nlpuf_core::puf::Orientation::RowsDriven
        } else {
            nlpuf_core::puf::Orientation::ColumnsDriven
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PerturbationSection {
    pub sigma_read: f64,
    pub supply_frac: f64,
    pub drift_sigma_per_day: f64,
    pub temp_ref: f64,
    pub e_act: f64,
    pub temp_noise_gain: f64,
    pub thermal_scatter: f64,
}

impl Default for PerturbationSection {
    fn default() -> Self {
        let m = PerturbationModel::default();
        PerturbationSection {
            sigma_read: m.sigma_read,
            supply_frac: m.supply_frac,
            drift_sigma_per_day: m.drift_sigma_per_day,
            temp_ref: m.temp_ref,
            e_act: m.e_act,
            temp_noise_gain: m.temp_noise_gain,
            thermal_scatter: m.thermal_scatter,
        }
    }
}

impl PerturbationSection {
    /// Model at the given ambient temperature (kelvin).
    pub fn model_at(&self, temp: f64) -> PerturbationModel {
        PerturbationModel {
            sigma_read: self.sigma_read,
            supply_frac: self.supply_frac,
            drift_sigma_per_day: self.drift_sigma_per_day,
            temp_ref: self.temp_ref,
            temp,
            e_act: self.e_act,
            temp_noise_gain: self.temp_noise_gain,
            thermal_scatter: self.thermal_scatter,
        }
    }

    pub fn model(&self) -> PerturbationModel {
        self.model_at(self.temp_ref)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentSection {
    /// 64-bit packets per bias for randomness metrics.
    pub packets_per_bias: usize,
    /// Packets monitored by the reliability protocols.
    pub ber_packets: usize,
    /// Aging checkpoints (days) of the drift protocol.
    pub aging_days: Vec<f64>,
    /// Reads per aging checkpoint / per thermal run.
    pub ber_trials: usize,
    /// Hot-read temperature (K).
    pub hot_temp: f64,
    pub retune_instances: usize,
    pub rattle_instances: usize,
    pub rattle_max_fraction: f64,
    pub rattle_width: f64,
    /// Packets per instance and bias in the reconfiguration protocol.
    pub instance_packets: usize,
    /// Hidden-challenge width of the composed primitive.
    pub nlrpuf_l: usize,
    pub nlrpuf_dummies: usize,
    /// 64-bit keys per key set in the composed-primitive protocol.
    pub nlrpuf_keys: usize,
}

impl Default for ExperimentSection {
    fn default() -> Self {
        ExperimentSection {
            packets_per_bias: 500,
            ber_packets: 100,
            aging_days: vec![10.0, 20.0, 30.0],
            ber_trials: 2,
            hot_temp: 363.15,
            retune_instances: 5,
            rattle_instances: 10,
            rattle_max_fraction: 0.7,
            rattle_width: 10e-6,
            instance_packets: 500,
            nlrpuf_l: 10,
            nlrpuf_dummies: 2,
            nlrpuf_keys: 500,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        self.device
            .to_process()
            .validate()
            .map_err(|e| ConfigError::Invalid(format!("[device] {e}")))?;
        if !(self.array.layers == 1 || self.array.layers == 2)
            || self.array.rows == 0
            || self.array.cols == 0
        {
            return Err(ConfigError::Invalid(
                "[array] needs 1 or 2 layers and nonzero dimensions".into(),
            ));
        }
        let t = &self.tuning;
        if t.tolerance <= 0.0 || t.mu_w <= 0.0 || t.sigma_w < 0.0 || t.margin <= 0.0 {
            return Err(ConfigError::Invalid("[tuning] invalid policy or targets".into()));
        }
        if !(t.mu_w >= self.device.g_min && t.mu_w <= self.device.g_max) {
            return Err(ConfigError::Invalid("[tuning] mu_w outside the dynamic range".into()));
        }
        let p = &self.puf;
        self.puf.policy()?;
        if p.m == 0 || p.n == 0 || !p.n.is_multiple_of(2) {
            return Err(ConfigError::Invalid("[puf] need m >= 1 and even n >= 2".into()));
        }
        if p.biases.is_empty()
            || p.biases.iter().any(|v| !v.is_finite() || *v <= 0.0 || *v > self.device.v_window)
        {
            return Err(ConfigError::Invalid(
                "[puf] biases must be positive and within the operating window".into(),
            ));
        }
        if !(p.v_lo.is_finite() && p.v_hi.is_finite() && p.v_lo < p.v_hi) {
            return Err(ConfigError::Invalid("[puf] need v_lo < v_hi".into()));
        }
        if p.bias_code_bits == 0 || p.bias_code_bits > 16 {
            return Err(ConfigError::Invalid("[puf] bias_code_bits must be in 1..=16".into()));
        }
        self.perturbation
            .model()
            .validate()
            .map_err(|e| ConfigError::Invalid(format!("[perturbation] {e}")))?;
        let e = &self.experiment;
        if e.packets_per_bias == 0 || e.nlrpuf_keys == 0 || e.nlrpuf_l == 0 || e.nlrpuf_l > 64 {
            return Err(ConfigError::Invalid("[experiment] zero-sized experiment".into()));
        }
        if e.retune_instances < 2 || e.rattle_instances < 2 {
            return Err(ConfigError::Invalid(
                "[experiment] reconfiguration protocols need at least 2 instances".into(),
            ));
        }
        if !(0.0..=1.0).contains(&e.rattle_max_fraction) || e.rattle_width <= 0.0 {
            return Err(ConfigError::Invalid("[experiment] invalid rattle parameters".into()));
        }
        if e.hot_temp <= 0.0 || e.aging_days.iter().any(|d| *d < 0.0) {
            return Err(ConfigError::Invalid("[experiment] invalid reliability protocol".into()));
        }
        Ok(())
    }

    /// Serialize back to TOML (dump/load round-trips).
    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }
}

/// Load and validate a config file; an empty file yields all defaults.
pub fn load_config(path: &Path) -> Result<ExperimentConfig, ConfigError> {
    let text = std::fs::read_to_string(path)
        .map_err(|source| ConfigError::Io { path: path.display().to_string(), source })?;
    parse_config(&text)
}

/// Parse a config from TOML text.
pub fn parse_config(text: &str) -> Result<ExperimentConfig, ConfigError> {
    let config: ExperimentConfig = toml::from_str(text)?;
    config.validate()?;
    Ok(config)
}
