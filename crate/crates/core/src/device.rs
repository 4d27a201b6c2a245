//! Compact model of a single analog memristive crosspoint.
//!
//! The static I-V is an odd sinh law whose steepness depends on the
//! programmed state: `I(V) = A * sinh(B_eff * V)` with
//! `B_eff = b_nl * (g_mid / g_ref)^kappa * exp(nl_state)` and `A` fixed so
//! that the chord conductance at the reference read bias [`V_REF`] equals
//! `g_ref` exactly. Lower conductance states are more nonlinear when
//! `kappa > 0`; the power form equals `1 + kappa * ln(g_mid / g_ref)` to
//! first order while staying positive over the whole dynamic range.
//!
//! Pulse switching follows a soft-threshold exponential drift law in
//! `ln(g_ref)`; every effective switching event also partially re-rolls
//! `nl_state`, modelling the reconfiguration of the conduction path (and
//! with it the device's nonlinearity) that accompanies ionic motion. The
//! re-rolled fraction grows with the size of the state move, so a full
//! write-verify sequence re-randomizes the nonlinearity while a weak
//! sub-threshold pulse only perturbs it; `nl_state` stays distributed as
//! `N(0, sigma_nl^2)` under switching activity.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::Stream;

/// Reference read bias at which `g_ref` is defined (volts).
pub const V_REF: f64 = 0.2;

/// Hard bound on the nonlinearity state, keeping `B_eff` numerically sane.
pub const NL_STATE_MAX: f64 = 2.5;

/// Cap on the effective sinh steepness (1/V). Electrode series resistance
/// saturates the exponential regime in practice; numerically the cap keeps
/// the nodal Jacobian well conditioned.
pub const B_EFF_MAX: f64 = 20.0;

#[derive(Debug, Error, PartialEq)]
pub enum DeviceError {
    #[error("non-finite input: {0}")]
    NonFinite(&'static str),
    #[error("bias {v} V outside the operating window of +/-{window} V")]
    OutsideOperatingWindow { v: f64, window: f64 },
    #[error("bias must be nonzero for a conductance/nonlinearity read")]
    ZeroBias,
    #[error("pulse width must be positive, got {0} s")]
    NonPositiveWidth(f64),
    #[error("invalid device parameters: {0}")]
    InvalidParams(String),
}

/// Fixed (per-instance) parameters of one crosspoint.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeviceParams {
    /// Nonlinearity coefficient (1/V) of the sinh I-V at mid-range state.
    pub b_nl: f64,
    /// State-nonlinearity coupling (dimensionless); lower `g_ref` means a
    /// steeper I-V when positive.
    pub kappa: f64,
    /// Lower conductance bound at the reference bias (S).
    pub g_min: f64,
    /// Upper conductance bound at the reference bias (S).
    pub g_max: f64,
    /// Effective SET threshold (V, positive polarity increases conductance).
    pub v_set: f64,
    /// Effective RESET threshold (V, applied as negative polarity).
    pub v_reset: f64,
    /// SET switching-rate coefficient (1/s).
    pub eta_set: f64,
    /// RESET switching-rate coefficient (1/s).
    pub eta_reset: f64,
    /// Sub-threshold softness of the switching law (V).
    pub v_slope: f64,
    /// Relative pulse-to-pulse switching noise.
    pub sigma_switch: f64,
    /// Stationary dispersion of the nonlinearity state under switching.
    pub sigma_nl: f64,
    /// State move (in `|delta ln g|`) that re-rolls the nonlinearity
    /// completely; smaller moves re-roll proportionally.
    pub nl_reroll: f64,
    /// Safe operating window for reads (V).
    pub v_window: f64,
    /// Stuck device: pulses no longer move the state.
    pub defect: bool,
}

impl Default for DeviceParams {
    fn default() -> Self {
        DeviceParams {
            b_nl: 5.0,
            kappa: 0.3,
            g_min: 1e-6,
            g_max: 200e-6,
            v_set: 1.0,
            v_reset: 1.2,
            eta_set: 7.5e4,
            eta_reset: 2.0e5,
            v_slope: 0.2,
            sigma_switch: 0.3,
            sigma_nl: 0.5,
            nl_reroll: 0.12,
            v_window: 1.0,
            defect: false,
        }
    }
}

impl DeviceParams {
    /// Geometric mid point of the dynamic range (S).
    pub fn g_mid(&self) -> f64 {
        (self.g_min * self.g_max).sqrt()
    }

    pub fn validate(&self) -> Result<(), DeviceError> {
        let fields = [
            self.b_nl,
            self.kappa,
            self.g_min,
            self.g_max,
            self.v_set,
            self.v_reset,
            self.eta_set,
            self.eta_reset,
            self.v_slope,
            self.sigma_switch,
            self.sigma_nl,
            self.nl_reroll,
            self.v_window,
        ];
        if fields.iter().any(|x| !x.is_finite()) {
            return Err(DeviceError::NonFinite("device parameter"));
        }
        let err = |msg: &str| Err(DeviceError::InvalidParams(msg.to_string()));
        if !(self.g_min > 0.0 && self.g_min < self.g_max) {
            return err("requires 0 < g_min < g_max");
        }
        if self.b_nl <= 0.0 || self.b_nl > B_EFF_MAX {
            return err("b_nl must be positive and below the steepness cap");
        }
        if self.v_slope <= 0.0 {
            return err("v_slope must be positive");
        }
        if self.eta_set < 0.0 || self.eta_reset < 0.0 {
            return err("switching rates must be non-negative");
        }
        if self.v_set <= 0.0 || self.v_reset <= 0.0 {
            return err("thresholds must be positive");
        }
        if self.sigma_switch < 0.0 || self.sigma_nl < 0.0 {
            return err("noise scales must be non-negative");
        }
        if self.nl_reroll <= 0.0 {
            return err("nl_reroll must be positive");
        }
        if self.v_window <= 0.0 {
            return err("v_window must be positive");
        }
        if !(0.0..=2.0).contains(&self.kappa) {
            return err("kappa must be in [0, 2]");
        }
        Ok(())
    }
}

/// Tunable analog state of one crosspoint.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeviceState {
    /// Conductance at the reference read bias (S).
    pub g_ref: f64,
    /// Accumulated nonlinearity shift from switching history (dimensionless,
    /// zero for a freshly formed device).
    pub nl_state: f64,
}

impl DeviceState {
    pub fn new(g_ref: f64) -> Self {
        DeviceState { g_ref, nl_state: 0.0 }
    }
}

/// Effective sinh steepness of the device at its present state (1/V).
pub fn b_eff(state: &DeviceState, params: &DeviceParams) -> f64 {
    let coupling = (params.g_mid() / state.g_ref).powf(params.kappa);
    (params.b_nl * coupling * state.nl_state.clamp(-NL_STATE_MAX, NL_STATE_MAX).exp())
        .min(B_EFF_MAX)
}

/// sinh amplitude `A` such that `I(V_REF) = g_ref * V_REF` exactly (A).
pub fn amplitude(state: &DeviceState, params: &DeviceParams) -> f64 {
    let b = b_eff(state, params);
    state.g_ref * V_REF / (b * V_REF).sinh()
}

/// `(A, B_eff)` of the sinh law, for callers that evaluate the same device
/// at many voltages.
pub fn sinh_coeffs(state: &DeviceState, params: &DeviceParams) -> (f64, f64) {
    let b = b_eff(state, params);
    (state.g_ref * V_REF / (b * V_REF).sinh(), b)
}

/// Device current without operating-window checks (A).
///
/// Used by the network solver, whose Newton iterates may transiently step
/// outside the read window; the converged node voltages always lie inside
/// the driven-voltage hull.
pub fn current_raw(state: &DeviceState, params: &DeviceParams, v: f64) -> f64 {
    amplitude(state, params) * (b_eff(state, params) * v).sinh()
}

/// Derivative dI/dV of the device current (S), for Newton iterations.
pub fn slope_raw(state: &DeviceState, params: &DeviceParams, v: f64) -> f64 {
    let b = b_eff(state, params);
    amplitude(state, params) * b * (b * v).cosh()
}

/// Static device current at bias `v` (A).
pub fn current(state: &DeviceState, params: &DeviceParams, v: f64) -> Result<f64, DeviceError> {
    if !v.is_finite() {
        return Err(DeviceError::NonFinite("bias"));
    }
    if v.abs() > params.v_window {
        return Err(DeviceError::OutsideOperatingWindow { v, window: params.v_window });
    }
    Ok(current_raw(state, params, v))
}

/// Chord conductance `I(v)/v` at bias `v` (S); equals `g_ref` at [`V_REF`].
pub fn conductance(state: &DeviceState, params: &DeviceParams, v: f64) -> Result<f64, DeviceError> {
    if v == 0.0 {
        return Err(DeviceError::ZeroBias);
    }
    Ok(current(state, params, v)? / v)
}

/// Nonlinearity between biases `v` and `v0`, in percent:
/// `NL = |1 - (v/v0) * (I(v0)/I(v))| * 100`.
pub fn nonlinearity(
    state: &DeviceState,
    params: &DeviceParams,
    v: f64,
    v0: f64,
) -> Result<f64, DeviceError> {
    if v == 0.0 || v0 == 0.0 {
        return Err(DeviceError::ZeroBias);
    }
    let i_v = current(state, params, v)?;
    let i_v0 = current(state, params, v0)?;
    if i_v == 0.0 {
        return Err(DeviceError::ZeroBias);
    }
    Ok((1.0 - (v / v0) * (i_v0 / i_v)).abs() * 100.0)
}

/// Apply one programming pulse and return the new state.
///
/// Positive amplitude is SET polarity (conductance can only grow), negative
/// is RESET (conductance can only drop). A zero-amplitude pulse is a no-op.
/// The resulting `g_ref` is clamped to the dynamic range so tuning loops
/// always terminate.
pub fn apply_pulse(
    state: &DeviceState,
    params: &DeviceParams,
    amplitude_v: f64,
    width_s: f64,
    rng: &mut Stream,
) -> Result<DeviceState, DeviceError> {
    if !amplitude_v.is_finite() || !width_s.is_finite() {
        return Err(DeviceError::NonFinite("pulse"));
    }
    if width_s <= 0.0 {
        return Err(DeviceError::NonPositiveWidth(width_s));
    }
    if amplitude_v == 0.0 || params.defect {
        return Ok(*state);
    }
    let (eta, v_th, sign) = if amplitude_v > 0.0 {
        (params.eta_set, params.v_set, 1.0)
    } else {
        (params.eta_reset, params.v_reset, -1.0)
    };
    let drift = eta * width_s * ((amplitude_v.abs() - v_th) / params.v_slope).exp();
    // Consume the same number of draws regardless of noise settings so that
    // zeroed-noise runs stay aligned with noisy ones.
    let xi: f64 = rng.sample(StandardNormal);
    let zeta: f64 = rng.sample(StandardNormal);
    // Clamp the noise factor at zero: a pulse may be ineffective but never
    // reverses polarity.
    let noise = (1.0 + params.sigma_switch * xi).max(0.0);
    let delta_ln_g = sign * drift * noise;
    let g_new = (state.g_ref.ln() + delta_ln_g).exp().clamp(params.g_min, params.g_max);
    // Partial re-roll toward the stationary N(0, sigma_nl^2): theta is the
    // re-rolled fraction, with the mixing weights chosen so the stationary
    // variance is preserved.
    let theta = (drift / params.nl_reroll).min(1.0);
    let nl_new = if theta == 0.0 {
        state.nl_state
    } else {
        let fresh = params.sigma_nl * (theta * (2.0 - theta)).sqrt() * zeta;
        ((1.0 - theta) * state.nl_state + fresh).clamp(-NL_STATE_MAX, NL_STATE_MAX)
    };
    Ok(DeviceState { g_ref: g_new, nl_state: nl_new })
}

/// Process-variation model used to sample device populations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProcessVariation {
    /// Nominal parameters; sampled devices scatter around these.
    pub nominal: DeviceParams,
    /// Lognormal sigma of `b_nl`.
    pub sigma_ln_b: f64,
    /// Lognormal sigma of the SET threshold.
    pub sigma_ln_vset: f64,
    /// Lognormal sigma of the RESET threshold.
    pub sigma_ln_vreset: f64,
    /// Median of the as-fabricated conductance (S).
    pub init_g_median: f64,
    /// Lognormal sigma of the as-fabricated conductance.
    pub sigma_ln_g: f64,
    /// Fraction of devices that are functional (not stuck).
    pub yield_frac: f64,
}

impl Default for ProcessVariation {
    fn default() -> Self {
        ProcessVariation {
            nominal: DeviceParams::default(),
            sigma_ln_b: 0.05,
            sigma_ln_vset: 0.05,
            sigma_ln_vreset: 0.05,
            init_g_median: 20e-6,
            sigma_ln_g: 0.5,
            yield_frac: 1.0,
        }
    }
}

impl ProcessVariation {
    pub fn validate(&self) -> Result<(), DeviceError> {
        self.nominal.validate()?;
        let err = |msg: &str| Err(DeviceError::InvalidParams(msg.to_string()));
        if self.sigma_ln_b < 0.0 || self.sigma_ln_vset < 0.0 || self.sigma_ln_vreset < 0.0
            || self.sigma_ln_g < 0.0
        {
            return err("variation sigmas must be non-negative");
        }
        if !(self.init_g_median >= self.nominal.g_min && self.init_g_median <= self.nominal.g_max) {
            return err("init_g_median outside the dynamic range");
        }
        if !(0.0..=1.0).contains(&self.yield_frac) {
            return err("yield_frac must be in [0, 1]");
        }
        Ok(())
    }
}

/// Sample one device from the process-variation model.
///
/// With all sigmas zero and full yield this returns the nominal parameters
/// and the median initial state, deterministically.
pub fn sample(process: &ProcessVariation, rng: &mut Stream) -> (DeviceParams, DeviceState) {
    let n = &process.nominal;
    let z_b: f64 = rng.sample(StandardNormal);
    let z_vs: f64 = rng.sample(StandardNormal);
    let z_vr: f64 = rng.sample(StandardNormal);
    let z_g: f64 = rng.sample(StandardNormal);
    let u_defect: f64 = rng.random();
    let u_stuck: f64 = rng.random();

    let defect = u_defect >= process.yield_frac;
    let params = DeviceParams {
        b_nl: n.b_nl * (process.sigma_ln_b * z_b).exp(),
        v_set: n.v_set * (process.sigma_ln_vset * z_vs).exp(),
        v_reset: n.v_reset * (process.sigma_ln_vreset * z_vr).exp(),
        defect,
        ..*n
    };
    let g_ref = if defect {
        // Stuck at one end of the range.
        if u_stuck < 0.5 {
            n.g_min
        } else {
            n.g_max
        }
    } else {
        (process.init_g_median * (process.sigma_ln_g * z_g).exp()).clamp(n.g_min, n.g_max)
    };
    (params, DeviceState::new(g_ref))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::substream;
    use approx::assert_relative_eq;

    fn linear_params() -> DeviceParams {
        DeviceParams { b_nl: 1e-6, ..DeviceParams::default() }
    }

    #[test]
    fn linear_limit_is_ohmic() {
        let params = linear_params();
        let state = DeviceState::new(10e-6);
        for &v in &[-0.6, -0.3, -0.05, 0.05, 0.2, 0.45, 0.6] {
            let i = current(&state, &params, v).unwrap();
            assert_relative_eq!(i, state.g_ref * v, max_relative = 1e-6);
        }
    }

    #[test]
    #[allow(clippy::excessive_precision)] // frozen oracle values
    fn sinh_device_matches_closed_form() {
        // g_ref = 10 uS, kappa = 0, b_nl = 2/V: A = 10 uS * 0.2 V / sinh(0.4).
        let params = DeviceParams { b_nl: 2.0, kappa: 0.0, ..DeviceParams::default() };
        let state = DeviceState::new(10e-6);
        assert_relative_eq!(amplitude(&state, &params), 4.8691142432145687e-6, max_relative = 1e-14);
        let i = current(&state, &params, 0.6).unwrap();
        assert_relative_eq!(i, 7.3497397852193784e-6, max_relative = 1e-14);
        let g = conductance(&state, &params, 0.6).unwrap();
        assert_relative_eq!(g, 1.2249566308698964e-5, max_relative = 1e-14);
    }

    #[test]
    fn current_is_odd_and_monotone() {
        let process = ProcessVariation::default();
        let mut rng = substream(11, "device-odd", 0);
        for _ in 0..100 {
            let (params, state) = sample(&process, &mut rng);
            let mut prev = f64::NEG_INFINITY;
            for k in 0..=100 {
                let v = -1.0 + 0.02 * k as f64;
                let i = current(&state, &params, v).unwrap();
                let i_neg = current(&state, &params, -v).unwrap();
                assert_eq!(i, -i_neg);
                assert!(i > prev, "current not strictly increasing at v = {v}");
                prev = i;
            }
        }
    }

    #[test]
    fn conductance_at_reference_is_exact() {
        let process = ProcessVariation::default();
        let mut rng = substream(12, "device-gref", 0);
        for _ in 0..100 {
            let (params, state) = sample(&process, &mut rng);
            let g = conductance(&state, &params, V_REF).unwrap();
            assert_relative_eq!(g, state.g_ref, max_relative = 1e-13);
        }
    }

    #[test]
    fn conductance_of_linear_device_is_bias_independent() {
        let params = linear_params();
        let state = DeviceState::new(42e-6);
        let g0 = conductance(&state, &params, 0.1).unwrap();
        for &v in &[-0.8, -0.2, 0.05, 0.5, 1.0] {
            assert_relative_eq!(conductance(&state, &params, v).unwrap(), g0, max_relative = 1e-6);
        }
    }

    #[test]
    fn window_and_zero_bias_are_rejected() {
        let params = DeviceParams::default();
        let state = DeviceState::new(10e-6);
        assert!(matches!(
            current(&state, &params, 1.5),
            Err(DeviceError::OutsideOperatingWindow { .. })
        ));
        assert!(matches!(current(&state, &params, f64::NAN), Err(DeviceError::NonFinite(_))));
        assert_eq!(conductance(&state, &params, 0.0), Err(DeviceError::ZeroBias));
        assert_eq!(nonlinearity(&state, &params, 0.3, 0.0), Err(DeviceError::ZeroBias));
    }

    #[test]
    fn nonlinearity_vanishes_for_linear_devices_and_equal_biases() {
        let linear = linear_params();
        let state = DeviceState::new(10e-6);
        assert!(nonlinearity(&state, &linear, 0.6, 0.2).unwrap() < 1e-6);
        let params = DeviceParams::default();
        assert_eq!(nonlinearity(&state, &params, 0.37, 0.37).unwrap(), 0.0);
    }

    #[test]
    fn nonlinearity_matches_closed_form() {
        // B_eff = 2/V: NL(0.6 vs 0.2) = |1 - 3 sinh(0.4)/sinh(1.2)| * 100.
        let params = DeviceParams { b_nl: 2.0, kappa: 0.0, ..DeviceParams::default() };
        let state = DeviceState::new(10e-6);
        let nl = nonlinearity(&state, &params, 0.6, 0.2).unwrap();
        assert_relative_eq!(nl, 18.364456765309695, max_relative = 1e-13);
    }

    #[test]
    fn zero_amplitude_pulse_is_identity() {
        let params = DeviceParams::default();
        let state = DeviceState { g_ref: 10e-6, nl_state: 0.2 };
        let mut rng = substream(13, "pulse", 0);
        let after = apply_pulse(&state, &params, 0.0, 1e-5, &mut rng).unwrap();
        assert_eq!(after, state);
    }

    #[test]
    fn at_threshold_reset_matches_drift_law() {
        let params = DeviceParams { sigma_switch: 0.0, ..DeviceParams::default() };
        let state = DeviceState::new(50e-6);
        let width = 1e-6;
        let mut rng = substream(13, "pulse", 1);
        let after = apply_pulse(&state, &params, -params.v_reset, width, &mut rng).unwrap();
        let delta = after.g_ref.ln() - state.g_ref.ln();
        assert_relative_eq!(delta, -params.eta_reset * width, max_relative = 1e-12);
    }

    #[test]
    fn subthreshold_pulse_moves_less_than_at_threshold() {
        let params = DeviceParams { sigma_switch: 0.0, ..DeviceParams::default() };
        let state = DeviceState::new(50e-6);
        let mut rng = substream(13, "pulse", 2);
        let at = apply_pulse(&state, &params, -params.v_reset, 1e-5, &mut rng).unwrap();
        let sub = apply_pulse(&state, &params, -0.7 * params.v_reset, 1e-5, &mut rng).unwrap();
        let d_at = (at.g_ref.ln() - state.g_ref.ln()).abs();
        let d_sub = (sub.g_ref.ln() - state.g_ref.ln()).abs();
        assert!(d_sub < d_at);
        assert!(d_sub > 0.0);
    }

    #[test]
    fn pulse_polarity_and_range_clamp() {
        let process = ProcessVariation::default();
        let mut sample_rng = substream(14, "pulse-prop", 0);
        let mut pulse_rng = substream(14, "pulse-prop", 1);
        for k in 0..1000 {
            let (params, state) = sample(&process, &mut sample_rng);
            let amp = if k % 2 == 0 { 1.4 } else { -1.4 };
            let after = apply_pulse(&state, &params, amp, 1e-5, &mut pulse_rng).unwrap();
            let dg = after.g_ref - state.g_ref;
            if amp > 0.0 {
                assert!(dg >= 0.0);
            } else {
                assert!(dg <= 0.0);
            }
            assert!(after.g_ref >= params.g_min && after.g_ref <= params.g_max);
        }
    }

    #[test]
    fn zero_sigma_sampling_is_nominal() {
        let process = ProcessVariation {
            sigma_ln_b: 0.0,
            sigma_ln_vset: 0.0,
            sigma_ln_vreset: 0.0,
            sigma_ln_g: 0.0,
            ..ProcessVariation::default()
        };
        let mut rng = substream(15, "sample", 0);
        for _ in 0..10 {
            let (params, state) = sample(&process, &mut rng);
            assert_eq!(params, process.nominal);
            assert_eq!(state.g_ref, process.init_g_median);
            assert_eq!(state.nl_state, 0.0);
        }
    }

    #[test]
    fn sampled_ln_b_mean_is_unbiased() {
        let process = ProcessVariation::default();
        let mut rng = substream(16, "sample-stats", 0);
        let n = 10_000;
        let mean_ln_b: f64 = (0..n)
            .map(|_| sample(&process, &mut rng).0.b_nl.ln())
            .sum::<f64>()
            / n as f64;
        let se = process.sigma_ln_b / (n as f64).sqrt();
        let expected = process.nominal.b_nl.ln();
        assert!(
            (mean_ln_b - expected).abs() < 3.0 * se,
            "mean ln(b_nl) = {mean_ln_b}, expected {expected} +/- {}",
            3.0 * se
        );
    }

    #[test]
    fn yield_controls_defect_rate() {
        let process = ProcessVariation { yield_frac: 0.95, ..ProcessVariation::default() };
        let mut rng = substream(17, "yield", 0);
        let n = 10_000;
        let defects = (0..n).filter(|_| sample(&process, &mut rng).0.defect).count();
        // Binomial(10^4, 0.05): 99% interval is roughly 500 +/- 2.58 * sqrt(475).
        let half_width = (2.58 * (n as f64 * 0.05 * 0.95).sqrt()).ceil() as usize;
        assert!(
            (500 - half_width..=500 + half_width).contains(&defects),
            "defect count {defects} outside 99% interval"
        );
    }

    #[test]
    fn defective_devices_are_stuck() {
        let process = ProcessVariation { yield_frac: 0.0, ..ProcessVariation::default() };
        let mut rng = substream(18, "defect", 0);
        let (params, state) = sample(&process, &mut rng);
        assert!(params.defect);
        assert!(state.g_ref == params.g_min || state.g_ref == params.g_max);
        let after = apply_pulse(&state, &params, -1.4, 1e-5, &mut rng).unwrap();
        assert_eq!(after, state);
    }

    #[test]
    fn params_validation_rejects_bad_ranges() {
        let p = DeviceParams { g_min: 5e-4, ..DeviceParams::default() };
        assert!(p.validate().is_err());
        let p = DeviceParams { kappa: 3.0, ..DeviceParams::default() };
        assert!(p.validate().is_err(), "out-of-range kappa must be rejected");
        assert!(DeviceParams::default().validate().is_ok());
    }
}
