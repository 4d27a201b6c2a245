//! Write-verify programming, target-distribution generation and rattling.
//!
//! Programming follows the classic pulse-ladder write-verify loop: read at
//! the reference bias, pulse toward the target with an amplitude ramp that
//! restarts from the sub-threshold starting rung whenever the polarity
//! flips, stop inside the relative tolerance band. The ladder ceiling is a
//! multiple of the device's own threshold.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::crossbar::{ConductanceGrid, CrossbarArray, DeviceAddr, LineMap};
use crate::device::{self, DeviceError};
use crate::rng::Stream;

#[derive(Debug, Error, PartialEq)]
pub enum TuningError {
    #[error("target {target:e} S outside the device range [{g_min:e}, {g_max:e}]")]
    TargetOutOfRange { target: f64, g_min: f64, g_max: f64 },
    #[error("device untunable after {pulses} pulses (relative error {rel_err:.3})")]
    Untunable { pulses: u32, rel_err: f64 },
    #[error("infeasible target distribution: {0}")]
    Infeasible(String),
    #[error("target grid shape does not match the array")]
    ShapeMismatch,
    #[error(transparent)]
    Device(#[from] DeviceError),
}

/// Write-verify policy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TuningPolicy {
    /// Relative stop tolerance on the read-back conductance.
    pub tolerance: f64,
    /// Pulse budget per device.
    pub max_pulses: u32,
    /// First rung of the amplitude ladder (V), far sub-threshold so the
    /// smallest programmable step is finer than the tolerance band.
    pub start_amplitude: f64,
    /// Ladder increment per same-polarity pulse (V).
    pub amplitude_step: f64,
    /// Ladder ceiling as a multiple of the device threshold.
    pub max_amplitude_frac: f64,
    /// Pulse width (s).
    pub pulse_width: f64,
}

impl Default for TuningPolicy {
    fn default() -> Self {
        TuningPolicy {
            tolerance: 0.01,
            max_pulses: 400,
            start_amplitude: 0.10,
            amplitude_step: 0.05,
            max_amplitude_frac: 1.3,
            pulse_width: 10e-6,
        }
    }
}

/// Program one device to `target_g` by pulse-ladder write-verify.
///
/// Returns the number of pulses used. Succeeding reads are exact state
/// reads at the reference bias; the stochastic part is the switching law.
pub fn tune_device(
    array: &mut CrossbarArray,
    addr: DeviceAddr,
    target_g: f64,
    policy: &TuningPolicy,
    rng: &mut Stream,
) -> Result<u32, TuningError> {
    let params = array.device(addr).params;
    if !(target_g >= params.g_min && target_g <= params.g_max) {
        return Err(TuningError::TargetOutOfRange {
            target: target_g,
            g_min: params.g_min,
            g_max: params.g_max,
        });
    }
    let mut pulses = 0u32;
    let mut amp = policy.start_amplitude;
    let mut last_polarity = 0i8;
    loop {
        let g = array.device(addr).state.g_ref;
        let rel_err = (g - target_g).abs() / target_g;
        if rel_err <= policy.tolerance {
            return Ok(pulses);
        }
        if params.defect || pulses >= policy.max_pulses {
            return Err(TuningError::Untunable { pulses, rel_err });
        }
        let polarity: i8 = if g < target_g { 1 } else { -1 };
        if polarity != last_polarity {
            amp = policy.start_amplitude;
            last_polarity = polarity;
        }
        let threshold = if polarity > 0 { params.v_set } else { params.v_reset };
        let rung = amp.min(policy.max_amplitude_frac * threshold);
        let state = array.device(addr).state;
        let next = device::apply_pulse(
            &state,
            &params,
            f64::from(polarity) * rung,
            policy.pulse_width,
            rng,
        )?;
        array.device_mut(addr).state = next;
        pulses += 1;
        amp += policy.amplitude_step;
    }
}

/// Target conductance map for a whole array.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetDistribution {
    pub mu_w: f64,
    pub sigma_w: f64,
    /// Relative confidence margin used for acceptance and column balance.
    pub margin: f64,
    pub targets: ConductanceGrid,
    /// Fraction of devices whose draw hit the dynamic-range clip.
    pub clip_fraction: f64,
}

/// Generate a spatially balanced target distribution.
///
/// Per-column and per-row weight sums are sampled close to their shares of
/// the grand total, device targets are drawn from `N(mu_w, sigma_w)` and
/// raked (alternating minimum-norm shifts, the per-line linear systems
/// solved to equality) onto those sums, clipped to the dynamic range with
/// the clipped excess redistributed, and the candidate set is accepted once
/// its empirical mean and spread sit inside the confidence margin. The dual
/// balance removes persistent line biases that would otherwise skew every
/// differential response the same way.
pub fn generate_target_distribution(
    map: LineMap,
    mu_w: f64,
    sigma_w: f64,
    margin: f64,
    g_min: f64,
    g_max: f64,
    rng: &mut Stream,
) -> Result<TargetDistribution, TuningError> {
    if !(mu_w >= g_min && mu_w <= g_max) {
        return Err(TuningError::Infeasible(format!(
            "mu_w {mu_w:e} outside the dynamic range [{g_min:e}, {g_max:e}]"
        )));
    }
    if sigma_w < 0.0 || margin <= 0.0 {
        return Err(TuningError::Infeasible("need sigma_w >= 0 and margin > 0".into()));
    }
    let (layers, rows, cols) = (map.layers, map.rows, map.cols);
    let devices = layers * rows * cols;
    if sigma_w == 0.0 {
        return Ok(TargetDistribution {
            mu_w,
            sigma_w,
            margin,
            targets: ConductanceGrid::filled(layers, rows, cols, mu_w),
            clip_fraction: 0.0,
        });
    }
    let idx = |l: usize, r: usize, c: usize| (l * rows + r) * cols + c;

    // Spread of the sampled line sums: small against the balance margin,
    // zero when sigma_w is zero.
    let eps_sigma = if sigma_w == 0.0 {
        0.0
    } else {
        (margin / 8.0).min(sigma_w / (mu_w * (rows.min(cols) as f64).sqrt()))
    };
    let normal = |rng: &mut Stream| -> f64 { rng.sample::<f64, _>(rand_distr::StandardNormal) };

    'attempt: for _attempt in 0..10_000 {
        let mut values = vec![0.0; devices];
        let mut clipped = 0usize;
        for layer in 0..layers {
            // Sampled line sums, rescaled to a common grand total.
            let mut col_sums: Vec<f64> =
                (0..cols).map(|_| rows as f64 * mu_w * (1.0 + eps_sigma * normal(rng))).collect();
            let mut row_sums: Vec<f64> =
                (0..rows).map(|_| cols as f64 * mu_w * (1.0 + eps_sigma * normal(rng))).collect();
            let total = rows as f64 * cols as f64 * mu_w;
            let col_total: f64 = col_sums.iter().sum();
            let row_total: f64 = row_sums.iter().sum();
            col_sums.iter_mut().for_each(|s| *s *= total / col_total);
            row_sums.iter_mut().for_each(|s| *s *= total / row_total);

            let mut w: Vec<f64> = (0..rows * cols).map(|_| mu_w + sigma_w * normal(rng)).collect();
            let lidx = |r: usize, c: usize| r * cols + c;
            // Rake a line onto its target sum (minimum-norm shift), then onto
            // the target spread (scale about the mean, which preserves the
            // sum). Balancing the second moment as well keeps any smooth
            // per-device weight transform balanced across lines, not just
            // the raw conductances.
            let rake_line = |w: &mut [f64], idxs: &mut dyn Iterator<Item = usize>, sum: f64| {
                let idxs: Vec<usize> = idxs.collect();
                let n = idxs.len() as f64;
                let mean: f64 = idxs.iter().map(|&i| w[i]).sum::<f64>() / n;
                let shift = sum / n - mean;
                for &i in &idxs {
                    w[i] += shift;
                }
                let target_mean = sum / n;
                let var: f64 =
                    idxs.iter().map(|&i| (w[i] - target_mean) * (w[i] - target_mean)).sum::<f64>() / n;
                if var > 0.0 && sigma_w > 0.0 {
                    let scale = (sigma_w * sigma_w / var).sqrt().clamp(0.8, 1.25);
                    for &i in &idxs {
                        w[i] = target_mean + scale * (w[i] - target_mean);
                    }
                }
            };
            for _round in 0..200 {
                for (c, sum) in col_sums.iter().enumerate() {
                    rake_line(&mut w, &mut (0..rows).map(|r| lidx(r, c)), *sum);
                }
                for (r, sum) in row_sums.iter().enumerate() {
                    rake_line(&mut w, &mut (0..cols).map(|c| lidx(r, c)), *sum);
                }
                // Clip into the dynamic range; redistribute the excess over
                // the free devices and rake again if anything moved.
                let mut excess = 0.0;
                let mut free = 0usize;
                let mut hit = 0usize;
                for g in w.iter_mut() {
                    if *g < g_min {
                        excess += *g - g_min;
                        *g = g_min;
                        hit += 1;
                    } else if *g > g_max {
                        excess += *g - g_max;
                        *g = g_max;
                        hit += 1;
                    } else {
                        free += 1;
                    }
                }
                clipped += hit;
                if hit == 0 {
                    break;
                }
                if free == 0 {
                    continue 'attempt;
                }
                let per = excess / free as f64;
                for g in w.iter_mut() {
                    if *g > g_min && *g < g_max {
                        *g += per;
                    }
                }
            }
            // Balance check on the realized sums.
            let spread = |sums: &[f64]| {
                let max = sums.iter().cloned().fold(f64::MIN, f64::max);
                let min = sums.iter().cloned().fold(f64::MAX, f64::min);
                max / min
            };
            let real_cols: Vec<f64> =
                (0..cols).map(|c| (0..rows).map(|r| w[lidx(r, c)]).sum()).collect();
            let real_rows: Vec<f64> =
                (0..rows).map(|r| (0..cols).map(|c| w[lidx(r, c)]).sum()).collect();
            if spread(&real_cols) > 1.0 + margin || spread(&real_rows) > 1.0 + margin {
                continue 'attempt;
            }
            for r in 0..rows {
                for c in 0..cols {
                    values[idx(layer, r, c)] = w[lidx(r, c)];
                }
            }
        }

        // Acceptance: empirical mean and spread inside the margin.
        let mean = values.iter().sum::<f64>() / devices as f64;
        if (mean - mu_w).abs() > margin * mu_w {
            continue;
        }
        if sigma_w > 0.0 {
            let var = values.iter().map(|g| (g - mean) * (g - mean)).sum::<f64>() / devices as f64;
            if (var.sqrt() - sigma_w).abs() > margin * sigma_w {
                continue;
            }
        }

        let mut targets = ConductanceGrid::filled(layers, rows, cols, 0.0);
        for l in 0..layers {
            for r in 0..rows {
                for c in 0..cols {
                    targets.set(DeviceAddr::new(l, r, c), values[idx(l, r, c)]);
                }
            }
        }
        return Ok(TargetDistribution {
            mu_w,
            sigma_w,
            margin,
            targets,
            clip_fraction: clipped as f64 / devices as f64,
        });
    }
    Err(TuningError::Infeasible("acceptance loop did not converge".into()))
}

/// Per-device outcome of programming a whole array.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProgramReport {
    /// Pulses per device, row-major per layer.
    pub pulses: Vec<u32>,
    pub failures: Vec<ProgramFailure>,
    pub total_pulses: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProgramFailure {
    pub addr: DeviceAddr,
    pub pulses: u32,
    pub rel_err: f64,
}

/// Write-verify every crosspoint to its target.
///
/// Untunable devices (defects, exhausted budgets) are reported, not fatal;
/// out-of-range targets abort.
pub fn program_array(
    array: &mut CrossbarArray,
    targets: &TargetDistribution,
    policy: &TuningPolicy,
    rng: &mut Stream,
) -> Result<ProgramReport, TuningError> {
    let map = array.line_map();
    let grid = &targets.targets;
    if grid.layers != map.layers || grid.rows != map.rows || grid.cols != map.cols {
        return Err(TuningError::ShapeMismatch);
    }
    let mut report =
        ProgramReport { pulses: Vec::with_capacity(array.device_count()), failures: Vec::new(), total_pulses: 0 };
    for addr in array.addrs().collect::<Vec<_>>() {
        match tune_device(array, addr, grid.get(addr), policy, rng) {
            Ok(p) => {
                report.pulses.push(p);
                report.total_pulses += u64::from(p);
            }
            Err(TuningError::Untunable { pulses, rel_err }) => {
                report.pulses.push(pulses);
                report.total_pulses += u64::from(pulses);
                report.failures.push(ProgramFailure { addr, pulses, rel_err });
            }
            Err(other) => return Err(other),
        }
    }
    Ok(report)
}

/// Rattling reconfiguration: one RESET-polarity pulse per device with a
/// random amplitude up to `max_fraction` of the array's mean RESET
/// threshold. Returns the post-rattle state map.
pub fn rattle_array(
    array: &mut CrossbarArray,
    max_fraction: f64,
    width_s: f64,
    rng: &mut Stream,
) -> Result<ConductanceGrid, TuningError> {
    if !(0.0..=1.0).contains(&max_fraction) {
        return Err(TuningError::Infeasible(format!(
            "rattle max_fraction {max_fraction} outside [0, 1]"
        )));
    }
    let cap = max_fraction * array.mean_v_reset();
    for addr in array.addrs().collect::<Vec<_>>() {
        let amplitude = cap * rng.random::<f64>();
        let xp = array.device(addr);
        let next = device::apply_pulse(&xp.state, &xp.params, -amplitude, width_s, rng)?;
        array.device_mut(addr).state = next;
    }
    Ok(array.conductance_grid())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::device::ProcessVariation;
    use crate::rng::substream;

    fn sampled_array(seed: u64) -> CrossbarArray {
        let process = ProcessVariation::default();
        let mut rng = substream(seed, "fab", 0);
        CrossbarArray::sample(1, 10, 10, false, &process, &mut rng).unwrap()
    }

    #[test]
    fn target_already_met_needs_no_pulses() {
        let mut array = sampled_array(61);
        let addr = DeviceAddr::new(0, 0, 0);
        let g = array.device(addr).state.g_ref;
        let mut rng = substream(61, "tune", 0);
        let pulses =
            tune_device(&mut array, addr, g * 1.0005, &TuningPolicy::default(), &mut rng).unwrap();
        assert_eq!(pulses, 0);
    }

    #[test]
    fn out_of_range_target_is_rejected() {
        let mut array = sampled_array(62);
        let addr = DeviceAddr::new(0, 0, 0);
        let g_max = array.device(addr).params.g_max;
        let mut rng = substream(62, "tune", 0);
        assert!(matches!(
            tune_device(&mut array, addr, 2.0 * g_max, &TuningPolicy::default(), &mut rng),
            Err(TuningError::TargetOutOfRange { .. })
        ));
    }

    #[test]
    fn sixteen_equally_spaced_states_reach_one_percent() {
        let mut array = sampled_array(63);
        let addr = DeviceAddr::new(0, 3, 4);
        let policy = TuningPolicy::default();
        let mut rng = substream(63, "tune", 0);
        for k in 0..16 {
            let target = 2e-6 + 2e-6 * k as f64;
            let pulses = tune_device(&mut array, addr, target, &policy, &mut rng)
                .unwrap_or_else(|e| panic!("state {k} failed: {e}"));
            let g = array.device(addr).state.g_ref;
            assert!((g - target).abs() / target <= policy.tolerance);
            assert!(pulses <= policy.max_pulses);
        }
    }

    #[test]
    fn distribution_with_zero_sigma_is_flat() {
        let map = LineMap { layers: 1, rows: 10, cols: 10, shared_middle: false };
        let mut rng = substream(64, "targets", 0);
        let dist =
            generate_target_distribution(map, 20e-6, 0.0, 0.02, 1e-6, 200e-6, &mut rng).unwrap();
        for &g in dist.targets.values() {
            assert_eq!(g, 20e-6);
        }
        assert_eq!(dist.clip_fraction, 0.0);
    }

    #[test]
    fn distribution_mean_is_unbiased_over_runs() {
        let map = LineMap { layers: 1, rows: 10, cols: 10, shared_middle: false };
        let mut means = Vec::new();
        for seed in 0..50u64 {
            let mut rng = substream(seed, "targets", 1);
            let dist =
                generate_target_distribution(map, 20e-6, 6e-6, 0.02, 1e-6, 200e-6, &mut rng)
                    .unwrap();
            let mean =
                dist.targets.values().iter().sum::<f64>() / dist.targets.values().len() as f64;
            means.push(mean);
        }
        let grand = means.iter().sum::<f64>() / means.len() as f64;
        // Acceptance already bounds each run to 2%; the grand mean must sit
        // within 3 standard errors of an unbiased generator.
        let se = 6e-6 / (100.0f64 * 50.0).sqrt();
        assert!((grand - 20e-6).abs() < 3.0 * se + 1e-9, "grand mean {grand:e}");
    }

    #[test]
    fn column_sums_stay_balanced() {
        let map = LineMap { layers: 1, rows: 10, cols: 10, shared_middle: false };
        for seed in 0..10u64 {
            let mut rng = substream(seed, "targets", 2);
            let dist =
                generate_target_distribution(map, 20e-6, 6e-6, 0.02, 1e-6, 200e-6, &mut rng)
                    .unwrap();
            let mut sums = [0.0; 10];
            for addr in dist.targets.addrs() {
                sums[addr.col] += dist.targets.get(addr);
            }
            let max = sums.iter().cloned().fold(f64::MIN, f64::max);
            let min = sums.iter().cloned().fold(f64::MAX, f64::min);
            assert!(max / min <= 1.02, "column imbalance {}", max / min);
            for &g in dist.targets.values() {
                assert!((1e-6..=200e-6).contains(&g));
            }
        }
    }

    #[test]
    fn distribution_is_deterministic_per_seed() {
        let map = LineMap { layers: 1, rows: 6, cols: 7, shared_middle: false };
        let gen = || {
            let mut rng = substream(65, "targets", 3);
            generate_target_distribution(map, 20e-6, 6e-6, 0.02, 1e-6, 200e-6, &mut rng).unwrap()
        };
        assert_eq!(gen(), gen());
    }

    #[test]
    fn infeasible_mean_is_rejected() {
        let map = LineMap { layers: 1, rows: 4, cols: 4, shared_middle: false };
        let mut rng = substream(66, "targets", 0);
        assert!(matches!(
            generate_target_distribution(map, 5e-4, 1e-6, 0.02, 1e-6, 200e-6, &mut rng),
            Err(TuningError::Infeasible(_))
        ));
    }

    #[test]
    fn program_array_reaches_every_healthy_device() {
        let mut array = sampled_array(67);
        let map = array.line_map();
        let mut rng = substream(67, "targets", 0);
        let dist =
            generate_target_distribution(map, 20e-6, 6e-6, 0.02, 1e-6, 200e-6, &mut rng).unwrap();
        let policy = TuningPolicy::default();
        let mut tune_rng = substream(67, "tune", 0);
        let report = program_array(&mut array, &dist, &policy, &mut tune_rng).unwrap();
        assert!(report.failures.is_empty(), "failures: {:?}", report.failures);
        for addr in array.addrs().collect::<Vec<_>>() {
            let g = array.device(addr).state.g_ref;
            let t = dist.targets.get(addr);
            assert!((g - t).abs() / t <= policy.tolerance * 1.0001);
        }
        // Re-programming an already programmed array costs nothing.
        let again = program_array(&mut array, &dist, &policy, &mut tune_rng).unwrap();
        assert_eq!(again.total_pulses, 0);
    }

    #[test]
    fn defective_devices_are_reported_not_fatal() {
        let process = ProcessVariation { yield_frac: 0.9, ..ProcessVariation::default() };
        let mut rng = substream(68, "fab", 0);
        let mut array = CrossbarArray::sample(1, 8, 8, false, &process, &mut rng).unwrap();
        let defects = array.crosspoints().filter(|(_, xp)| xp.params.defect).count();
        assert!(defects > 0, "fixture needs at least one defect");
        let map = array.line_map();
        let dist = generate_target_distribution(map, 20e-6, 6e-6, 0.02, 1e-6, 200e-6, &mut rng)
            .unwrap();
        let report =
            program_array(&mut array, &dist, &TuningPolicy::default(), &mut rng).unwrap();
        // Defective devices fail unless their stuck state happens to sit on
        // the target.
        assert!(report.failures.len() <= defects);
        assert!(!report.failures.is_empty());
    }

    #[test]
    fn rattle_zero_fraction_is_identity() {
        let mut array = sampled_array(69);
        let before = array.conductance_grid();
        let mut rng = substream(69, "rattle", 0);
        let after = rattle_array(&mut array, 0.0, 10e-6, &mut rng).unwrap();
        assert_eq!(after, before);
    }

    #[test]
    fn rattle_never_increases_conductance() {
        let mut array = sampled_array(70);
        let before = array.conductance_grid();
        let mut rng = substream(70, "rattle", 0);
        let after = rattle_array(&mut array, 0.7, 10e-6, &mut rng).unwrap();
        for (b, a) in before.values().iter().zip(after.values()) {
            assert!(a <= b);
        }
    }

    #[test]
    fn successive_rattles_give_distinct_maps() {
        let mut array = sampled_array(71);
        let mut rng = substream(71, "rattle", 0);
        let mut maps = Vec::new();
        for _ in 0..10 {
            maps.push(rattle_array(&mut array, 0.7, 10e-6, &mut rng).unwrap());
        }
        let tolerance = 0.01 * 20e-6;
        for i in 0..maps.len() {
            for j in i + 1..maps.len() {
                assert!(
                    maps[i].max_abs_diff(&maps[j]) > tolerance,
                    "maps {i} and {j} are too similar"
                );
            }
        }
    }

    #[test]
    fn rattle_is_cheaper_than_retuning() {
        let mut array = sampled_array(72);
        let map = array.line_map();
        let mut rng = substream(72, "targets", 0);
        let dist = generate_target_distribution(map, 20e-6, 6e-6, 0.02, 1e-6, 200e-6, &mut rng)
            .unwrap();
        let mut tune_rng = substream(72, "tune", 0);
        program_array(&mut array, &dist, &TuningPolicy::default(), &mut tune_rng).unwrap();

        // Rattle cost: exactly one pulse per device.
        let rattle_pulses = array.device_count() as u64;
        // Retune cost to a fresh distribution.
        let mut target_rng = substream(72, "targets", 1);
        let fresh =
            generate_target_distribution(map, 20e-6, 6e-6, 0.02, 1e-6, 200e-6, &mut target_rng)
                .unwrap();
        let report =
            program_array(&mut array, &fresh, &TuningPolicy::default(), &mut tune_rng).unwrap();
        assert!(
            rattle_pulses <= report.total_pulses,
            "rattle {rattle_pulses} vs retune {}",
            report.total_pulses
        );
    }
}
