//! The stock experiment protocols and their building blocks.
//!
//! Every random draw comes from a named substream of the master seed, so a
//! run is a pure function of (config, seed): rerunning produces the same
//! artifact bytes, and stages can be reordered or skipped without shifting
//! each other's streams.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use anyhow::{bail, Context, Result};
use num_bigint::BigUint;
use rand::Rng;

use nlpuf_core::crossbar::{write_conductance_csv, ConductanceGrid, CrossbarArray, LineMap};
use nlpuf_core::environment::{age_array, thermal_snapshot, PerturbationModel};
use nlpuf_core::metrics::{self, MetricsReport};
use nlpuf_core::puf::{
    self, respond_bit_with, Challenge, ChallengeSpace, NlrpufConfig, ReadEnv, ResponseKey,
    Segment, SegmentSpec,
};
use nlpuf_core::rng::{substream, Stream};
use nlpuf_core::tuning::{
    generate_target_distribution, program_array, rattle_array, ProgramReport, TargetDistribution,
};
use nlpuf_core::crossbar::SolverOptions;

use crate::config::ExperimentConfig;
use crate::manifest::ArtifactSet;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExperimentName {
    /// Randomness metrics per bias, inter-bias uniqueness and the
    /// aging/supply and hot-read reliability protocols.
    Fig3,
    /// Reconfiguration: retuned and rattled instance uniqueness.
    Fig4,
    /// The composed two-layer primitive: per-bias, multi-bias and
    /// quaternary keys.
    Fig5,
    /// Base pipeline at configured scale: tune, respond, randomness
    /// metrics.
    Custom,
}

impl FromStr for ExperimentName {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fig3" => Ok(Self::Fig3),
            "fig4" => Ok(Self::Fig4),
            "fig5" => Ok(Self::Fig5),
            "custom" => Ok(Self::Custom),
            other => bail!("unknown experiment `{other}` (expected fig3|fig4|fig5|custom)"),
        }
    }
}

impl fmt::Display for ExperimentName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Self::Fig3 => "fig3",
            Self::Fig4 => "fig4",
            Self::Fig5 => "fig5",
            Self::Custom => "custom",
        };
        write!(f, "{name}")
    }
}

fn line_map(cfg: &ExperimentConfig) -> LineMap {
    LineMap {
        layers: cfg.array.layers,
        rows: cfg.array.rows,
        cols: cfg.array.cols,
        shared_middle: cfg.array.shared_middle,
    }
}

/// A freshly fabricated and programmed array, with its history.
pub struct TunedArray {
    pub array: CrossbarArray,
    pub initial: ConductanceGrid,
    pub targets: TargetDistribution,
    pub report: ProgramReport,
}

/// Sample an as-fabricated array from the config's process model.
pub fn fabricate(cfg: &ExperimentConfig, seed: u64) -> Result<CrossbarArray> {
    let process = cfg.device.to_process();
    let a = &cfg.array;
    let mut rng = substream(seed, "fab", 0);
    CrossbarArray::sample(a.layers, a.rows, a.cols, a.shared_middle, &process, &mut rng)
        .context("fabricating array")
}

/// Fabricate, generate a balanced target distribution and program it.
pub fn tuned_array(cfg: &ExperimentConfig, seed: u64) -> Result<TunedArray> {
    let mut array = fabricate(cfg, seed)?;
    let initial = array.conductance_grid();
    let t = &cfg.tuning;
    let mut target_rng = substream(seed, "targets", 0);
    let targets = generate_target_distribution(
        array.line_map(),
        t.mu_w,
        t.sigma_w,
        t.margin,
        cfg.device.g_min,
        cfg.device.g_max,
        &mut target_rng,
    )
    .context("generating target distribution")?;
    let mut tune_rng = substream(seed, "tune", 0);
    let report = program_array(&mut array, &targets, &t.policy(), &mut tune_rng)
        .context("programming array")?;
    Ok(TunedArray { array, initial, targets, report })
}

/// Challenge space the config describes.
pub fn challenge_space(cfg: &ExperimentConfig) -> Result<ChallengeSpace> {
    let map = line_map(cfg);
    let (col_pool, row_pool) = if cfg.puf.transpose {
        (map.row_pool().len(), map.col_pool().len())
    } else {
        (map.col_pool().len(), map.row_pool().len())
    };
    Ok(ChallengeSpace::new(col_pool, row_pool, cfg.puf.m, cfg.puf.n, cfg.puf.policy()?)?)
}

fn sample_distinct_ranks(space_count: &BigUint, count: usize, rng: &mut Stream) -> Vec<BigUint> {
    let bits = space_count.bits();
    let mut seen: BTreeSet<Vec<u8>> = BTreeSet::new();
    let mut out = Vec::with_capacity(count);
    assert!(
        BigUint::from(count) <= *space_count,
        "cannot draw {count} exclusive challenges from a space of {space_count}"
    );
    while out.len() < count {
        // Rejection-sample a uniform rank below the space size.
        let candidate = loop {
            let mut bytes = vec![0u8; bits.div_ceil(8) as usize];
            rng.fill(&mut bytes[..]);
            if !bits.is_multiple_of(8) {
                let keep = bits % 8;
                let last = bytes.len() - 1;
                bytes[last] &= (1u8 << keep) - 1;
            }
            let r = BigUint::from_bytes_le(&bytes);
            if r < *space_count {
                break r;
            }
        };
        if seen.insert(candidate.to_bytes_le()) {
            out.push(candidate);
        }
    }
    out
}

/// Exclusive (without replacement) random challenges from the configured
/// space.
pub fn sample_challenges(
    cfg: &ExperimentConfig,
    seed: u64,
    label: &str,
    count: usize,
) -> Result<Vec<Challenge>> {
    let space = challenge_space(cfg)?;
    let total = space.count()?;
    let mut rng = substream(seed, label, 0);
    sample_distinct_ranks(&total, count, &mut rng)
        .iter()
        .map(|rank| Ok(space.challenge_from_rank(rank)?))
        .collect()
}

/// Evaluate a challenge list into packets, optionally through the
/// perturbed read chain.
pub fn respond_packets(
    cfg: &ExperimentConfig,
    array: &CrossbarArray,
    challenges: &[Challenge],
    v_b: f64,
    mut env: Option<(&PerturbationModel, &mut Stream)>,
) -> Result<Vec<u64>> {
    let orientation = cfg.puf.orientation();
    let opts = SolverOptions::default();
    let mut key = ResponseKey::new(1);
    for ch in challenges {
        let read_env = env.as_mut().map(|(model, rng)| ReadEnv { model, rng });
        let (bit, _) = respond_bit_with(array, ch, v_b, orientation, &opts, read_env)?;
        key.push_bit(bit);
    }
    Ok(key.packets()?.to_vec())
}

fn bias_label(v_b: f64) -> String {
    format!("{:.0}mv", v_b * 1e3)
}

fn hex_lines(packets: &[u64]) -> String {
    ResponseKey::from_packets(packets.to_vec(), 1).to_hex().expect("whole packets")
}

fn add_randomness_reports(
    artifacts: &mut ArtifactSet,
    prefix: &str,
    label: &str,
    keys: &[u64],
) -> Result<(MetricsReport, MetricsReport)> {
    let uf = metrics::uniformity(keys)?;
    let df = metrics::diffuseness(keys)?;
    artifacts.add_json(format!("{prefix}/uniformity_{label}.json"), &uf);
    artifacts.add_json(format!("{prefix}/diffuseness_{label}.json"), &df);
    Ok((uf, df))
}

fn challenges_text(space: &ChallengeSpace, challenges: &[Challenge]) -> Result<String> {
    let mut text = String::new();
    for ch in challenges {
        text.push_str(&space.to_line(ch)?);
        text.push('\n');
    }
    Ok(text)
}

/// Run one stock experiment; the artifact set contains every map,
/// bitstream and report the protocol produces.
pub fn run_experiment(cfg: &ExperimentConfig, name: ExperimentName) -> Result<ArtifactSet> {
    cfg.validate()?;
    match name {
        ExperimentName::Fig3 => fig3(cfg),
        ExperimentName::Fig4 => fig4(cfg),
        ExperimentName::Fig5 => fig5(cfg),
        ExperimentName::Custom => custom(cfg),
    }
}

fn base_pipeline(
    cfg: &ExperimentConfig,
    artifacts: &mut ArtifactSet,
    packets: usize,
) -> Result<(TunedArray, Vec<Challenge>, Vec<Vec<u64>>)> {
    let seed = cfg.master_seed;
    let tuned = tuned_array(cfg, seed)?;
    artifacts.add_text("arrays/initial.csv", write_conductance_csv(&tuned.initial));
    artifacts.add_text("arrays/targets.csv", write_conductance_csv(&tuned.targets.targets));
    artifacts.add_text("arrays/tuned.csv", write_conductance_csv(&tuned.array.conductance_grid()));
    artifacts.add_json("reports/tuning_report.json", &tuned.report);

    let space = challenge_space(cfg)?;
    let challenges = sample_challenges(cfg, seed, "challenges", packets * 64)?;
    artifacts.add_text("challenges.txt", challenges_text(&space, &challenges)?);

    let mut keys_by_bias = Vec::new();
    for &v_b in &cfg.puf.biases {
        let keys = respond_packets(cfg, &tuned.array, &challenges, v_b, None)?;
        artifacts.add_text(format!("bits/bias_{}.hex", bias_label(v_b)), hex_lines(&keys));
        add_randomness_reports(artifacts, "reports", &bias_label(v_b), &keys)?;
        keys_by_bias.push(keys);
    }
    let labelled: Vec<(String, Vec<u64>)> = cfg
        .puf
        .biases
        .iter()
        .zip(&keys_by_bias)
        .map(|(v, k)| (bias_label(*v), k.clone()))
        .collect();
    let inter = metrics::inter_bias_matrix(&labelled)?;
    if let Some(m) = &inter.pairwise {
        artifacts.add_text("reports/inter_bias_uniqueness.csv", m.to_csv());
    }
    artifacts.add_json("reports/inter_bias_uniqueness.json", &inter);
    Ok((tuned, challenges, keys_by_bias))
}

fn custom(cfg: &ExperimentConfig) -> Result<ArtifactSet> {
    let mut artifacts = ArtifactSet::new();
    base_pipeline(cfg, &mut artifacts, cfg.experiment.packets_per_bias)?;
    Ok(artifacts)
}

fn fig3(cfg: &ExperimentConfig) -> Result<ArtifactSet> {
    let seed = cfg.master_seed;
    let mut artifacts = ArtifactSet::new();
    let (tuned, challenges, keys_by_bias) =
        base_pipeline(cfg, &mut artifacts, cfg.experiment.packets_per_bias)?;

    let e = &cfg.experiment;
    let ber_bits = e.ber_packets * 64;
    if ber_bits > challenges.len() {
        bail!("ber_packets exceeds packets_per_bias");
    }
    let ber_challenges = &challenges[..ber_bits];
    let room = cfg.perturbation.model();

    // Aging chain: checkpoints drift cumulatively from the tuned state;
    // every checkpoint is read `ber_trials` times under supply variation
    // and read noise against the pristine deterministic reference.
    let mut stages = Vec::new();
    let mut aged = tuned.array.clone();
    let mut last_day = 0.0;
    for (k, &day) in e.aging_days.iter().enumerate() {
        if day < last_day {
            bail!("aging_days must be non-decreasing");
        }
        let mut rng = substream(seed, "age", k as u64);
        aged = age_array(&aged, &room, day - last_day, &mut rng)?;
        last_day = day;
        artifacts.add_text(
            format!("arrays/aged_day{day:.0}.csv"),
            write_conductance_csv(&aged.conductance_grid()),
        );
        stages.push((day, aged.clone()));
    }
    for (bi, &v_b) in cfg.puf.biases.iter().enumerate() {
        let reference = &keys_by_bias[bi][..e.ber_packets];
        let mut trials = Vec::new();
        for (k, (day, stage)) in stages.iter().enumerate() {
            for t in 0..e.ber_trials {
                let idx = (bi * stages.len() * e.ber_trials + k * e.ber_trials + t) as u64;
                let mut rng = substream(seed, "read-age", idx);
                let keys =
                    respond_packets(cfg, stage, ber_challenges, v_b, Some((&room, &mut rng)))?;
                artifacts.add_text(
                    format!("bits/ber_age_day{day:.0}_trial{t}_{}.hex", bias_label(v_b)),
                    hex_lines(&keys),
                );
                trials.push(keys);
            }
        }
        let report = metrics::ber(reference, &trials)?;
        artifacts.add_json(format!("reports/ber_aging_{}.json", bias_label(v_b)), &report);
    }

    // Hot reads against the room-temperature reference.
    let hot_model = cfg.perturbation.model_at(e.hot_temp);
    let mut snap_rng = substream(seed, "thermal", 0);
    let hot = thermal_snapshot(&tuned.array, &hot_model, &mut snap_rng)?;
    artifacts.add_text(
        format!("arrays/hot_{:.0}k.csv", e.hot_temp),
        write_conductance_csv(&hot.conductance_grid()),
    );
    for (bi, &v_b) in cfg.puf.biases.iter().enumerate() {
        let reference = &keys_by_bias[bi][..e.ber_packets];
        let mut trials = Vec::new();
        for t in 0..e.ber_trials {
            let idx = (bi * e.ber_trials + t) as u64;
            let mut rng = substream(seed, "read-hot", idx);
            let keys =
                respond_packets(cfg, &hot, ber_challenges, v_b, Some((&hot_model, &mut rng)))?;
            artifacts.add_text(
                format!("bits/ber_hot_trial{t}_{}.hex", bias_label(v_b)),
                hex_lines(&keys),
            );
            trials.push(keys);
        }
        let report = metrics::ber(reference, &trials)?;
        artifacts.add_json(format!("reports/ber_hot_{}.json", bias_label(v_b)), &report);
    }
    Ok(artifacts)
}

/// Pairwise uniqueness over labelled instances at each bias.
fn instance_matrices(
    cfg: &ExperimentConfig,
    artifacts: &mut ArtifactSet,
    kind: &str,
    keys: &[Vec<Vec<u64>>],
) -> Result<Vec<MetricsReport>> {
    let mut reports = Vec::new();
    for (bi, &v_b) in cfg.puf.biases.iter().enumerate() {
        let groups: Vec<(String, Vec<u64>)> = keys
            .iter()
            .enumerate()
            .map(|(i, by_bias)| (format!("{kind}_{i}"), by_bias[bi].clone()))
            .collect();
        let mut report = metrics::inter_bias_matrix(&groups)?;
        report.metric = format!("{kind}_instance_uniqueness");
        if let Some(m) = &report.pairwise {
            artifacts
                .add_text(format!("reports/{kind}_uq_{}.csv", bias_label(v_b)), m.to_csv());
        }
        artifacts.add_json(format!("reports/{kind}_uq_{}.json", bias_label(v_b)), &report);
        reports.push(report);
    }
    Ok(reports)
}

fn fig4(cfg: &ExperimentConfig) -> Result<ArtifactSet> {
    let seed = cfg.master_seed;
    let mut artifacts = ArtifactSet::new();
    let e = &cfg.experiment;
    let tuned = tuned_array(cfg, seed)?;
    artifacts.add_text("arrays/base.csv", write_conductance_csv(&tuned.array.conductance_grid()));

    let space = challenge_space(cfg)?;
    let challenges = sample_challenges(cfg, seed, "challenges", e.instance_packets * 64)?;
    artifacts.add_text("challenges.txt", challenges_text(&space, &challenges)?);

    // Retuned instances: reprogram the same array to fresh balanced
    // distributions.
    let mut retuned_keys = Vec::new();
    let mut retune_cost = Vec::new();
    let t = &cfg.tuning;
    for i in 0..e.retune_instances {
        let mut array = tuned.array.clone();
        let mut target_rng = substream(seed, "retune-targets", i as u64);
        let targets = generate_target_distribution(
            array.line_map(),
            t.mu_w,
            t.sigma_w,
            t.margin,
            cfg.device.g_min,
            cfg.device.g_max,
            &mut target_rng,
        )?;
        let mut tune_rng = substream(seed, "retune", i as u64);
        let report = program_array(&mut array, &targets, &t.policy(), &mut tune_rng)?;
        retune_cost.push(report.total_pulses);
        artifacts.add_text(
            format!("arrays/retuned_{i}.csv"),
            write_conductance_csv(&array.conductance_grid()),
        );
        let mut by_bias = Vec::new();
        for &v_b in &cfg.puf.biases {
            let keys = respond_packets(cfg, &array, &challenges, v_b, None)?;
            artifacts
                .add_text(format!("bits/retuned_{i}_{}.hex", bias_label(v_b)), hex_lines(&keys));
            by_bias.push(keys);
        }
        retuned_keys.push(by_bias);
    }
    instance_matrices(cfg, &mut artifacts, "retuned", &retuned_keys)?;

    // Rattled instances: successive sub-threshold redistributions of one
    // array.
    let mut rattled_keys = Vec::new();
    let mut array = tuned.array.clone();
    for j in 0..e.rattle_instances {
        let mut rng = substream(seed, "rattle", j as u64);
        let map = rattle_array(&mut array, e.rattle_max_fraction, e.rattle_width, &mut rng)?;
        artifacts.add_text(format!("arrays/rattled_{j}.csv"), write_conductance_csv(&map));
        let mut by_bias = Vec::new();
        for &v_b in &cfg.puf.biases {
            let keys = respond_packets(cfg, &array, &challenges, v_b, None)?;
            artifacts
                .add_text(format!("bits/rattled_{j}_{}.hex", bias_label(v_b)), hex_lines(&keys));
            by_bias.push(keys);
        }
        rattled_keys.push(by_bias);
    }
    instance_matrices(cfg, &mut artifacts, "rattled", &rattled_keys)?;

    // Programming-cost ledger: one pulse per device per rattle vs a full
    // write-verify pass per retune.
    #[derive(serde::Serialize)]
    struct Cost {
        rattle_pulses_per_instance: u64,
        retune_pulses_per_instance: Vec<u64>,
    }
    artifacts.add_json(
        "reports/reconfiguration_cost.json",
        &Cost {
            rattle_pulses_per_instance: tuned.array.device_count() as u64,
            retune_pulses_per_instance: retune_cost,
        },
    );
    Ok(artifacts)
}

/// Assemble the composed primitive from rattled snapshots of a tuned base
/// array.
pub fn build_nlrpuf(cfg: &ExperimentConfig) -> Result<NlrpufConfig> {
    let seed = cfg.master_seed;
    let e = &cfg.experiment;
    let tuned = tuned_array(cfg, seed)?;
    let spec = SegmentSpec {
        rows: challenge_space(cfg)?.row_pool,
        cols: challenge_space(cfg)?.col_pool,
        m: cfg.puf.m,
        n: cfg.puf.n,
        policy: cfg.puf.policy()?,
    };
    let mut array = tuned.array;
    let mut segment = |idx: u64| -> Result<Segment> {
        let mut rng = substream(seed, "segment-rattle", idx);
        rattle_array(&mut array, e.rattle_max_fraction, e.rattle_width, &mut rng)?;
        Ok(Segment { spec, array: array.clone() })
    };
    let input_segments: Vec<Segment> =
        (0..e.nlrpuf_l as u64).map(&mut segment).collect::<Result<_>>()?;
    let output_segment = segment(e.nlrpuf_l as u64)?;
    Ok(NlrpufConfig {
        input_segments,
        dummy_count: e.nlrpuf_dummies,
        output_segment,
        bias_code_bits: cfg.puf.bias_code_bits,
        v_lo: cfg.puf.v_lo,
        v_hi: cfg.puf.v_hi,
    })
}

fn fig5(cfg: &ExperimentConfig) -> Result<ArtifactSet> {
    let seed = cfg.master_seed;
    let mut artifacts = ArtifactSet::new();
    let e = &cfg.experiment;
    let nlrpuf = build_nlrpuf(cfg)?;
    for (i, seg) in nlrpuf.input_segments.iter().enumerate() {
        artifacts.add_text(
            format!("arrays/segment_in_{i}.csv"),
            write_conductance_csv(&seg.array.conductance_grid()),
        );
    }
    artifacts.add_text(
        "arrays/segment_out.csv",
        write_conductance_csv(&nlrpuf.output_segment.array.conductance_grid()),
    );

    // Exclusive random inputs over the composed input space; the same
    // inputs are reused at every bias point.
    let bits = e.nlrpuf_keys * 64;
    let space_count = puf::selection_space_count(&nlrpuf)?;
    let mut rank_rng = substream(seed, "nlrpuf-ranks", 0);
    let ranks = sample_distinct_ranks(&space_count, bits, &mut rank_rng);
    artifacts.add_text(
        "nlrpuf_ranks.txt",
        ranks.iter().map(|r| format!("{r}\n")).collect::<String>(),
    );
    let inputs: Vec<Vec<Challenge>> = ranks
        .iter()
        .map(|r| Ok(puf::segment_challenges_from_rank(&nlrpuf, r)?))
        .collect::<Result<_>>()?;

    let to_packets = |bits: &[bool]| -> Vec<u64> {
        let mut key = ResponseKey::new(1);
        bits.iter().for_each(|b| key.push_bit(*b));
        key.packets().expect("whole packets").to_vec()
    };

    // Single-bias key sets.
    let mut keys_by_bias = Vec::new();
    for &v_b in &cfg.puf.biases {
        let bits: Vec<bool> = inputs
            .iter()
            .map(|chs| Ok(puf::nlrpuf_respond_at(&nlrpuf, chs, v_b, None)?))
            .collect::<Result<_>>()?;
        let keys = to_packets(&bits);
        artifacts.add_text(format!("bits/nlrpuf_{}.hex", bias_label(v_b)), hex_lines(&keys));
        add_randomness_reports(&mut artifacts, "reports", &bias_label(v_b), &keys)?;
        keys_by_bias.push(keys);
    }
    let labelled: Vec<(String, Vec<u64>)> = cfg
        .puf
        .biases
        .iter()
        .zip(&keys_by_bias)
        .map(|(v, k)| (bias_label(*v), k.clone()))
        .collect();
    let inter = metrics::inter_bias_matrix(&labelled)?;
    if let Some(m) = &inter.pairwise {
        artifacts.add_text("reports/inter_bias_uniqueness.csv", m.to_csv());
    }
    artifacts.add_json("reports/inter_bias_uniqueness.json", &inter);

    // Multi-bias keys: a fresh bias code per evaluation.
    let mut code_rng = substream(seed, "bias-codes", 0);
    let codes: Vec<u32> =
        (0..bits).map(|_| code_rng.random_range(0..(1u32 << cfg.puf.bias_code_bits))).collect();
    artifacts.add_text(
        "bias_codes.txt",
        codes.iter().map(|c| format!("{c}\n")).collect::<String>(),
    );
    let mb_bits: Vec<bool> = inputs
        .iter()
        .zip(&codes)
        .map(|(chs, code)| Ok(puf::nlrpuf_respond(&nlrpuf, chs, *code, None)?))
        .collect::<Result<_>>()?;
    let multibias = to_packets(&mb_bits);
    artifacts.add_text("bits/nlrpuf_multibias.hex", hex_lines(&multibias));
    add_randomness_reports(&mut artifacts, "reports", "multibias", &multibias)?;

    // Uniqueness of the multi-bias keys against each single-bias key set.
    #[derive(serde::Serialize)]
    struct CodeUniqueness {
        bias_label: String,
        report: MetricsReport,
    }
    let code_uq: Vec<CodeUniqueness> = cfg
        .puf
        .biases
        .iter()
        .zip(&keys_by_bias)
        .map(|(v, keys)| {
            Ok(CodeUniqueness {
                bias_label: bias_label(*v),
                report: metrics::uniqueness(&multibias, keys)?,
            })
        })
        .collect::<Result<_>>()?;
    artifacts.add_json("reports/multibias_vs_single.json", &code_uq);

    // Quaternary keys combine the evaluations at the grid endpoints; with
    // the stock bias list those are the 200 mV and 600 mV key sets.
    let lo_idx = cfg.puf.biases.iter().position(|v| (*v - cfg.puf.v_lo).abs() < 1e-12);
    let hi_idx = cfg.puf.biases.iter().position(|v| (*v - cfg.puf.v_hi).abs() < 1e-12);
    if let (Some(lo), Some(hi)) = (lo_idx, hi_idx) {
        let mut key = ResponseKey::new(2);
        let lo_keys = ResponseKey::from_packets(keys_by_bias[lo].clone(), 1);
        let hi_keys = ResponseKey::from_packets(keys_by_bias[hi].clone(), 1);
        for i in 0..bits / 2 {
            let symbol = 2 * u8::from(hi_keys.bit(i)) + u8::from(lo_keys.bit(i));
            key.push_symbol(symbol);
        }
        let packets = key.packets()?.to_vec();
        artifacts.add_text("bits/nlrpuf_quaternary.hex", hex_lines(&packets));
        let mut quart = metrics::quaternary_metrics(&packets)?;
        quart.metric = "nlrpuf_quaternary_uniformity".to_string();
        artifacts.add_json("reports/quaternary.json", &quart);
        let df = metrics::diffuseness(&packets)?;
        artifacts.add_json("reports/diffuseness_quaternary.json", &df);
    }
    Ok(artifacts)
}
