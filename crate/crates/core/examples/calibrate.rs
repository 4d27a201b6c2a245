//! Calibration sweep for the default model constants.
//!
//! Prints the statistics the stock experiments are judged by (uniformity,
//! diffuseness, inter-bias uniqueness, reconfiguration uniqueness and
//! bit-error rates) so that model defaults can be chosen with evidence.
//!
//! Run with `cargo run --release -p nlpuf-core --example calibrate`.

use num_bigint::BigUint;
use rand::Rng;

use nlpuf_core::crossbar::CrossbarArray;
use nlpuf_core::device::ProcessVariation;
use nlpuf_core::environment::{age_array, thermal_snapshot, PerturbationModel};
use nlpuf_core::metrics;
use nlpuf_core::puf::{
    respond_key, Challenge, ChallengeSpace, FreeLinePolicy, ReadEnv,
};
use nlpuf_core::rng::substream;
use nlpuf_core::tuning::{generate_target_distribution, program_array, rattle_array, TuningPolicy};

const BIASES: [f64; 3] = [0.2, 0.4, 0.6];

fn tuned_array(seed: u64, process: &ProcessVariation) -> CrossbarArray {
    let mut fab = substream(seed, "fab", 0);
    let mut array = CrossbarArray::sample(1, 10, 10, false, process, &mut fab).unwrap();
    let mut target_rng = substream(seed, "targets", 0);
    let dist = generate_target_distribution(
        array.line_map(),
        20e-6,
        6e-6,
        0.02,
        process.nominal.g_min,
        process.nominal.g_max,
        &mut target_rng,
    )
    .unwrap();
    let mut tune = substream(seed, "tune", 0);
    let report = program_array(&mut array, &dist, &TuningPolicy::default(), &mut tune).unwrap();
    assert!(report.failures.is_empty());
    array
}

fn challenge_list(seed: u64, count: usize) -> Vec<Challenge> {
    let space = ChallengeSpace::new(10, 10, 5, 2, FreeLinePolicy::Configurable).unwrap();
    let total = 92_897_280u64;
    let mut rng = substream(seed, "challenges", 0);
    let mut seen = std::collections::HashSet::new();
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let rank = rng.random_range(0..total);
        if seen.insert(rank) {
            out.push(space.challenge_from_rank(&BigUint::from(rank)).unwrap());
        }
    }
    out
}

fn packets(array: &CrossbarArray, challenges: &[Challenge], v_b: f64) -> Vec<u64> {
    respond_key(array, challenges, v_b, None).unwrap().packets().unwrap().to_vec()
}

fn packets_env(
    array: &CrossbarArray,
    challenges: &[Challenge],
    v_b: f64,
    model: &PerturbationModel,
    seed: u64,
    idx: u64,
) -> Vec<u64> {
    let mut rng = substream(seed, "read", idx);
    respond_key(array, challenges, v_b, Some(ReadEnv { model, rng: &mut rng }))
        .unwrap()
        .packets()
        .unwrap()
        .to_vec()
}

fn arg(name: &str, default: f64) -> f64 {
    std::env::var(name).ok().and_then(|s| s.parse().ok()).unwrap_or(default)
}

fn main() {
    let packets_per_bias: usize = std::env::args()
        .nth(1)
        .and_then(|s| s.parse().ok())
        .unwrap_or(100);
    let seeds: u64 = std::env::args().nth(2).and_then(|s| s.parse().ok()).unwrap_or(3);
    let bits = packets_per_bias * 64;
    let mut process = ProcessVariation::default();
    process.nominal.b_nl = arg("B_NL", process.nominal.b_nl);
    process.nominal.kappa = arg("KAPPA", process.nominal.kappa);
    process.nominal.sigma_nl = arg("SIGMA_NL", process.nominal.sigma_nl);
    process.nominal.nl_reroll = arg("NL_REROLL", process.nominal.nl_reroll);
    process.sigma_ln_b = arg("SIGMA_LN_B", process.sigma_ln_b);
    println!(
        "model: b_nl {} kappa {} sigma_nl {} sigma_ln_b {}",
        process.nominal.b_nl, process.nominal.kappa, process.nominal.sigma_nl, process.sigma_ln_b
    );

    for seed in 0..seeds {
        println!("== seed {seed} ({bits} bits/bias) ==");
        let base = tuned_array(seed, &process);
        let challenges = challenge_list(seed, bits);

        // Uniformity / diffuseness / inter-bias uniqueness on the base array.
        let mut by_bias = Vec::new();
        for v in BIASES {
            let keys = packets(&base, &challenges, v);
            let uf = metrics::uniformity(&keys).unwrap();
            let df = metrics::diffuseness(&keys).unwrap();
            println!(
                "  {:3.0} mV: UF {:5.2} +/- {:4.2}  DF {:5.2} +/- {:4.2}",
                v * 1e3,
                uf.mean_pct,
                uf.std_pct,
                df.mean_pct,
                df.std_pct
            );
            by_bias.push((format!("{:.0}", v * 1e3), keys));
        }
        let matrix = metrics::inter_bias_matrix(&by_bias).unwrap();
        let m = matrix.pairwise.unwrap();
        println!(
            "  inter-bias UQ: 200v400 {:5.2}  400v600 {:5.2}  200v600 {:5.2}",
            m.mean_pct[0][1], m.mean_pct[1][2], m.mean_pct[0][2]
        );

        // Retuned instances.
        let mut retuned_keys: Vec<Vec<Vec<u64>>> = Vec::new(); // [instance][bias]
        for inst in 0..(arg("RETUNE_N", 3.0) as u64) {
            let mut array = base.clone();
            let mut target_rng = substream(seed, "retune-targets", inst + 1);
            let dist = generate_target_distribution(
                array.line_map(),
                20e-6,
                6e-6,
                0.02,
                1e-6,
                200e-6,
                &mut target_rng,
            )
            .unwrap();
            let mut tune = substream(seed, "retune", inst + 1);
            program_array(&mut array, &dist, &TuningPolicy::default(), &mut tune).unwrap();
            retuned_keys.push(BIASES.iter().map(|v| packets(&array, &challenges, *v)).collect());
        }
        for (bi, v) in BIASES.iter().enumerate() {
            let mut uq = Vec::new();
            for i in 0..retuned_keys.len() {
                for j in i + 1..retuned_keys.len() {
                    uq.push(
                        metrics::uniqueness(&retuned_keys[i][bi], &retuned_keys[j][bi])
                            .unwrap()
                            .mean_pct,
                    );
                }
            }
            let mean = uq.iter().sum::<f64>() / uq.len() as f64;
            print!("  retuned UQ @{:.0}mV {:5.2}", v * 1e3, mean);
        }
        println!();

        // Rattled instances (successive rattles of the tuned base).
        let mut rattled_keys: Vec<Vec<Vec<u64>>> = Vec::new();
        {
            let mut array = base.clone();
            let mut rng = substream(seed, "rattle", 0);
            for _inst in 0..(arg("RATTLE_N", 4.0) as usize) {
                rattle_array(&mut array, 0.7, 10e-6, &mut rng).unwrap();
                rattled_keys
                    .push(BIASES.iter().map(|v| packets(&array, &challenges, *v)).collect());
            }
        }
        for (bi, v) in BIASES.iter().enumerate() {
            let mut uq = Vec::new();
            for i in 0..rattled_keys.len() {
                for j in i + 1..rattled_keys.len() {
                    uq.push(
                        metrics::uniqueness(&rattled_keys[i][bi], &rattled_keys[j][bi])
                            .unwrap()
                            .mean_pct,
                    );
                }
            }
            let mean = uq.iter().sum::<f64>() / uq.len() as f64;
            print!("  rattled UQ @{:.0}mV {:5.2}", v * 1e3, mean);
        }
        println!();

        // BER: aging chain + supply/noise at room temperature.
        let model = PerturbationModel {
            sigma_read: arg("SIGMA_READ", 0.01),
            drift_sigma_per_day: arg("DRIFT", 0.005),
            ..PerturbationModel::default()
        };
        let mut ber_chain = Vec::new();
        {
            let mut aged = base.clone();
            let mut stages = Vec::new();
            for k in 0..3u64 {
                let mut rng = substream(seed, "age", k);
                aged = age_array(&aged, &model, 10.0, &mut rng).unwrap();
                stages.push(aged.clone());
            }
            for (bi, v) in BIASES.iter().enumerate() {
                let reference = &by_bias[bi].1;
                let trials: Vec<Vec<u64>> = stages
                    .iter()
                    .enumerate()
                    .map(|(k, a)| packets_env(a, &challenges, *v, &model, seed, (bi * 8 + k) as u64))
                    .collect();
                let report = metrics::ber(reference, &trials).unwrap();
                ber_chain.push(report.mean_pct);
                print!("  BER(age+supply) @{:.0}mV {:5.2}", v * 1e3, report.mean_pct);
            }
            println!();
        }

        // BER at 90 C.
        let hot_model = PerturbationModel {
            temp: 363.15,
            sigma_read: arg("SIGMA_READ", 0.01),
            drift_sigma_per_day: arg("DRIFT", 0.005),
            ..PerturbationModel::default()
        };
        let mut snap_rng = substream(seed, "thermal", 0);
        let hot = thermal_snapshot(&base, &hot_model, &mut snap_rng).unwrap();
        for (bi, v) in BIASES.iter().enumerate() {
            let reference = &by_bias[bi].1;
            let trials: Vec<Vec<u64>> = (0..3u64)
                .map(|k| packets_env(&hot, &challenges, *v, &hot_model, seed, 100 + bi as u64 * 8 + k))
                .collect();
            let report = metrics::ber(reference, &trials).unwrap();
            print!("  BER(90C) @{:.0}mV {:5.2}", v * 1e3, report.mean_pct);
        }
        println!();
        let _ = ber_chain;
    }
}
