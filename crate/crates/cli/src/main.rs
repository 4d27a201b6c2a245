use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use nlpuf_cli::config::{load_config, ExperimentConfig};
use nlpuf_cli::experiments::{
    self, respond_packets, run_experiment, sample_challenges, tuned_array, ExperimentName,
};
use nlpuf_cli::manifest::{write_report, ArtifactSet};
use nlpuf_core::crossbar::{read_conductance_csv, write_conductance_csv};
use nlpuf_core::metrics;
use nlpuf_core::puf::ResponseKey;
use nlpuf_core::rng::substream;
use nlpuf_core::tuning::rattle_array;

/// Simulator and evaluation harness for nonlinear memristive-crossbar PUFs.
#[derive(Parser)]
#[command(name = "nlpuf", version, about)]
struct Cli {
    /// Experiment config file (TOML); defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed override.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample an as-fabricated array and write its conductance map.
    Fab,
    /// Fabricate, generate a balanced target distribution and program it.
    Tune,
    /// Apply successive rattling reconfigurations to a tuned array.
    Rattle {
        /// Number of successive rattles.
        #[arg(long, default_value_t = 1)]
        count: usize,
    },
    /// Generate response bits for exclusive random challenges.
    Respond {
        /// Evaluation bias (V).
        #[arg(long)]
        bias: f64,
        /// 64-bit packets to generate.
        #[arg(long, default_value_t = 10)]
        packets: usize,
        /// Conductance map to load instead of tuning (device parameters
        /// are re-sampled from the config seed).
        #[arg(long)]
        input_map: Option<PathBuf>,
    },
    /// Compute metrics over hex bitstream files.
    Metrics {
        /// uf | df | ber | uq | quaternary
        #[arg(long)]
        kind: String,
        /// Reference bitstream (ber).
        #[arg(long)]
        reference: Option<PathBuf>,
        /// Second instance bitstream (uq).
        #[arg(long)]
        other: Option<PathBuf>,
        /// Input bitstreams.
        bits: Vec<PathBuf>,
    },
    /// Build the composed two-layer primitive and emit its key sets.
    Nlrpuf {
        /// 64-bit keys per key set.
        #[arg(long)]
        keys: Option<usize>,
    },
    /// Run a stock experiment: fig3 | fig4 | fig5 | custom.
    Experiment { name: String },
}

fn read_packets(path: &Path) -> Result<Vec<u64>> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading {}", path.display()))?;
    Ok(ResponseKey::from_hex(&text, 1)?.packets()?.to_vec())
}

fn finish(artifacts: &ArtifactSet, out: &Path) -> Result<()> {
    let manifest = write_report(artifacts, out)?;
    println!("wrote {} files to {}", manifest.files.len(), out.display());
    Ok(())
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    let mut cfg = match &cli.config {
        Some(path) => load_config(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.master_seed = seed;
    }
    cfg.validate()?;
    let seed = cfg.master_seed;

    match cli.command {
        Command::Fab => {
            let array = experiments::fabricate(&cfg, seed)?;
            let mut artifacts = ArtifactSet::new();
            artifacts
                .add_text("arrays/initial.csv", write_conductance_csv(&array.conductance_grid()));
            finish(&artifacts, &cli.out)?;
        }
        Command::Tune => {
            let tuned = tuned_array(&cfg, seed)?;
            let mut artifacts = ArtifactSet::new();
            artifacts.add_text("arrays/initial.csv", write_conductance_csv(&tuned.initial));
            artifacts
                .add_text("arrays/targets.csv", write_conductance_csv(&tuned.targets.targets));
            artifacts.add_text(
                "arrays/tuned.csv",
                write_conductance_csv(&tuned.array.conductance_grid()),
            );
            artifacts.add_json("reports/tuning_report.json", &tuned.report);
            println!(
                "programmed {} devices with {} pulses ({} failures)",
                tuned.array.device_count(),
                tuned.report.total_pulses,
                tuned.report.failures.len()
            );
            finish(&artifacts, &cli.out)?;
        }
        Command::Rattle { count } => {
            let tuned = tuned_array(&cfg, seed)?;
            let mut array = tuned.array;
            let mut artifacts = ArtifactSet::new();
            artifacts.add_text("arrays/base.csv", write_conductance_csv(&array.conductance_grid()));
            let e = &cfg.experiment;
            for i in 0..count {
                let mut rng = substream(seed, "rattle", i as u64);
                let map =
                    rattle_array(&mut array, e.rattle_max_fraction, e.rattle_width, &mut rng)?;
                artifacts.add_text(format!("arrays/rattled_{i}.csv"), write_conductance_csv(&map));
            }
            finish(&artifacts, &cli.out)?;
        }
        Command::Respond { bias, packets, input_map } => {
            let array = match &input_map {
                Some(path) => {
                    let text = std::fs::read_to_string(path)
                        .with_context(|| format!("reading {}", path.display()))?;
                    let grid = read_conductance_csv(&text)?;
                    let mut array = experiments::fabricate(&cfg, seed)?;
                    array.set_conductances(&grid)?;
                    array
                }
                None => tuned_array(&cfg, seed)?.array,
            };
            let space = experiments::challenge_space(&cfg)?;
            let challenges = sample_challenges(&cfg, seed, "cli-respond", packets * 64)?;
            let keys = respond_packets(&cfg, &array, &challenges, bias, None)?;
            let mut artifacts = ArtifactSet::new();
            let mut text = String::new();
            for ch in &challenges {
                text.push_str(&space.to_line(ch)?);
                text.push('\n');
            }
            artifacts.add_text("challenges.txt", text);
            artifacts.add_text(
                "bits/response.hex",
                ResponseKey::from_packets(keys.clone(), 1).to_hex()?,
            );
            let uf = metrics::uniformity(&keys)?;
            println!("uniformity {:.2}% over {} packets at {:.0} mV", uf.mean_pct, packets, bias * 1e3);
            artifacts.add_json("reports/uniformity.json", &uf);
            finish(&artifacts, &cli.out)?;
        }
        Command::Metrics { kind, reference, other, bits } => {
            if bits.is_empty() {
                bail!("need at least one bitstream file");
            }
            let first = read_packets(&bits[0])?;
            let report = match kind.as_str() {
                "uf" => metrics::uniformity(&first)?,
                "df" => metrics::diffuseness(&first)?,
                "quaternary" => metrics::quaternary_metrics(&first)?,
                "uq" => {
                    let other = other.ok_or_else(|| anyhow::anyhow!("uq needs --other"))?;
                    metrics::uniqueness(&first, &read_packets(&other)?)?
                }
                "ber" => {
                    let reference =
                        reference.ok_or_else(|| anyhow::anyhow!("ber needs --reference"))?;
                    let trials: Vec<Vec<u64>> =
                        bits.iter().map(|p| read_packets(p)).collect::<Result<_>>()?;
                    metrics::ber(&read_packets(reference.as_path())?, &trials)?
                }
                other => bail!("unknown metric kind `{other}`"),
            };
            println!("{}", serde_json::to_string_pretty(&report)?);
        }
        Command::Nlrpuf { keys } => {
            if let Some(keys) = keys {
                cfg.experiment.nlrpuf_keys = keys;
            }
            let artifacts = run_experiment(&cfg, ExperimentName::Fig5)?;
            finish(&artifacts, &cli.out)?;
        }
        Command::Experiment { name } => {
            let name: ExperimentName = name.parse()?;
            let artifacts = run_experiment(&cfg, name)?;
            let dir = cli.out.join(name.to_string());
            finish(&artifacts, &dir)?;
        }
    }
    Ok(())
}
