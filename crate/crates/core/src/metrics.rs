//! Security metrics over 64-bit response packets.
//!
//! All metrics are percentages of the 64-bit packet length: uniformity is
//! the intra-packet Hamming weight, diffuseness the pairwise intra-instance
//! Hamming distance, bit-error rate the inter-trial Hamming distance for
//! identical challenges, and uniqueness the inter-instance Hamming distance
//! for identical challenges.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Packet length all percentages refer to.
pub const PACKET_BITS: u32 = 64;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("metric needs at least one key")]
    EmptyInput,
    #[error("metric needs at least two keys")]
    TooFewKeys,
    #[error("key sequences have different lengths: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("bias groups carry different key counts")]
    InconsistentKeyCounts,
}

/// Pairwise uniqueness summary between labelled key groups.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairwiseMatrix {
    pub labels: Vec<String>,
    pub mean_pct: Vec<Vec<f64>>,
    pub std_pct: Vec<Vec<f64>>,
}

impl PairwiseMatrix {
    /// Render as CSV with a label header row/column.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        out.push_str("label");
        for l in &self.labels {
            out.push(',');
            out.push_str(l);
        }
        out.push('\n');
        for (i, l) in self.labels.iter().enumerate() {
            out.push_str(l);
            for j in 0..self.labels.len() {
                out.push_str(&format!(",{:.6}", self.mean_pct[i][j]));
            }
            out.push('\n');
        }
        out
    }
}

/// Aggregated distribution summary of one metric.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub metric: String,
    pub mean_pct: f64,
    pub std_pct: f64,
    pub min_pct: f64,
    pub max_pct: f64,
    pub n: usize,
    /// Counts per 1%-wide bin, bin `i` covering `[i, i+1)` percent (the last
    /// bin holds exactly 100%).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub histogram: Option<Vec<u64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pairwise: Option<PairwiseMatrix>,
    /// Relative symbol frequencies for quaternary keys (percent).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub symbol_freq_pct: Option<Vec<f64>>,
}

impl MetricsReport {
    fn from_samples(metric: &str, samples: &[f64]) -> Result<Self, MetricsError> {
        if samples.is_empty() {
            return Err(MetricsError::EmptyInput);
        }
        let n = samples.len();
        let mean = samples.iter().sum::<f64>() / n as f64;
        let std = if n > 1 {
            (samples.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        let min = samples.iter().cloned().fold(f64::INFINITY, f64::min);
        let max = samples.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut histogram = vec![0u64; 101];
        for &s in samples {
            histogram[(s.floor() as usize).min(100)] += 1;
        }
        Ok(MetricsReport {
            metric: metric.to_string(),
            mean_pct: mean,
            std_pct: std,
            min_pct: min,
            max_pct: max,
            n,
            histogram: Some(histogram),
            pairwise: None,
            symbol_freq_pct: None,
        })
    }
}

fn hd_pct(a: u64, b: u64) -> f64 {
    (a ^ b).count_ones() as f64 * 100.0 / PACKET_BITS as f64
}

/// Uniformity: per-packet Hamming weight in percent.
pub fn uniformity(keys: &[u64]) -> Result<MetricsReport, MetricsError> {
    let samples: Vec<f64> =
        keys.iter().map(|k| k.count_ones() as f64 * 100.0 / PACKET_BITS as f64).collect();
    MetricsReport::from_samples("uniformity", &samples)
}

/// Diffuseness: Hamming distance over all key pairs of one instance.
pub fn diffuseness(keys: &[u64]) -> Result<MetricsReport, MetricsError> {
    if keys.len() < 2 {
        return Err(MetricsError::TooFewKeys);
    }
    let mut samples = Vec::with_capacity(keys.len() * (keys.len() - 1) / 2);
    for i in 0..keys.len() {
        for j in i + 1..keys.len() {
            samples.push(hd_pct(keys[i], keys[j]));
        }
    }
    MetricsReport::from_samples("diffuseness", &samples)
}

/// Bit-error rate: Hamming distance of each trial packet to its reference.
pub fn ber(reference: &[u64], trials: &[Vec<u64>]) -> Result<MetricsReport, MetricsError> {
    if reference.is_empty() || trials.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    let mut samples = Vec::with_capacity(reference.len() * trials.len());
    for trial in trials {
        if trial.len() != reference.len() {
            return Err(MetricsError::LengthMismatch(reference.len(), trial.len()));
        }
        for (r, t) in reference.iter().zip(trial) {
            samples.push(hd_pct(*r, *t));
        }
    }
    MetricsReport::from_samples("bit_error_rate", &samples)
}

/// Uniqueness: position-wise Hamming distance between two instances'
/// responses to the same challenge list.
pub fn uniqueness(keys_a: &[u64], keys_b: &[u64]) -> Result<MetricsReport, MetricsError> {
    if keys_a.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    if keys_a.len() != keys_b.len() {
        return Err(MetricsError::LengthMismatch(keys_a.len(), keys_b.len()));
    }
    let samples: Vec<f64> = keys_a.iter().zip(keys_b).map(|(a, b)| hd_pct(*a, *b)).collect();
    MetricsReport::from_samples("uniqueness", &samples)
}

/// Symmetric uniqueness matrix between keys generated at different biases
/// (or from different instances) for the same challenges.
pub fn inter_bias_matrix(
    groups: &[(String, Vec<u64>)],
) -> Result<MetricsReport, MetricsError> {
    if groups.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    let len = groups[0].1.len();
    if len == 0 {
        return Err(MetricsError::EmptyInput);
    }
    if groups.iter().any(|(_, keys)| keys.len() != len) {
        return Err(MetricsError::InconsistentKeyCounts);
    }
    let k = groups.len();
    let mut mean = vec![vec![0.0; k]; k];
    let mut std = vec![vec![0.0; k]; k];
    let mut pooled = Vec::new();
    for i in 0..k {
        for j in i + 1..k {
            let report = uniqueness(&groups[i].1, &groups[j].1)?;
            mean[i][j] = report.mean_pct;
            mean[j][i] = report.mean_pct;
            std[i][j] = report.std_pct;
            std[j][i] = report.std_pct;
            pooled.extend(groups[i].1.iter().zip(&groups[j].1).map(|(a, b)| hd_pct(*a, *b)));
        }
    }
    let mut report = if pooled.is_empty() {
        // Single group: a 1x1 zero matrix and a degenerate aggregate.
        MetricsReport::from_samples("inter_bias_uniqueness", &[0.0])?
    } else {
        MetricsReport::from_samples("inter_bias_uniqueness", &pooled)?
    };
    report.pairwise = Some(PairwiseMatrix {
        labels: groups.iter().map(|(l, _)| l.clone()).collect(),
        mean_pct: mean,
        std_pct: std,
    });
    Ok(report)
}

/// Metrics for quaternary keys: packets hold 32 two-bit symbols; uniformity
/// is computed on the binary expansion and a symbol-frequency table is
/// attached.
pub fn quaternary_metrics(keys: &[u64]) -> Result<MetricsReport, MetricsError> {
    let mut report = uniformity(keys)?;
    report.metric = "quaternary_uniformity".to_string();
    let mut counts = [0u64; 4];
    for key in keys {
        for s in 0..32 {
            let symbol = ((key >> (62 - 2 * s)) & 0b11) as usize;
            counts[symbol] += 1;
        }
    }
    let total = (keys.len() * 32) as f64;
    report.symbol_freq_pct = Some(counts.iter().map(|&c| c as f64 * 100.0 / total).collect());
    Ok(report)
}
