//! Two-layer composed primitive: input segments build a hidden challenge
//! that addresses an output segment, so the externally visible transfer
//! function is the composition of the two layers.

use num_bigint::BigUint;

use super::{
    bias_from_code, respond_bit, Challenge, ChallengeSpace, FreeLinePolicy, PufError, ReadEnv,
};
use crate::crossbar::CrossbarArray;

/// Geometry of one segment array and its selection scheme.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SegmentSpec {
    pub rows: usize,
    pub cols: usize,
    /// Driven columns per challenge.
    pub m: usize,
    /// Sensed rows per challenge (even).
    pub n: usize,
    pub policy: FreeLinePolicy,
}

impl SegmentSpec {
    pub fn space(&self) -> Result<ChallengeSpace, PufError> {
        ChallengeSpace::new(self.cols, self.rows, self.m, self.n, self.policy)
    }
}

/// A segment: its selection geometry plus the state snapshot it runs on.
#[derive(Debug, Clone)]
pub struct Segment {
    pub spec: SegmentSpec,
    pub array: CrossbarArray,
}

impl Segment {
    fn validate(&self, what: &str) -> Result<(), PufError> {
        let space = self.spec.space()?;
        let map = self.array.line_map();
        if map.row_pool().len() != self.spec.rows || map.col_pool().len() != self.spec.cols {
            return Err(PufError::InvalidNlrpuf(format!(
                "{what}: array is {}x{} lines but the spec says {}x{}",
                map.row_pool().len(),
                map.col_pool().len(),
                self.spec.rows,
                self.spec.cols
            )));
        }
        let _ = space;
        Ok(())
    }
}

/// Configuration of the composed primitive.
///
/// `l` input segments each contribute one hidden-challenge bit; dummy
/// evaluations are run and discarded (they only scramble the power profile,
/// which is not modelled further); the hidden challenge is unranked into the
/// output segment's challenge space.
#[derive(Debug, Clone)]
pub struct NlrpufConfig {
    pub input_segments: Vec<Segment>,
    pub dummy_count: usize,
    pub output_segment: Segment,
    /// Bias-code width `k`; 0 disables bias encoding.
    pub bias_code_bits: u32,
    /// Bias grid endpoints (V).
    pub v_lo: f64,
    pub v_hi: f64,
}

impl NlrpufConfig {
    /// Hidden-challenge width.
    pub fn l(&self) -> usize {
        self.input_segments.len()
    }

    pub fn validate(&self) -> Result<(), PufError> {
        if self.input_segments.is_empty() {
            return Err(PufError::InvalidNlrpuf("need at least one input segment".into()));
        }
        if self.l() > 64 {
            return Err(PufError::InvalidNlrpuf("hidden challenge wider than 64 bits".into()));
        }
        for (i, seg) in self.input_segments.iter().enumerate() {
            seg.validate(&format!("input segment {i}"))?;
        }
        self.output_segment.validate("output segment")?;
        if self.bias_code_bits > 16 {
            return Err(PufError::InvalidNlrpuf("bias code wider than 16 bits".into()));
        }
        if !(self.v_lo.is_finite() && self.v_hi.is_finite() && self.v_lo < self.v_hi) {
            return Err(PufError::InvalidNlrpuf("need v_lo < v_hi".into()));
        }
        Ok(())
    }
}

/// Evaluate the input layer: bit `j` of the hidden challenge is segment
/// `j`'s response to its challenge. Dummy segment evaluations reuse the
/// input segments round-robin and are discarded.
pub fn hidden_challenge(
    config: &NlrpufConfig,
    segment_challenges: &[Challenge],
    v_b: f64,
    mut env: Option<ReadEnv<'_>>,
) -> Result<u64, PufError> {
    config.validate()?;
    if segment_challenges.len() != config.l() {
        return Err(PufError::InvalidNlrpuf(format!(
            "expected one challenge per input segment ({}), got {}",
            config.l(),
            segment_challenges.len()
        )));
    }
    let mut hc = 0u64;
    for (j, (seg, ch)) in config.input_segments.iter().zip(segment_challenges).enumerate() {
        let bit = respond_bit(&seg.array, ch, v_b, env.as_mut().map(|e| e.reborrow()))?;
        if bit {
            hc |= 1 << j;
        }
    }
    for d in 0..config.dummy_count {
        let j = d % config.l();
        let seg = &config.input_segments[j];
        let _ = respond_bit(
            &seg.array,
            &segment_challenges[j],
            v_b,
            env.as_mut().map(|e| e.reborrow()),
        )?;
    }
    Ok(hc)
}

/// Deterministic hidden-challenge-to-selection rule: the hidden challenge
/// indexes an evenly strided subset of the output segment's challenge
/// space, `rank = hc * floor(count / 2^l)`, so the 2^l reachable output
/// challenges differ in their selected lines rather than clustering in the
/// low ranks (which share one selection and vary only in ground maps).
pub fn hc_to_selection(config: &NlrpufConfig, hc: u64) -> Result<Challenge, PufError> {
    let space = config.output_segment.spec.space()?;
    let count = space.count()?;
    let hc_span = BigUint::from(1u64) << config.l();
    if count < hc_span {
        return Err(PufError::InvalidNlrpuf(format!(
            "output space of {count} cannot address a {}-bit hidden challenge",
            config.l()
        )));
    }
    let stride = count / hc_span;
    space.challenge_from_rank(&(BigUint::from(hc) * stride))
}

/// Composed response at an explicit evaluation bias (both layers see the
/// same bias).
pub fn nlrpuf_respond_at(
    config: &NlrpufConfig,
    segment_challenges: &[Challenge],
    v_b: f64,
    mut env: Option<ReadEnv<'_>>,
) -> Result<bool, PufError> {
    let hc = hidden_challenge(config, segment_challenges, v_b, env.as_mut().map(|e| e.reborrow()))?;
    let out_challenge = hc_to_selection(config, hc)?;
    respond_bit(&config.output_segment.array, &out_challenge, v_b, env)
}

/// Composed response with the bias point selected by a k-bit code.
pub fn nlrpuf_respond(
    config: &NlrpufConfig,
    segment_challenges: &[Challenge],
    bias_code: u32,
    env: Option<ReadEnv<'_>>,
) -> Result<bool, PufError> {
    let v_b = bias_from_code(bias_code, config.bias_code_bits, config.v_lo, config.v_hi)?;
    nlrpuf_respond_at(config, segment_challenges, v_b, env)
}

/// Quaternary composed response: `2 * bit(v_hi) + bit(v_lo)`.
pub fn nlrpuf_quaternary(
    config: &NlrpufConfig,
    segment_challenges: &[Challenge],
    mut env: Option<ReadEnv<'_>>,
) -> Result<u8, PufError> {
    let b_lin =
        nlrpuf_respond_at(config, segment_challenges, config.v_lo, env.as_mut().map(|e| e.reborrow()))?;
    let b_nl = nlrpuf_respond_at(config, segment_challenges, config.v_hi, env)?;
    Ok(2 * u8::from(b_nl) + u8::from(b_lin))
}

/// Nominal input space: product over input segments of
/// `C(rows, n) * C(cols, m)`, times `2^k` when bias encoding is on.
pub fn nlrpuf_input_space(config: &NlrpufConfig) -> Result<BigUint, PufError> {
    config.validate()?;
    let mut total = selection_space_count(config)?;
    if config.bias_code_bits > 0 {
        total <<= config.bias_code_bits as usize;
    }
    Ok(total)
}

/// Input space without the bias-code factor: the number of distinct
/// input-layer selection tuples.
pub fn selection_space_count(config: &NlrpufConfig) -> Result<BigUint, PufError> {
    let mut total = BigUint::from(1u32);
    for seg in &config.input_segments {
        total *= seg.spec.space()?.count()?;
    }
    Ok(total)
}

/// Unrank a composite input-space rank into one challenge per input
/// segment (mixed radix over the segment spaces).
pub fn segment_challenges_from_rank(
    config: &NlrpufConfig,
    rank: &BigUint,
) -> Result<Vec<Challenge>, PufError> {
    if *rank >= selection_space_count(config)? {
        return Err(PufError::RankOutOfRange);
    }
    let mut rest = rank.clone();
    let mut challenges = Vec::with_capacity(config.l());
    for seg in &config.input_segments {
        let space = seg.spec.space()?;
        let count = space.count()?;
        let seg_rank = &rest % &count;
        rest /= &count;
        challenges.push(space.challenge_from_rank(&seg_rank)?);
    }
    Ok(challenges)
}
