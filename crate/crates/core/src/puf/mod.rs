//! Challenge encoding, response generation and CRP-space accounting.
//!
//! A challenge drives `m` columns at the evaluation bias, senses `n`
//! virtually grounded rows split into two half groups, and fixes every
//! unselected line to floating or grounded. The response bit is the sign of
//! the current differential between the two row groups.

pub mod combin;
mod nlrpuf;

pub use combin::{binomial, subset_rank, subset_unrank};
pub use nlrpuf::{
    hc_to_selection, hidden_challenge, nlrpuf_input_space, nlrpuf_quaternary, nlrpuf_respond,
    nlrpuf_respond_at, segment_challenges_from_rank, selection_space_count, NlrpufConfig, Segment,
    SegmentSpec,
};

use std::collections::BTreeSet;
use std::fmt;

use num_bigint::BigUint;
use thiserror::Error;

use crate::crossbar::{
    group_current, solve_network, BiasConfig, CrossbarArray, Line, LineRole, SolveResult,
    SolverError, SolverOptions,
};
use crate::environment::PerturbationModel;
use crate::rng::Stream;

/// Bias used for the "linear" half of a quaternary response (V).
pub const V_LINEAR: f64 = 0.2;
/// Bias used for the "nonlinear" half of a quaternary response (V).
pub const V_NONLINEAR: f64 = 0.6;

#[derive(Debug, Error, PartialEq)]
pub enum PufError {
    #[error("invalid challenge: {0}")]
    InvalidChallenge(String),
    #[error("rank out of range for this challenge space")]
    RankOutOfRange,
    #[error("challenge is not in canonical form: {0}")]
    NonCanonical(String),
    #[error("bias code {code} does not fit in {bits} bits")]
    BiasCodeOutOfRange { code: u32, bits: u32 },
    #[error("invalid challenge space: {0}")]
    InvalidSpace(String),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error("key holds {0} bits, not a whole number of 64-bit packets")]
    PartialPacket(usize),
    #[error("cannot parse challenge: {0}")]
    Parse(String),
    #[error("invalid NL-RPUF configuration: {0}")]
    InvalidNlrpuf(String),
}

/// Whether the challenge's driven pool maps to physical columns (the
/// default) or rows. The alternative orientation mirrors array conventions
/// in which rows are driven and columns are sensed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Orientation {
    #[default]
    ColumnsDriven,
    RowsDriven,
}

/// Treatment of the unselected lines.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FreeLinePolicy {
    /// All unselected lines float; the challenge space has no free-line bits.
    AllFloating,
    /// Every unselected line is independently floating or grounded.
    Configurable,
}

/// Per-line fate of the unselected lines of one challenge.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub enum UnselectedMap {
    #[default]
    AllFloating,
    /// Grounded unselected lines; everything else floats.
    Explicit { grounded_cols: BTreeSet<usize>, grounded_rows: BTreeSet<usize> },
}

/// One challenge: the selected line subsets, the half-group split, the
/// unselected-line map and an optional bias code.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Challenge {
    /// Driven lines (indices into the driven pool), strictly increasing.
    pub cols: Vec<usize>,
    /// Sensed lines (indices into the sense pool), strictly increasing.
    pub rows: Vec<usize>,
    /// Half of `rows` whose current sum forms the positive side.
    pub group_a: Vec<usize>,
    pub unselected: UnselectedMap,
    pub bias_code: Option<u32>,
}

impl Challenge {
    /// Rows not in `group_a`.
    pub fn group_b(&self) -> Vec<usize> {
        self.rows.iter().copied().filter(|r| !self.group_a.contains(r)).collect()
    }

    /// The same challenge with the two half groups exchanged.
    pub fn swapped_groups(&self) -> Challenge {
        Challenge { group_a: self.group_b(), ..self.clone() }
    }
}

/// Dimensions and policy of one challenge space.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ChallengeSpace {
    /// Lines available to drive.
    pub col_pool: usize,
    /// Lines available to sense.
    pub row_pool: usize,
    /// Driven lines per challenge.
    pub m: usize,
    /// Sensed lines per challenge (even; split into two half groups).
    pub n: usize,
    pub policy: FreeLinePolicy,
}

/// Maximum number of challenge-response pairs:
/// `C(M, m) * C(N, n) * 2^free_lines`, where the free lines are the
/// unselected lines that can be independently grounded or left floating.
pub fn crp_count(
    m_pool: usize,
    n_pool: usize,
    m: usize,
    n: usize,
    free_lines: usize,
) -> Result<BigUint, PufError> {
    if m > m_pool {
        return Err(PufError::InvalidSpace(format!("m = {m} exceeds pool {m_pool}")));
    }
    if n == 0 || n > n_pool {
        return Err(PufError::InvalidSpace(format!("n = {n} invalid for pool {n_pool}")));
    }
    if !n.is_multiple_of(2) {
        return Err(PufError::InvalidSpace(format!("n = {n} must be even")));
    }
    Ok((binomial(m_pool, m) * binomial(n_pool, n)) << free_lines)
}

impl ChallengeSpace {
    pub fn new(
        col_pool: usize,
        row_pool: usize,
        m: usize,
        n: usize,
        policy: FreeLinePolicy,
    ) -> Result<Self, PufError> {
        let space = ChallengeSpace { col_pool, row_pool, m, n, policy };
        space.count()?;
        if m == 0 {
            return Err(PufError::InvalidSpace("m must be at least 1".into()));
        }
        Ok(space)
    }

    /// Challenge space sized for an array under the given orientation.
    pub fn for_array(
        array: &CrossbarArray,
        m: usize,
        n: usize,
        policy: FreeLinePolicy,
        orientation: Orientation,
    ) -> Result<Self, PufError> {
        let map = array.line_map();
        let (cols, rows) = match orientation {
            Orientation::ColumnsDriven => (map.col_pool().len(), map.row_pool().len()),
            Orientation::RowsDriven => (map.row_pool().len(), map.col_pool().len()),
        };
        Self::new(cols, rows, m, n, policy)
    }

    pub fn free_lines(&self) -> usize {
        match self.policy {
            FreeLinePolicy::AllFloating => 0,
            FreeLinePolicy::Configurable => (self.col_pool - self.m) + (self.row_pool - self.n),
        }
    }

    /// Exact number of distinct challenges.
    pub fn count(&self) -> Result<BigUint, PufError> {
        crp_count(self.col_pool, self.row_pool, self.m, self.n, self.free_lines())
    }

    /// Unselected lines in the canonical enumeration order (columns
    /// ascending, then rows ascending) used for the free-line bits and the
    /// `un=` field of the text form.
    fn unselected_order(&self, ch: &Challenge) -> (Vec<usize>, Vec<usize>) {
        let cols = (0..self.col_pool).filter(|c| !ch.cols.contains(c)).collect();
        let rows = (0..self.row_pool).filter(|r| !ch.rows.contains(r)).collect();
        (cols, rows)
    }

    /// Which half of the sorted row subset acts as group A. Derived from a
    /// hash parity of the selection so that, over any large challenge
    /// sample, each row of a pair leads group A equally often; persistent
    /// spatial structure then cancels out of the uniformity statistics
    /// instead of biasing them.
    pub fn canonical_group_a(&self, cols: &[usize], rows: &[usize]) -> Vec<usize> {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for &x in cols.iter().chain(rows) {
            h = (h ^ x as u64).wrapping_mul(0x0000_0100_0000_01B3);
        }
        if h & 1 == 0 {
            rows[..self.n / 2].to_vec()
        } else {
            rows[self.n / 2..].to_vec()
        }
    }

    /// Decode a rank into a challenge. Rank order is columns-major: the
    /// column subset, then the row subset, then the free-line bits (ground
    /// maps); rank 0 is the lexicographically smallest selection with every
    /// unselected line floating. `group_a` is the canonical half-subset for
    /// the selection, which keeps the map a bijection over the CRP count.
    pub fn challenge_from_rank(&self, rank: &BigUint) -> Result<Challenge, PufError> {
        if *rank >= self.count()? {
            return Err(PufError::RankOutOfRange);
        }
        let free = self.free_lines();
        let free_bits = rank % (BigUint::from(1u32) << free);
        let rest = rank >> free;
        let row_count = binomial(self.row_pool, self.n);
        let row_rank = &rest % &row_count;
        let col_rank = &rest / &row_count;
        let cols = subset_unrank(self.col_pool, self.m, &col_rank);
        let rows = subset_unrank(self.row_pool, self.n, &row_rank);
        let group_a = self.canonical_group_a(&cols, &rows);

        let mut challenge =
            Challenge { cols, rows, group_a, unselected: UnselectedMap::AllFloating, bias_code: None };
        if free > 0 {
            let (un_cols, un_rows) = self.unselected_order(&challenge);
            let mut grounded_cols = BTreeSet::new();
            let mut grounded_rows = BTreeSet::new();
            let one = BigUint::from(1u32);
            for (p, line) in un_cols.iter().chain(un_rows.iter()).enumerate() {
                let bit = (&free_bits >> (free - 1 - p)) & &one;
                if bit == one {
                    if p < un_cols.len() {
                        grounded_cols.insert(*line);
                    } else {
                        grounded_rows.insert(*line);
                    }
                }
            }
            challenge.unselected = UnselectedMap::Explicit { grounded_cols, grounded_rows };
        }
        Ok(challenge)
    }

    /// Inverse of [`ChallengeSpace::challenge_from_rank`].
    pub fn rank_from_challenge(&self, ch: &Challenge) -> Result<BigUint, PufError> {
        self.validate(ch)?;
        if ch.group_a != self.canonical_group_a(&ch.cols, &ch.rows) {
            return Err(PufError::NonCanonical(
                "group_a is not the canonical half of the row subset".into(),
            ));
        }
        let free = self.free_lines();
        let mut free_bits = BigUint::from(0u32);
        match (&ch.unselected, self.policy) {
            (UnselectedMap::AllFloating, _) => {}
            (UnselectedMap::Explicit { grounded_cols, grounded_rows }, FreeLinePolicy::Configurable) => {
                let (un_cols, un_rows) = self.unselected_order(ch);
                for (p, line) in un_cols.iter().enumerate() {
                    if grounded_cols.contains(line) {
                        free_bits |= BigUint::from(1u32) << (free - 1 - p);
                    }
                }
                for (p, line) in un_rows.iter().enumerate() {
                    if grounded_rows.contains(line) {
                        free_bits |= BigUint::from(1u32) << (free - 1 - (un_cols.len() + p));
                    }
                }
            }
            (UnselectedMap::Explicit { grounded_cols, grounded_rows }, FreeLinePolicy::AllFloating) => {
                if !grounded_cols.is_empty() || !grounded_rows.is_empty() {
                    return Err(PufError::NonCanonical(
                        "grounded lines under an all-floating policy".into(),
                    ));
                }
            }
        }
        let col_rank = subset_rank(self.col_pool, &ch.cols);
        let row_rank = subset_rank(self.row_pool, &ch.rows);
        let row_count = binomial(self.row_pool, self.n);
        Ok(((col_rank * row_count + row_rank) << free) + free_bits)
    }

    /// Structural validity of a challenge against this space.
    pub fn validate(&self, ch: &Challenge) -> Result<(), PufError> {
        let err = |msg: String| Err(PufError::InvalidChallenge(msg));
        if ch.cols.len() != self.m {
            return err(format!("expected {} driven lines, got {}", self.m, ch.cols.len()));
        }
        if ch.rows.len() != self.n {
            return err(format!("expected {} sensed lines, got {}", self.n, ch.rows.len()));
        }
        if !ch.cols.windows(2).all(|w| w[0] < w[1]) || ch.cols.iter().any(|&c| c >= self.col_pool) {
            return err("driven lines must be strictly increasing and in range".into());
        }
        if !ch.rows.windows(2).all(|w| w[0] < w[1]) || ch.rows.iter().any(|&r| r >= self.row_pool) {
            return err("sensed lines must be strictly increasing and in range".into());
        }
        if ch.group_a.len() != self.n / 2 {
            return err(format!("group_a must select {} of the sensed lines", self.n / 2));
        }
        let row_set: BTreeSet<usize> = ch.rows.iter().copied().collect();
        let a_set: BTreeSet<usize> = ch.group_a.iter().copied().collect();
        if a_set.len() != ch.group_a.len() || !a_set.is_subset(&row_set) {
            return err("group_a must be a subset of the sensed lines".into());
        }
        if let UnselectedMap::Explicit { grounded_cols, grounded_rows } = &ch.unselected {
            if grounded_cols.iter().any(|c| ch.cols.contains(c) || *c >= self.col_pool) {
                return err("grounded column set overlaps the selection or is out of range".into());
            }
            if grounded_rows.iter().any(|r| row_set.contains(r) || *r >= self.row_pool) {
                return err("grounded row set overlaps the selection or is out of range".into());
            }
        }
        if let Some(code) = ch.bias_code {
            if code >= (1 << 16) {
                return err("bias code too wide".into());
            }
        }
        Ok(())
    }

    /// Text form: `cols=..;rows=..;A=..;un=..[;bias=..]` (one line).
    pub fn to_line(&self, ch: &Challenge) -> Result<String, PufError> {
        self.validate(ch)?;
        let join = |v: &[usize]| {
            v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
        };
        let (un_cols, un_rows) = self.unselected_order(ch);
        let mut un = String::with_capacity(un_cols.len() + un_rows.len());
        for (p, line) in un_cols.iter().chain(un_rows.iter()).enumerate() {
            let grounded = match &ch.unselected {
                UnselectedMap::AllFloating => false,
                UnselectedMap::Explicit { grounded_cols, grounded_rows } => {
                    if p < un_cols.len() {
                        grounded_cols.contains(line)
                    } else {
                        grounded_rows.contains(line)
                    }
                }
            };
            un.push(if grounded { 'G' } else { 'F' });
        }
        let mut out = format!(
            "cols={};rows={};A={};un={}",
            join(&ch.cols),
            join(&ch.rows),
            join(&ch.group_a),
            un
        );
        if let Some(code) = ch.bias_code {
            out.push_str(&format!(";bias={code}"));
        }
        Ok(out)
    }

    /// Parse the text form produced by [`ChallengeSpace::to_line`].
    pub fn parse_line(&self, line: &str) -> Result<Challenge, PufError> {
        let mut cols = None;
        let mut rows = None;
        let mut group_a = None;
        let mut un = None;
        let mut bias_code = None;
        for part in line.trim().split(';') {
            let (key, value) = part
                .split_once('=')
                .ok_or_else(|| PufError::Parse(format!("segment `{part}` has no `=`")))?;
            let parse_list = |v: &str| -> Result<Vec<usize>, PufError> {
                if v.is_empty() {
                    return Ok(Vec::new());
                }
                v.split(',')
                    .map(|x| {
                        x.parse::<usize>()
                            .map_err(|_| PufError::Parse(format!("bad index `{x}`")))
                    })
                    .collect()
            };
            match key {
                "cols" => cols = Some(parse_list(value)?),
                "rows" => rows = Some(parse_list(value)?),
                "A" => group_a = Some(parse_list(value)?),
                "un" => un = Some(value.to_string()),
                "bias" => {
                    bias_code = Some(
                        value
                            .parse::<u32>()
                            .map_err(|_| PufError::Parse(format!("bad bias code `{value}`")))?,
                    )
                }
                other => return Err(PufError::Parse(format!("unknown field `{other}`"))),
            }
        }
        let cols = cols.ok_or_else(|| PufError::Parse("missing cols".into()))?;
        let rows = rows.ok_or_else(|| PufError::Parse("missing rows".into()))?;
        let group_a = group_a.ok_or_else(|| PufError::Parse("missing A".into()))?;
        let un = un.ok_or_else(|| PufError::Parse("missing un".into()))?;

        let mut challenge =
            Challenge { cols, rows, group_a, unselected: UnselectedMap::AllFloating, bias_code };
        let (un_cols, un_rows) = self.unselected_order(&challenge);
        if un.len() != un_cols.len() + un_rows.len() {
            return Err(PufError::Parse(format!(
                "un field has {} flags, expected {}",
                un.len(),
                un_cols.len() + un_rows.len()
            )));
        }
        let mut grounded_cols = BTreeSet::new();
        let mut grounded_rows = BTreeSet::new();
        for (p, flag) in un.chars().enumerate() {
            let grounded = match flag {
                'G' => true,
                'F' => false,
                other => return Err(PufError::Parse(format!("bad un flag `{other}`"))),
            };
            if grounded {
                if p < un_cols.len() {
                    grounded_cols.insert(un_cols[p]);
                } else {
                    grounded_rows.insert(un_rows[p - un_cols.len()]);
                }
            }
        }
        if !grounded_cols.is_empty() || !grounded_rows.is_empty() {
            challenge.unselected = UnselectedMap::Explicit { grounded_cols, grounded_rows };
        }
        self.validate(&challenge)?;
        Ok(challenge)
    }
}

/// Map a k-bit bias code onto the evaluation voltage grid
/// `v_lo + code * (v_hi - v_lo) / (2^k - 1)`.
pub fn bias_from_code(code: u32, bits: u32, v_lo: f64, v_hi: f64) -> Result<f64, PufError> {
    if bits == 0 || bits > 16 || code >= (1u32 << bits) {
        return Err(PufError::BiasCodeOutOfRange { code, bits });
    }
    let steps = (1u32 << bits) - 1;
    Ok(v_lo + code as f64 * (v_hi - v_lo) / steps as f64)
}

/// Perturbation context for a response evaluation.
pub struct ReadEnv<'a> {
    pub model: &'a PerturbationModel,
    pub rng: &'a mut Stream,
}

impl ReadEnv<'_> {
    /// A shorter-lived view, for passing the environment down a call chain.
    pub fn reborrow(&mut self) -> ReadEnv<'_> {
        ReadEnv { model: self.model, rng: &mut *self.rng }
    }
}

/// Build the bias configuration a challenge describes.
pub fn bias_from_challenge(
    array: &CrossbarArray,
    ch: &Challenge,
    v_b: f64,
    orientation: Orientation,
) -> Result<BiasConfig, PufError> {
    let map = array.line_map();
    let (driven_pool, sense_pool) = match orientation {
        Orientation::ColumnsDriven => (map.col_pool(), map.row_pool()),
        Orientation::RowsDriven => (map.row_pool(), map.col_pool()),
    };
    let check = |idx: usize, pool: &Vec<Line>| -> Result<Line, PufError> {
        pool.get(idx)
            .copied()
            .ok_or_else(|| PufError::InvalidChallenge(format!("line index {idx} out of range")))
    };
    let mut bias = BiasConfig::all_floating(array);
    for &c in &ch.cols {
        bias.set(check(c, &driven_pool)?, LineRole::Driven(v_b))?;
    }
    for &r in &ch.rows {
        bias.set(check(r, &sense_pool)?, LineRole::VirtualGround)?;
    }
    if let UnselectedMap::Explicit { grounded_cols, grounded_rows } = &ch.unselected {
        for &c in grounded_cols {
            if ch.cols.contains(&c) {
                return Err(PufError::InvalidChallenge("grounded line is driven".into()));
            }
            bias.set(check(c, &driven_pool)?, LineRole::Grounded)?;
        }
        for &r in grounded_rows {
            if ch.rows.contains(&r) {
                return Err(PufError::InvalidChallenge("grounded line is sensed".into()));
            }
            bias.set(check(r, &sense_pool)?, LineRole::Grounded)?;
        }
    }
    Ok(bias)
}

fn group_lines(
    array: &CrossbarArray,
    rows: &[usize],
    orientation: Orientation,
) -> Result<Vec<Line>, PufError> {
    let map = array.line_map();
    let pool = match orientation {
        Orientation::ColumnsDriven => map.row_pool(),
        Orientation::RowsDriven => map.col_pool(),
    };
    rows.iter()
        .map(|&r| {
            pool.get(r)
                .copied()
                .ok_or_else(|| PufError::InvalidChallenge(format!("line index {r} out of range")))
        })
        .collect()
}

/// Full-control variant of [`respond_bit`]: explicit orientation, solver
/// options, and access to the solved network.
pub fn respond_bit_with(
    array: &CrossbarArray,
    ch: &Challenge,
    v_b: f64,
    orientation: Orientation,
    opts: &SolverOptions,
    mut env: Option<ReadEnv<'_>>,
) -> Result<(bool, SolveResult), PufError> {
    let v_eff = match env.as_mut() {
        Some(e) => e.model.effective_bias(v_b, e.rng),
        None => v_b,
    };
    let bias = bias_from_challenge(array, ch, v_eff, orientation)?;
    let result = solve_network(array, &bias, opts)?;
    let lines_a = group_lines(array, &ch.group_a, orientation)?;
    let lines_b = group_lines(array, &ch.group_b(), orientation)?;
    let mut i_a = group_current(&result, &lines_a)?;
    let mut i_b = group_current(&result, &lines_b)?;
    if let Some(e) = env.as_mut() {
        i_a = e.model.noisy_current(i_a, e.rng);
        i_b = e.model.noisy_current(i_b, e.rng);
    }
    // Ties resolve to 0.
    Ok((i_a - i_b > 0.0, result))
}

/// One-bit response: sign of the current differential between the two
/// sensed half groups. Deterministic when `env` is `None`.
pub fn respond_bit(
    array: &CrossbarArray,
    ch: &Challenge,
    v_b: f64,
    env: Option<ReadEnv<'_>>,
) -> Result<bool, PufError> {
    respond_bit_with(array, ch, v_b, Orientation::default(), &SolverOptions::default(), env)
        .map(|(bit, _)| bit)
}

/// Evaluate a challenge list into a packed response key.
pub fn respond_key(
    array: &CrossbarArray,
    challenges: &[Challenge],
    v_b: f64,
    mut env: Option<ReadEnv<'_>>,
) -> Result<ResponseKey, PufError> {
    if challenges.is_empty() {
        return Err(PufError::InvalidChallenge("no challenges".into()));
    }
    let mut key = ResponseKey::new(1);
    for ch in challenges {
        let bit = respond_bit(array, ch, v_b, env.as_mut().map(|e| e.reborrow()))?;
        key.push_bit(bit);
    }
    Ok(key)
}

/// Two-bit quaternary response combining the linear (200 mV) and nonlinear
/// (600 mV) regimes: `symbol = 2 * bit(600 mV) + bit(200 mV)`.
pub fn quaternary_respond(
    array: &CrossbarArray,
    ch: &Challenge,
    mut env: Option<ReadEnv<'_>>,
) -> Result<u8, PufError> {
    let b_lin = respond_bit(
        array,
        ch,
        V_LINEAR,
        env.as_mut().map(|e| e.reborrow()),
    )?;
    let b_nl = respond_bit(array, ch, V_NONLINEAR, env)?;
    Ok(2 * u8::from(b_nl) + u8::from(b_lin))
}

/// Packed response bits in 64-bit packets, most significant bit first.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ResponseKey {
    packets: Vec<u64>,
    bit_len: usize,
    symbol_bits: u8,
}

impl ResponseKey {
    /// `symbol_bits` is 1 for binary keys, 2 for quaternary keys.
    pub fn new(symbol_bits: u8) -> Self {
        assert!(symbol_bits == 1 || symbol_bits == 2);
        ResponseKey { packets: Vec::new(), bit_len: 0, symbol_bits }
    }

    pub fn from_packets(packets: Vec<u64>, symbol_bits: u8) -> Self {
        assert!(symbol_bits == 1 || symbol_bits == 2);
        let bit_len = packets.len() * 64;
        ResponseKey { packets, bit_len, symbol_bits }
    }

    pub fn push_bit(&mut self, bit: bool) {
        let slot = self.bit_len / 64;
        if slot == self.packets.len() {
            self.packets.push(0);
        }
        if bit {
            self.packets[slot] |= 1u64 << (63 - self.bit_len % 64);
        }
        self.bit_len += 1;
    }

    pub fn push_symbol(&mut self, symbol: u8) {
        assert!(self.symbol_bits == 2 && symbol < 4);
        self.push_bit(symbol & 0b10 != 0);
        self.push_bit(symbol & 0b01 != 0);
    }

    pub fn bit_len(&self) -> usize {
        self.bit_len
    }

    pub fn symbol_bits(&self) -> u8 {
        self.symbol_bits
    }

    pub fn bit(&self, i: usize) -> bool {
        assert!(i < self.bit_len);
        self.packets[i / 64] >> (63 - i % 64) & 1 == 1
    }

    /// The complete 64-bit packets; errors if the key has a partial tail,
    /// which packetized metrics reject rather than pad.
    pub fn packets(&self) -> Result<&[u64], PufError> {
        if !self.bit_len.is_multiple_of(64) {
            return Err(PufError::PartialPacket(self.bit_len));
        }
        Ok(&self.packets)
    }

    /// Hex serialization: one packet per line, 16 lowercase digits, most
    /// significant bit first.
    pub fn to_hex(&self) -> Result<String, PufError> {
        let packets = self.packets()?;
        let mut out = String::with_capacity(17 * packets.len());
        for p in packets {
            out.push_str(&format!("{p:016x}\n"));
        }
        Ok(out)
    }

    pub fn from_hex(text: &str, symbol_bits: u8) -> Result<Self, PufError> {
        let mut packets = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if line.len() != 16 {
                return Err(PufError::Parse(format!("line {}: expected 16 hex digits", i + 1)));
            }
            let packet = u64::from_str_radix(line, 16)
                .map_err(|_| PufError::Parse(format!("line {}: bad hex `{line}`", i + 1)))?;
            packets.push(packet);
        }
        Ok(Self::from_packets(packets, symbol_bits))
    }
}

impl fmt::Display for ResponseKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for i in 0..self.bit_len {
            write!(f, "{}", u8::from(self.bit(i)))?;
        }
        Ok(())
    }
}
