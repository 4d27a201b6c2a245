//! Named, reproducible random substreams.
//!
//! Every randomized operation in an experiment draws from a stream derived
//! from `(master seed, purpose label, index)`. Streams are independent of
//! each other and of evaluation order, which makes whole experiment runs
//! byte-reproducible even when individual stages are reordered or skipped.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// The stream type used throughout the crate.
pub type Stream = ChaCha8Rng;

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h = (h ^ u64::from(*b)).wrapping_mul(0x0000_0100_0000_01B3);
    }
    h
}

/// Derive the substream named `(label, index)` from a master seed.
pub fn substream(master: u64, label: &str, index: u64) -> Stream {
    let mut state = master;
    splitmix64(&mut state);
    state ^= fnv1a(label.as_bytes());
    splitmix64(&mut state);
    state ^= index;
    let mut seed = [0u8; 32];
    for chunk in seed.chunks_exact_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    ChaCha8Rng::from_seed(seed)
}
