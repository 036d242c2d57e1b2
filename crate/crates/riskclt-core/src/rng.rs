//! Counter-based random streams.
//!
//! Every random quantity is drawn from a ChaCha8 stream keyed by
//! `(master seed, repetition index, purpose tag)`. Repetitions can run on
//! any number of workers in any order and still produce bit-identical
//! output, because no stream state is shared between repetitions.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Deterministic RNG stream handle.
pub type Stream = ChaCha8Rng;

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn fnv1a(tag: &str) -> u64 {
    let mut h = 0xcbf2_9ce4_8422_2325u64;
    for b in tag.as_bytes() {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Derives an independent stream from `(master_seed, repetition, purpose)`.
pub fn stream(master_seed: u64, repetition: u64, purpose: &str) -> Stream {
    let mut state = master_seed;
    let a = splitmix64(&mut state);
    state ^= repetition.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    let b = splitmix64(&mut state);
    state ^= fnv1a(purpose);
    let mut seed = [0u8; 32];
    seed[0..8].copy_from_slice(&a.to_le_bytes());
    seed[8..16].copy_from_slice(&b.to_le_bytes());
    seed[16..24].copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    seed[24..32].copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    ChaCha8Rng::from_seed(seed)
}
