//! Deterministic RNG stream derivation.
//!
//! Every randomized stage derives its generator from the root seed plus a
//! stream key (domain constant, subject index, replicate index, ...). Results
//! are therefore independent of scheduling and worker count.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub mod domain {
    pub const STARS: u64 = 1;
    pub const BOOTSTRAP: u64 = 2;
    pub const PERMUTATION: u64 = 3;
    pub const SIM_STRUCTURE: u64 = 4;
    pub const SIM_SUBJECT: u64 = 5;
    pub const BENCH: u64 = 6;
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derive a generator for `(seed, stream...)`.
pub fn derive_rng(seed: u64, stream: &[u64]) -> ChaCha8Rng {
    let mut state = seed ^ 0xD1B5_4A32_D192_ED03;
    splitmix64(&mut state);
    for &v in stream {
        state ^= v.wrapping_mul(0x9E37_79B9_7F4A_7C15);
        splitmix64(&mut state);
    }
    let mut key = [0u8; 32];
    for chunk in key.chunks_exact_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    ChaCha8Rng::from_seed(key)
}

/// Derive a fresh u64 (used to seed nested scopes such as bench replicates).
pub fn derive_seed(seed: u64, stream: &[u64]) -> u64 {
    let mut state = seed ^ 0xA076_1D64_78BD_642F;
    splitmix64(&mut state);
    for &v in stream {
        state ^= v.wrapping_mul(0x9E37_79B9_7F4A_7C15);
        splitmix64(&mut state);
    }
    splitmix64(&mut state)
}
