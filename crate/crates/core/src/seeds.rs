//! Seed derivation.
//!
//! Every random stream in the crate is a ChaCha8 generator keyed by a master
//! seed and a short path of integers (stage tag, tree index, feature index).
//! The key depends only on that path, so the stream a task sees does not
//! depend on the order in which tasks run.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stage tags for [`derive`].
pub mod tag {
    pub const SPLIT: u64 = 1;
    pub const FOREST: u64 = 2;
    pub const PERMUTATION: u64 = 3;
    pub const GENERATOR: u64 = 4;
    pub const BOOTSTRAP: u64 = 5;
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes a seed with a path of integers into a new 64-bit seed.
pub fn derive(seed: u64, path: &[u64]) -> u64 {
    let mut state = seed;
    let mut out = splitmix64(&mut state);
    for &p in path {
        state ^= p.wrapping_mul(0xD6E8_FEB8_6659_FD93).rotate_left(17);
        out = splitmix64(&mut state) ^ out.rotate_left(29);
    }
    out
}

/// Random stream for the given seed and path.
pub fn stream(seed: u64, path: &[u64]) -> ChaCha8Rng {
    let mut state = derive(seed, path);
    let mut key = [0u8; 32];
    for chunk in key.chunks_exact_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    ChaCha8Rng::from_seed(key)
}
