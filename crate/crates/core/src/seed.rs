//! Deterministic seed splitting.
//!
//! Child streams are derived from the master seed by folding each index
//! through SplitMix64: `s <- splitmix64(s ^ splitmix64(index + 1))`. The
//! same `(master, path)` always yields the same stream regardless of thread
//! scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type ChainRng = ChaCha8Rng;

pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn derive_seed(master: u64, path: &[u64]) -> u64 {
    path.iter()
        .fold(master, |s, &i| splitmix64(s ^ splitmix64(i.wrapping_add(1))))
}

pub fn rng_for(master: u64, path: &[u64]) -> ChainRng {
    ChaCha8Rng::seed_from_u64(derive_seed(master, path))
}
