//! Deterministic derivation of RNG streams from a master seed.
//!
//! Every stochastic component (simulation runs, CV folds, MCMC chains) draws
//! its stream from `(master seed, label, index)` so results are independent
//! of scheduling and worker count.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// splitmix64 finalizer; good avalanche for cheap seed mixing.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives a child seed from a master seed, a stream label and an index.
pub fn derive_seed(master: u64, label: &str, index: u64) -> u64 {
    let mut h = mix(master);
    for &b in label.as_bytes() {
        h = mix(h ^ u64::from(b));
    }
    mix(h ^ index)
}

/// RNG for the stream `(master, label, index)`.
pub fn stream_rng(master: u64, label: &str, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(master, label, index))
}
