//! Seeded random streams.
//!
//! Every stochastic unit of work (a posterior draw, a bootstrap, a sweep
//! replicate) gets its own generator derived from the user seed and a key
//! path, so results never depend on how work is scheduled across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Stream = ChaCha8Rng;

/// Key namespaces, one per kind of work.
pub mod domain {
    pub const POSTERIOR_DRAW: u64 = 1;
    pub const OPTIMISM: u64 = 2;
    pub const SWEEP_SUBSAMPLE: u64 = 3;
    pub const SWEEP_FIT: u64 = 4;
    pub const SWEEP_VOI: u64 = 5;
    pub const PROPOSED_FIT: u64 = 6;
    pub const UNCERTAINTY: u64 = 7;
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Mixes a key path into a single 64-bit seed.
pub fn derive_seed(seed: u64, keys: &[u64]) -> u64 {
    keys.iter()
        .fold(splitmix64(seed), |h, &k| splitmix64(h ^ splitmix64(k)))
}

/// Generator for the unit of work identified by `keys` under `seed`.
pub fn stream(seed: u64, keys: &[u64]) -> Stream {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, keys))
}
