//! Named random substreams.
//!
//! Every random draw in a run comes from a ChaCha8 generator keyed by the
//! configuration seed plus a stream id, so each consumer (gradient noise,
//! `k*` sampling, problem generation) sees an independent, reproducible
//! sequence regardless of how many draws the others make.

use rand::SeedableRng;
pub use rand_chacha::ChaCha8Rng;

pub const GRADIENT_STREAM: u64 = 1;
pub const KSTAR_STREAM: u64 = 2;
pub const PROBLEM_STREAM: u64 = 3;

pub fn substream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Seed for the `index`-th child of `seed` (replications, trial partitions).
pub fn child_seed(seed: u64, index: u64) -> u64 {
    // splitmix64 finalizer over the pair
    let mut z = seed ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
