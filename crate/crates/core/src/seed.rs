//! Seed derivation for independent random substreams.
//!
//! Every stochastic component draws from a ChaCha8 stream whose seed is
//! `derive_seed(master, stream)`. The mixing function is two rounds of the
//! SplitMix64 finalizer applied to `master` and `stream`, so adding shards or
//! samples never perturbs the seeds of existing ones.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of substream `stream` under `master`.
pub fn derive_seed(master: u64, stream: u64) -> u64 {
    splitmix64(splitmix64(master) ^ stream.wrapping_mul(GOLDEN).rotate_left(17))
}

pub fn stream_rng(master: u64, stream: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(master, stream))
}

/// Stream tags used across the crate, kept in one place so they never collide.
pub(crate) mod streams {
    pub const WALK_POSITIVE: u64 = 0;
    pub const WALK_NEGATIVE: u64 = 1;
    pub const SHARD_BASE: u64 = 1 << 32;
    pub const BOOTSTRAP: u64 = 2 << 32;
    pub const SAMPLE_BASE: u64 = 3 << 32;
}
