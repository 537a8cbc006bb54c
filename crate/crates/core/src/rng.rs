//! Seed splitting and per-draw random substreams.
//!
//! Every random quantity is a deterministic function of the top-level seed,
//! a stage tag and an index. Parallel loops give draw `i` its own ChaCha
//! stream, so the output does not depend on the number of worker threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

/// Stage tags used by the pipeline.
pub mod tags {
    pub const DATASET: &str = "dataset";
    pub const LOSSES: &str = "losses";
    pub const MCMC: &str = "mcmc";
    pub const PREDICTIVE: &str = "predictive";
    pub const QUANTILE_DISTRIBUTION: &str = "quantile-distribution";
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derive a stage seed from `(seed, tag)`.
///
/// The tag is folded in with FNV-1a and the result is mixed with SplitMix64.
pub fn derive_seed(seed: u64, tag: &str) -> u64 {
    let mut h: u64 = 0xCBF2_9CE4_8422_2325;
    for b in tag.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01B3);
    }
    splitmix64(seed ^ splitmix64(h))
}

/// Random stream number `index` under `seed`.
pub fn substream(seed: u64, index: u64) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Single sequential stream for a stage.
pub fn stage_rng(seed: u64, tag: &str) -> StreamRng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, tag))
}
