//! Deterministic seed derivation for independent random streams.
//!
//! Every run owns its streams; a stream seed is a pure function of the master
//! seed and a path of integers (cell index, execution index, stream tag), so any
//! run can be reproduced in isolation.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Random source used throughout the crate.
pub type Rng = ChaCha8Rng;

/// Stream tag for the design of experiments and the candidate pool.
pub const STREAM_DESIGN: u64 = 0x6465_7369_676e;
/// Stream tag for observation noise.
pub const STREAM_NOISE: u64 = 0x6e6f_6973_65;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Mixes `parts` into `master`, one splitmix round per part.
pub fn derive_seed(master: u64, parts: &[u64]) -> u64 {
    parts
        .iter()
        .fold(splitmix64(master), |acc, &p| splitmix64(acc ^ splitmix64(p)))
}

pub fn rng_from_seed(seed: u64) -> Rng {
    Rng::seed_from_u64(seed)
}

/// Stream `tag` of the run seeded with `run_seed`.
pub fn stream(run_seed: u64, tag: u64) -> Rng {
    rng_from_seed(derive_seed(run_seed, &[tag]))
}
