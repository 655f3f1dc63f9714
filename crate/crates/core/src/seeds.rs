//! Seed splitting.
//!
//! Every random stream in a run is a `ChaCha8Rng` seeded with
//! `derive_seed(master, path)`, where `path` names the stream:
//!
//! * game noise of trial `k`: `[k, NOISE_STREAM]`
//! * perturbation directions of agent `i` in trial `k`: `[k, DIRECTION_STREAM, i]`
//!
//! `derive_seed` folds each path element into a SplitMix64 state:
//! `s_0 = master`, `s_{j+1} = splitmix64(s_j ^ splitmix64(p_j + 1))`.
//! Streams depend on the trial index only, never on the variant, so every
//! variant and every momentum value in a run sees the same noise.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub const NOISE_STREAM: u64 = 1;
pub const DIRECTION_STREAM: u64 = 2;
pub const EVALUATION_STREAM: u64 = 3;

pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn derive_seed(master: u64, path: &[u64]) -> u64 {
    path.iter()
        .fold(master, |state, p| splitmix64(state ^ splitmix64(p.wrapping_add(1))))
}

pub fn stream(master: u64, path: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(master, path))
}

pub fn noise_seed(master: u64, trial: usize) -> u64 {
    derive_seed(master, &[trial as u64, NOISE_STREAM])
}

pub fn direction_seed(master: u64, trial: usize, agent: usize) -> u64 {
    derive_seed(master, &[trial as u64, DIRECTION_STREAM, agent as u64])
}
