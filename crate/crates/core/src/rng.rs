//! Seeded, portable random streams.
//!
//! Every stochastic draw in the crate comes from a ChaCha8 stream keyed by
//! `(seed, purpose, index)`, so a draw can always be traced back to the
//! purpose and episode that consumed it.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// What a random stream is used for. The discriminant selects the stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u64)]
pub enum Purpose {
    EpisodeReset = 1,
    WindProcess = 2,
    WindNoise = 3,
    ActionSampling = 4,
    Minibatch = 5,
    Init = 6,
    Test = 7,
}

/// Independent stream for `(seed, purpose, index)`.
pub fn substream(seed: u64, purpose: Purpose, index: u64) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((purpose as u64) << 48) ^ index);
    rng
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn mix(parts: &[u64]) -> u64 {
    parts.iter().fold(0x5eed, |acc, &p| splitmix64(acc ^ splitmix64(p)))
}

/// Seed of a training episode. Always even.
pub fn training_episode_seed(run_seed: u64, iteration: u64, episode: u64) -> u64 {
    mix(&[run_seed, iteration, episode]) & !1
}

/// Seed of a held-out evaluation episode. Always odd, so it never
/// coincides with a training episode.
pub fn evaluation_episode_seed(eval_seed: u64, direction_bin: u64) -> u64 {
    mix(&[u64::MAX, eval_seed, direction_bin]) | 1
}
