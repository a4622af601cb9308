//! Seeded random streams.
//!
//! Every generator in the crate derives its randomness from a `(seed, purpose,
//! index)` triple so that, for example, drawing one more utterance never
//! perturbs the draws of earlier ones.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Purposes keep unrelated draws on disjoint ChaCha streams.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Weights = 1,
    Speaker = 2,
    Channel = 3,
    Residual = 4,
    Noise = 5,
    Trials = 6,
    Model = 7,
    Head = 8,
    Gain = 9,
}

pub fn stream_rng(seed: u64, purpose: Stream, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((purpose as u64) << 48) ^ index);
    rng
}
