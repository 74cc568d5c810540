//! Seeded random sources. Every stochastic choice in the crate is drawn
//! from ChaCha8 keyed by a user seed; per-round choices use the round
//! number as the stream id so they are a pure function of `(seed, k)`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn seeded(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Generator for stream `stream` under `seed`, independent of how many
/// values other streams have consumed.
pub fn stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
