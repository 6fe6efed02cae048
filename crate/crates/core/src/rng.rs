//! The single seeded generator every stochastic step draws from.

use rand::SeedableRng;

/// ChaCha8: portable and reproducible across platforms for a given seed.
pub type SeededRng = rand_chacha::ChaCha8Rng;

pub fn seeded(seed: u64) -> SeededRng {
    SeededRng::seed_from_u64(seed)
}
