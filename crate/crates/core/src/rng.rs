//! Seeded random sources. Every stochastic operation takes an explicit
//! generator; independent streams are derived from one run seed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// Generator for stream `stream` of run seed `seed`.
pub fn stream(seed: u64, stream: u64) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Well-known stream ids.
pub mod streams {
    pub const PIPELINE: u64 = 1;
    pub const SCENARIO: u64 = 2;
}
