//! Seed-derived random streams.
//!
//! Item `i` of any batch (prior shapes, posterior samples, structures) is
//! drawn from ChaCha8 seeded with the run seed and switched to stream `i`,
//! so results do not depend on thread scheduling or batch size.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
