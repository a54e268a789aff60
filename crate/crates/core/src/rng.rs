//! Seeded, counter-based random streams.
//!
//! Every stochastic task draws from its own ChaCha stream keyed by
//! `(seed, stream)`, so results do not depend on scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream id reserved for sampling configuration grids.
pub const GRID_STREAM: u64 = u64::MAX;

pub fn task_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
