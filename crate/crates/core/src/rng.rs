//! Deterministic random streams.
//!
//! Every parallel task draws from its own ChaCha stream, addressed by the user
//! seed and a task index, so results do not depend on the thread count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// Independent generator for task `stream` under `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Replicates handled by one task in chunked Monte Carlo loops.
pub const CHUNK: u64 = 16_384;

/// Split `reps` into `(stream index, size)` chunks of at most [`CHUNK`].
pub fn chunks(reps: u64) -> Vec<(u64, u64)> {
    let n = reps.div_ceil(CHUNK);
    (0..n).map(|k| (k, CHUNK.min(reps - k * CHUNK))).collect()
}
