//! Seed handling. A master seed fans out into independent ChaCha streams.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Randomness consumers within a run. Each gets its own stream of the
/// master seed, so e.g. exploration changes never perturb initialisation.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stream {
    Env = 0,
    Exploration = 1,
    Init = 2,
}

pub fn stream_rng(master: u64, stream: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(stream as u64);
    rng
}
