//! Seeded ChaCha streams. Each consumer of randomness gets its own stream of
//! the same seed so that, e.g., weight init and data generation never share
//! draws.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub(crate) const STREAM_INIT: u64 = 1;
pub(crate) const STREAM_DATA: u64 = 2;
pub(crate) const STREAM_CHECK: u64 = 3;
const STREAM_SHUFFLE: u64 = 1 << 32;

pub(crate) fn stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

pub(crate) fn shuffle_stream(seed: u64, epoch: u64) -> ChaCha8Rng {
    stream(seed, STREAM_SHUFFLE + epoch)
}
