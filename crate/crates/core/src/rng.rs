//! Seeded generator streams.
//!
//! Every randomized operation draws from its own ChaCha stream keyed by the
//! 64-bit seed and a fixed stream id, so no two operations ever share state.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Sbm = 1,
    Split = 2,
    Walks = 3,
    WalkOrder = 4,
    EmbeddingInit = 5,
    NegativeSampling = 6,
    Classifier = 7,
}

pub fn stream(seed: u64, which: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(which as u64);
    rng
}
