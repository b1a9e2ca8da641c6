//! Counter-based random streams.
//!
//! A master seed plus a stream tag selects a ChaCha key; the path index
//! selects the ChaCha stream. Path `i` therefore draws the same numbers no
//! matter which worker simulates it or in what order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// SplitMix64 finalizer, used to decorrelate seeds and tags.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// A family of independent per-path generators.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct StreamSeed {
    pub seed: u64,
    pub tag: u64,
}

impl StreamSeed {
    pub fn new(seed: u64) -> Self {
        Self { seed, tag: 0 }
    }

    /// Derives an independent family; used to give each task, transition or
    /// replica its own streams.
    pub fn child(&self, label: u64) -> Self {
        Self {
            seed: self.seed,
            tag: mix64(self.tag ^ mix64(label.wrapping_add(0x5eed))),
        }
    }

    /// Generator for path `index` of this family.
    pub fn path_rng(&self, index: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(mix64(self.seed) ^ self.tag);
        rng.set_stream(index);
        rng
    }
}
