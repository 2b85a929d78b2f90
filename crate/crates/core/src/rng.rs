//! Seeded, indexable random streams.
//!
//! Every simulated path owns one `(seed, index)` stream, so a batch can be
//! generated in parallel and still reproduce bit-for-bit.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct RngStream {
    pub seed: u64,
    pub index: u64,
}

impl RngStream {
    pub fn new(seed: u64) -> Self {
        Self { seed, index: 0 }
    }

    pub fn with_index(seed: u64, index: u64) -> Self {
        Self { seed, index }
    }

    /// The stream for the `i`-th path of a batch rooted at this stream.
    ///
    /// Batches rooted at different indices of the same seed do not overlap
    /// as long as each batch stays below 2^32 paths.
    pub fn child(self, i: u64) -> Self {
        Self { seed: self.seed, index: (self.index << 32) | (i & 0xffff_ffff) }
    }

    pub fn rng(self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.index);
        rng
    }
}
