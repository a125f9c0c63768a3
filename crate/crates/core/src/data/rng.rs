use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

/// Generator behind every [`RandomSource`].
pub type StreamRng = ChaCha12Rng;

/// A named position in the random-number space: a 64-bit seed plus a stream id.
///
/// Draws are produced by ChaCha12 keyed with the seed and running on the given
/// stream, so two sources with the same `(seed, stream_id)` produce the same
/// sequence on every platform. Sub-streams are derived by hashing the parent
/// coordinates with an index, which lets per-unit or per-replicate work run in
/// any order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RandomSource {
    pub seed: u64,
    pub stream_id: u64,
}

pub fn make_rng(seed: u64, stream_id: u64) -> RandomSource {
    RandomSource { seed, stream_id }
}

impl RandomSource {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        make_rng(seed, stream_id)
    }

    /// Fresh generator positioned at the start of this stream.
    pub fn rng(&self) -> StreamRng {
        let mut rng = ChaCha12Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream_id);
        rng
    }

    /// Child source for item `index` (a unit, a replicate, a tree ...).
    pub fn substream(&self, index: u64) -> RandomSource {
        let key = splitmix64(self.seed ^ splitmix64(self.stream_id ^ splitmix64(index ^ 0xA076_1D64_78BD_642F)));
        RandomSource { seed: key, stream_id: self.stream_id }
    }

    /// Same seed, different stream.
    pub fn with_stream(&self, stream_id: u64) -> RandomSource {
        RandomSource { seed: self.seed, stream_id }
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
