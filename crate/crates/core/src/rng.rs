//! Counter-based pseudo-random generation.
//!
//! Every random word is a pure function of `(seed, stream tag, index, word
//! position)`, so any codebook entry can be regenerated in isolation. The
//! algorithm, reproduced exactly by any implementation:
//!
//! ```text
//! mix(z):   z += 0x9E3779B97F4A7C15
//!           z  = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9
//!           z  = (z ^ (z >> 27)) * 0x94D049BB133111EB
//!           return z ^ (z >> 31)                      (all arithmetic mod 2^64)
//! tag_hash   = FNV-1a 64 over the UTF-8 bytes of the stream tag
//! stream_key = mix(seed ^ tag_hash)
//! vector_key = mix(stream_key ^ index)
//! word[w]    = mix(vector_key + w * 0x9E3779B97F4A7C15)
//! ```
//!
//! `word[w]` is therefore the `w`-th output of a SplitMix64 sequence started at
//! `vector_key`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;
const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

/// SplitMix64 finalizer, including the gamma increment.
#[inline]
pub fn mix64(z: u64) -> u64 {
    let mut z = z.wrapping_add(GOLDEN_GAMMA);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn fnv1a64(bytes: &[u8]) -> u64 {
    bytes
        .iter()
        .fold(FNV_OFFSET, |h, &b| (h ^ u64::from(b)).wrapping_mul(FNV_PRIME))
}

/// A seed paired with a stream tag, so that independent consumers of the same
/// user seed ("groups", "values", ...) draw from unrelated streams.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct HdcSeed {
    pub seed: u64,
    pub stream: String,
}

impl HdcSeed {
    pub fn new(seed: u64, stream: impl Into<String>) -> Self {
        Self {
            seed,
            stream: stream.into(),
        }
    }

    pub fn stream_key(&self) -> u64 {
        mix64(self.seed ^ fnv1a64(self.stream.as_bytes()))
    }

    pub fn vector_key(&self, index: u64) -> u64 {
        mix64(self.stream_key() ^ index)
    }

    /// Word `pos` of the pseudo-random sequence for entry `index`.
    pub fn word(&self, index: u64, pos: u64) -> u64 {
        word_from_key(self.vector_key(index), pos)
    }

    /// A conventional RNG for sequential consumers (initialization,
    /// shuffling, synthetic data), keyed the same way as hypervectors.
    pub fn rng(&self, index: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.vector_key(index))
    }
}

#[inline]
pub(crate) fn word_from_key(vector_key: u64, pos: u64) -> u64 {
    mix64(vector_key.wrapping_add(pos.wrapping_mul(GOLDEN_GAMMA)))
}
