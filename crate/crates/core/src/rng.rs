//! Counter-based random streams.
//!
//! A stream is keyed by `(seed, tag, index)`: the seed and purpose tag are
//! hashed into a ChaCha20 key, and the index selects the ChaCha stream. Two
//! workers asking for the same key always see the same numbers, no matter how
//! the work was scheduled.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use sha2::{Digest, Sha256};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct StreamId<'a> {
    pub seed: u64,
    pub tag: &'a str,
    pub index: u64,
}

impl<'a> StreamId<'a> {
    pub fn new(seed: u64, tag: &'a str, index: u64) -> Self {
        Self { seed, tag, index }
    }

    pub fn with_index(self, index: u64) -> Self {
        Self { index, ..self }
    }

    pub fn rng(&self) -> ChaCha20Rng {
        let mut hasher = Sha256::new();
        hasher.update(self.seed.to_le_bytes());
        hasher.update((self.tag.len() as u64).to_le_bytes());
        hasher.update(self.tag.as_bytes());
        let key: [u8; 32] = hasher.finalize().into();
        let mut rng = ChaCha20Rng::from_seed(key);
        rng.set_stream(self.index);
        rng
    }
}
