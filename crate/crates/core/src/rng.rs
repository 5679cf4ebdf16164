//! Keyed seed streams.
//!
//! Every random draw in the crate comes from a [`SeedStream`]. A stream is a
//! 256-bit key; child streams are derived by hashing the parent key together
//! with a purpose tag and an index, so the stream used by replication 17 of a
//! study does not depend on how many workers ran, or in which order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub type StreamRng = ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SeedStream {
    key: [u8; 32],
}

impl SeedStream {
    /// Root stream for a master seed.
    pub fn new(master: u64) -> Self {
        let mut hasher = Sha256::new();
        hasher.update(b"linproc-ustat/master");
        hasher.update(master.to_le_bytes());
        Self {
            key: hasher.finalize().into(),
        }
    }

    /// Child stream keyed by `(self, tag, index)`.
    pub fn derive(&self, tag: &str, index: u64) -> Self {
        let mut hasher = Sha256::new();
        hasher.update(self.key);
        hasher.update((tag.len() as u64).to_le_bytes());
        hasher.update(tag.as_bytes());
        hasher.update(index.to_le_bytes());
        Self {
            key: hasher.finalize().into(),
        }
    }

    pub fn rng(&self) -> StreamRng {
        StreamRng::from_seed(self.key)
    }

    pub fn key_hex(&self) -> String {
        self.key.iter().map(|b| format!("{b:02x}")).collect()
    }
}
