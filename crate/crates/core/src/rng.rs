//! Deterministic, splittable random number streams.
//!
//! Every stochastic stage derives an independent ChaCha8 stream from
//! (master seed, stage label, index path) via SHA-256. Streams depend only
//! on that key, never on scheduling, so results are identical across thread
//! counts and across runs.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

/// Derive the stream keyed by `(master, stage, indices)`.
pub fn stream(master: u64, stage: &str, indices: &[u64]) -> ChaCha8Rng {
    let mut h = Sha256::new();
    h.update(master.to_le_bytes());
    h.update((stage.len() as u64).to_le_bytes());
    h.update(stage.as_bytes());
    for ix in indices {
        h.update(ix.to_le_bytes());
    }
    let digest = h.finalize();
    let mut seed = [0u8; 32];
    seed.copy_from_slice(&digest);
    ChaCha8Rng::from_seed(seed)
}

/// A master seed from which stage streams are derived.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct StreamKey {
    pub master: u64,
}

impl StreamKey {
    pub fn new(master: u64) -> Self {
        StreamKey { master }
    }

    /// Stream for `stage` with an index path (loop counters, draw ids, ...).
    pub fn derive(&self, stage: &str, indices: &[u64]) -> ChaCha8Rng {
        stream(self.master, stage, indices)
    }
}
