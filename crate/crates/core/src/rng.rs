//! Labeled deterministic random streams.
//!
//! Every consumer of randomness (seed episodes, CEM sampling, evaluation,
//! initialization) draws from its own stream, derived from the master seed,
//! a string label, and integer ids (task, episode, ...). Streams are created
//! on demand, so e.g. changing the CEM population never perturbs environment
//! randomness, and a run can be resumed from a task boundary without saving
//! generator positions.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SeedStream {
    master: u64,
}

impl SeedStream {
    pub fn new(master: u64) -> Self {
        Self { master }
    }

    pub fn master(&self) -> u64 {
        self.master
    }

    /// Derive an independent generator for `(label, ids)`.
    pub fn stream(&self, label: &str, ids: &[u64]) -> ChaCha8Rng {
        let mut hasher = Sha256::new();
        hasher.update(self.master.to_le_bytes());
        hasher.update([label.len() as u8]);
        hasher.update(label.as_bytes());
        for id in ids {
            hasher.update(id.to_le_bytes());
        }
        let digest = hasher.finalize();
        let mut seed = [0u8; 32];
        seed.copy_from_slice(&digest);
        ChaCha8Rng::from_seed(seed)
    }
}
