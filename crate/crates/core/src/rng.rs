//! Seeded random streams.
//!
//! Every stochastic step in the crate draws from an explicit [`Stream`] so
//! that runs are reproducible bit for bit. Independent stages get their own
//! stream through [`derive_seed`].

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use sha2::{Digest, Sha256};

pub type Stream = ChaCha20Rng;

pub fn stream(seed: u64) -> Stream {
    ChaCha20Rng::seed_from_u64(seed)
}

/// Hashes `(master, index, stage)` into a fresh 64-bit seed.
pub fn derive_seed(master: u64, index: u64, stage: &str) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(master.to_le_bytes());
    hasher.update(index.to_le_bytes());
    hasher.update(stage.as_bytes());
    let digest = hasher.finalize();
    let mut bytes = [0u8; 8];
    bytes.copy_from_slice(&digest[..8]);
    u64::from_le_bytes(bytes)
}
