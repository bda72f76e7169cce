//! Seed derivation.
//!
//! A run seed is split into named substreams (`"data"`, `"init"`, `"train"`,
//! `"sample"`, ...) by hashing `seed || name` with SHA-256 and seeding a ChaCha8
//! generator with the first 32 bytes of the digest. Streams with different names
//! are independent, so drawing more samples never perturbs training randomness.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

pub type Rng = ChaCha8Rng;

/// Generator for substream `name` of run seed `seed`.
pub fn substream(seed: u64, name: &str) -> Rng {
    let mut hasher = Sha256::new();
    hasher.update(seed.to_le_bytes());
    hasher.update(b"/");
    hasher.update(name.as_bytes());
    let digest = hasher.finalize();
    let mut key = [0u8; 32];
    key.copy_from_slice(&digest[..32]);
    ChaCha8Rng::from_seed(key)
}

/// Generator for the `index`-th child of substream `name`, e.g. one per sampling chunk.
pub fn indexed_substream(seed: u64, name: &str, index: u64) -> Rng {
    substream(seed, &format!("{name}#{index}"))
}

/// Plain seeded generator, for tests and callers that manage their own streams.
pub fn seeded(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
