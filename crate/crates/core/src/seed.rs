//! Deterministic seed derivation.
//!
//! Every random stream in the crate is a ChaCha8 generator whose seed is
//! derived from a user seed and a stream label, so adding a new stream never
//! perturbs an existing one.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

fn digest_u64(parts: &[&[u8]]) -> u64 {
    let mut hasher = Sha256::new();
    for part in parts {
        hasher.update((part.len() as u64).to_le_bytes());
        hasher.update(part);
    }
    let out = hasher.finalize();
    let mut bytes = [0u8; 8];
    bytes.copy_from_slice(&out[..8]);
    u64::from_le_bytes(bytes)
}

/// Sub-seed for the named stream.
pub fn derive_seed(seed: u64, stream: &str) -> u64 {
    digest_u64(&[&seed.to_le_bytes(), stream.as_bytes()])
}

/// Generator for the named stream.
pub fn stream_rng(seed: u64, stream: &str) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, stream))
}

/// Stable hash of `(key, seed)` mapped into `[0, 1)`.
pub fn unit_hash(key: &str, seed: u64) -> f64 {
    let h = digest_u64(&[&seed.to_le_bytes(), key.as_bytes()]);
    (h >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}
