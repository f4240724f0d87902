//! Content hashing and seed-keyed random streams.
//!
//! Every random draw in the pipeline comes from a stream keyed by the hash
//! of the global seed and the identity of the thing being drawn for, so
//! results never depend on processing order or thread scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

pub fn sha256(bytes: &[u8]) -> [u8; 32] {
    let mut out = [0u8; 32];
    out.copy_from_slice(&Sha256::digest(bytes));
    out
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(sha256(bytes))
}

/// Length-prefixed concatenation of `parts` behind the seed, so distinct
/// part lists never produce the same material.
pub fn seed_material(seed: u64, parts: &[&str]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + parts.iter().map(|p| p.len() + 8).sum::<usize>());
    out.extend_from_slice(&seed.to_le_bytes());
    for part in parts {
        out.extend_from_slice(&(part.len() as u64).to_le_bytes());
        out.extend_from_slice(part.as_bytes());
    }
    out
}

pub fn keyed_rng(material: &[u8]) -> ChaCha8Rng {
    ChaCha8Rng::from_seed(sha256(material))
}

/// A uniform value in `[0, 1)` keyed by `(seed, parts)`.
pub fn keyed_unit(seed: u64, parts: &[&str]) -> f64 {
    let digest = sha256(&seed_material(seed, parts));
    let mut word = [0u8; 8];
    word.copy_from_slice(&digest[..8]);
    (u64::from_le_bytes(word) >> 11) as f64 / (1u64 << 53) as f64
}
