//! Seed fan-out.
//!
//! Every random stream in a run derives from one master seed:
//! `derive(master, label)` is the first eight bytes (little-endian) of
//! `SHA-256(master.to_le_bytes() || label)`. Labels name the purpose, e.g.
//! `"probe-sample"` or `"spearman-perm/3"`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

pub fn derive(master: u64, label: &str) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(master.to_le_bytes());
    hasher.update(label.as_bytes());
    let digest = hasher.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("digest has 32 bytes"))
}

pub fn rng(master: u64, label: &str) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive(master, label))
}
