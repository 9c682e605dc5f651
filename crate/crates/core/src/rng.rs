//! Named random streams derived from one master seed.
//!
//! `stream(seed, name)` seeds a ChaCha20 generator with
//! `SHA-256("privcode/stream/v1" || seed as u64 LE || name)`. Streams with
//! different names are independent for all practical purposes, and a stream is
//! a pure function of `(seed, name)`.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use sha2::{Digest, Sha256};

pub const INIT: &str = "init";
pub const SHUFFLE: &str = "shuffle";
pub const POISSON: &str = "poisson";
pub const NOISE: &str = "noise";
pub const DATAGEN: &str = "datagen";
pub const SPLIT: &str = "split";

pub fn derive_seed(master: u64, name: &str) -> [u8; 32] {
    let mut hasher = Sha256::new();
    hasher.update(b"privcode/stream/v1");
    hasher.update(master.to_le_bytes());
    hasher.update(name.as_bytes());
    hasher.finalize().into()
}

pub fn stream(master: u64, name: &str) -> ChaCha20Rng {
    ChaCha20Rng::from_seed(derive_seed(master, name))
}

/// Derives a child master seed, used when one component needs several streams of its own.
pub fn child_seed(master: u64, name: &str) -> u64 {
    let bytes = derive_seed(master, name);
    u64::from_le_bytes(bytes[..8].try_into().expect("8 bytes"))
}
