//! Deterministic random substreams.
//!
//! Every independent unit of work (a rollout, a sweep cell, an outer NPG
//! iteration) draws from its own ChaCha stream whose key is the SHA-256 of the
//! master seed, a purpose tag and the unit's coordinates. Results therefore do
//! not depend on scheduling or on the number of workers.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

pub type StreamRng = ChaCha8Rng;

/// Derives a 32-byte stream key from `(master, tag, coords)`.
pub fn substream_key(master: u64, tag: &str, coords: &[u64]) -> [u8; 32] {
    let mut hasher = Sha256::new();
    hasher.update(master.to_le_bytes());
    hasher.update((tag.len() as u64).to_le_bytes());
    hasher.update(tag.as_bytes());
    for c in coords {
        hasher.update(c.to_le_bytes());
    }
    let digest = hasher.finalize();
    let mut key = [0u8; 32];
    key.copy_from_slice(&digest);
    key
}

pub fn substream(master: u64, tag: &str, coords: &[u64]) -> StreamRng {
    StreamRng::from_seed(substream_key(master, tag, coords))
}

/// Derives a child seed, for APIs that take a `u64` master seed.
pub fn child_seed(master: u64, tag: &str, coords: &[u64]) -> u64 {
    let key = substream_key(master, tag, coords);
    u64::from_le_bytes(key[..8].try_into().expect("8 bytes"))
}

/// Inverse-CDF draw from a probability vector.
///
/// Rounding slack at the top end falls on the last index with positive mass.
pub fn sample_categorical<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut last = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p <= 0.0 {
            continue;
        }
        acc += p;
        last = i;
        if u < acc {
            return i;
        }
    }
    last
}
