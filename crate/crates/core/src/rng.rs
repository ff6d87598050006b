//! Counter-based random streams keyed by `(master seed, label)`.
//!
//! Each stream is a ChaCha8 generator whose key is the SHA-256 digest of the
//! seed and the label, so independent parts of an experiment draw from
//! independent reproducible streams no matter which order they run in.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use sha2::{Digest, Sha256};

use crate::Vector;

pub type StreamRng = ChaCha8Rng;

pub fn stream(seed: u64, label: &str) -> StreamRng {
    let mut hasher = Sha256::new();
    hasher.update(seed.to_le_bytes());
    hasher.update((label.len() as u64).to_le_bytes());
    hasher.update(label.as_bytes());
    let key: [u8; 32] = hasher.finalize().into();
    ChaCha8Rng::from_seed(key)
}

/// Stream for the `index`-th member of a family (trial, cell, sample batch).
pub fn substream(seed: u64, label: &str, index: u64) -> StreamRng {
    stream(seed, &format!("{label}#{index}"))
}

/// Derive a child seed, for handing to operations that take a plain seed.
pub fn derive_seed(seed: u64, label: &str) -> u64 {
    use rand::RngCore;
    stream(seed, label).next_u64()
}

pub fn gaussian_vector<R: rand::Rng + ?Sized>(rng: &mut R, n: usize) -> Vector {
    Vector::from_iterator(n, (0..n).map(|_| StandardNormal.sample(rng)))
}

pub fn gaussian<R: rand::Rng + ?Sized>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}
