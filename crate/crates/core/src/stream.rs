//! Keyed deterministic random streams.
//!
//! Every random quantity in the crate is drawn from a [`Stream`] identified by
//! a key `(seed, purpose, indices)`. The key is hashed with SHA-256 into a
//! ChaCha12 key, so two different keys give statistically independent streams
//! and the same key gives the same sequence on every platform and under any
//! thread schedule.

use rand_chacha::ChaCha12Rng;
use rand_core::{RngCore, SeedableRng};
use sha2::{Digest, Sha256};
use statrs::distribution::{ContinuousCDF, Normal};

/// A reproducible stream of uniform and normal variates.
#[derive(Debug, Clone)]
pub struct Stream {
    rng: ChaCha12Rng,
    normal: Normal,
}

/// Derives the 256-bit key for `(seed, purpose, indices)`.
pub fn stream_key(seed: u64, purpose: &str, indices: &[u64]) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update(b"injlab-stream-v1");
    h.update(seed.to_le_bytes());
    h.update((purpose.len() as u64).to_le_bytes());
    h.update(purpose.as_bytes());
    h.update((indices.len() as u64).to_le_bytes());
    for i in indices {
        h.update(i.to_le_bytes());
    }
    h.finalize().into()
}

/// Opens the stream for `(seed, purpose, indices)`.
pub fn rng_stream(seed: u64, purpose: &str, indices: &[u64]) -> Stream {
    Stream::new(seed, purpose, indices)
}

impl Stream {
    pub fn new(seed: u64, purpose: &str, indices: &[u64]) -> Self {
        Stream {
            rng: ChaCha12Rng::from_seed(stream_key(seed, purpose, indices)),
            normal: Normal::standard(),
        }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    /// Uniform variate on the open interval (0, 1), with 53 random bits.
    pub fn uniform(&mut self) -> f64 {
        ((self.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
    }

    /// Standard normal variate by inversion of the uniform variate.
    pub fn normal(&mut self) -> f64 {
        let u = self.uniform();
        self.normal.inverse_cdf(u)
    }

    /// Fills `out` with standard normals.
    pub fn fill_normal(&mut self, out: &mut [f64]) {
        for x in out {
            *x = self.normal();
        }
    }
}
