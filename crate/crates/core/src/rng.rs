//! Deterministic random streams derived from a run seed.
//!
//! Every randomized operation draws from an explicit [`RngStream`], and the
//! pipeline derives one independent stream per `(seed, sample_id, spec_index)`
//! triple. Scheduling therefore cannot change results: a sample's draws are
//! the same no matter which worker processes it, or in what order.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use sha2::{Digest, Sha256};

const STREAM_DOMAIN: &[u8] = b"boxaug.stream.v1";

/// Counter-based stream keyed by a stable hash of its identity.
#[derive(Debug, Clone)]
pub struct RngStream {
    rng: ChaCha8Rng,
    draws: u64,
}

impl RngStream {
    pub fn from_seed_bytes(seed: [u8; 32]) -> Self {
        Self {
            rng: ChaCha8Rng::from_seed(seed),
            draws: 0,
        }
    }

    /// Number of draws taken so far, recorded in pipeline provenance.
    pub fn draw_count(&self) -> u64 {
        self.draws
    }

    pub fn next_u64(&mut self) -> u64 {
        self.draws += 1;
        self.rng.next_u64()
    }

    /// Uniform in `[0, 1)` with 53 bits of precision.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in `[lo, hi)`; returns `lo` when the range is empty.
    pub fn next_in_range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + self.next_f64() * (hi - lo)
    }

    /// Uniform index in `0..n`. `n` must be at least 1.
    pub fn next_index(&mut self, n: usize) -> usize {
        assert!(n >= 1, "cannot draw from an empty range");
        ((self.next_f64() * n as f64) as usize).min(n - 1)
    }

    /// Uniformly chosen element of a non-empty slice.
    pub fn choose<'a, T>(&mut self, items: &'a [T]) -> &'a T {
        &items[self.next_index(items.len())]
    }
}

/// Derive the stream for one `(seed, sample_id, spec_index)` triple.
///
/// Distinct triples yield independent streams; the same triple always
/// yields the same stream.
pub fn derive_stream(seed: u64, sample_id: &str, spec_index: u32) -> RngStream {
    let mut hasher = Sha256::new();
    hasher.update(STREAM_DOMAIN);
    hasher.update(seed.to_le_bytes());
    hasher.update((sample_id.len() as u64).to_le_bytes());
    hasher.update(sample_id.as_bytes());
    hasher.update(spec_index.to_le_bytes());
    let digest = hasher.finalize();
    let mut seed_bytes = [0u8; 32];
    seed_bytes.copy_from_slice(&digest);
    RngStream::from_seed_bytes(seed_bytes)
}
