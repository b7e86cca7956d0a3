//! Seed plumbing. Every random draw in the crate comes from a ChaCha stream
//! keyed by an explicit seed, so results never depend on scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use xxhash_rust::xxh64::Xxh64;

/// Canonical byte encoder feeding a stable 64-bit digest.
#[derive(Clone)]
pub struct StableHasher(Xxh64);

impl StableHasher {
    pub fn new() -> Self {
        StableHasher(Xxh64::new(0))
    }

    pub fn u64(mut self, v: u64) -> Self {
        self.0.update(&v.to_le_bytes());
        self
    }

    pub fn u8(mut self, v: u8) -> Self {
        self.0.update(&[v]);
        self
    }

    /// Length-prefixed, so `("ab", "c")` and `("a", "bc")` differ.
    pub fn str(mut self, s: &str) -> Self {
        self.0.update(&(s.len() as u64).to_le_bytes());
        self.0.update(s.as_bytes());
        self
    }

    pub fn bytes(mut self, b: &[u8]) -> Self {
        self.0.update(&(b.len() as u64).to_le_bytes());
        self.0.update(b);
        self
    }

    pub fn finish(&self) -> u64 {
        self.0.digest()
    }
}

impl Default for StableHasher {
    fn default() -> Self {
        Self::new()
    }
}

/// Independent stream for one purpose under one seed.
pub fn stream(seed: u64, purpose: &str) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(StableHasher::new().u64(seed).str(purpose).finish())
}

pub fn sub_seed(seed: u64, purpose: &str) -> u64 {
    StableHasher::new().u64(seed).str(purpose).finish()
}

/// Uniform value in `[0, 1)` from a lattice coordinate, used for noise fields.
#[inline]
pub fn lattice_uniform(seed: u64, i: i64, j: i64) -> f64 {
    let mut buf = [0u8; 24];
    buf[..8].copy_from_slice(&seed.to_le_bytes());
    buf[8..16].copy_from_slice(&i.to_le_bytes());
    buf[16..].copy_from_slice(&j.to_le_bytes());
    let h = xxhash_rust::xxh64::xxh64(&buf, 0);
    (h >> 11) as f64 / (1u64 << 53) as f64
}
