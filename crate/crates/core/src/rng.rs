//! Deterministic, splittable random streams.
//!
//! A [`StreamKey`] names a position in a tree of streams: the root is the
//! user seed and every child is addressed by a `(label, index)` pair, e.g.
//! `("phase1", r)` or `("bootstrap", b)`. Keys are hashed with SHA-256 and the
//! digest seeds a ChaCha8 generator, so a stream depends only on its logical
//! address and never on the order in which parallel workers consume it.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct StreamKey {
    seed: u64,
    digest: [u8; 32],
}

impl std::fmt::Debug for StreamKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let hex: String = self.digest[..8].iter().map(|b| format!("{b:02x}")).collect();
        write!(f, "StreamKey(seed={}, {hex}..)", self.seed)
    }
}

impl StreamKey {
    pub fn root(seed: u64) -> Self {
        let mut h = Sha256::new();
        h.update(b"rlevss/root");
        h.update(seed.to_le_bytes());
        Self {
            seed,
            digest: h.finalize().into(),
        }
    }

    /// Child key at `(label, index)`. Pure: the same inputs always give the
    /// same key.
    pub fn derive(&self, label: &str, index: u64) -> Self {
        let mut h = Sha256::new();
        h.update(self.digest);
        h.update((label.len() as u64).to_le_bytes());
        h.update(label.as_bytes());
        h.update(index.to_le_bytes());
        Self {
            seed: self.seed,
            digest: h.finalize().into(),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self) -> Stream {
        Stream {
            inner: ChaCha8Rng::from_seed(self.digest),
        }
    }
}

/// A random stream owned by a single worker.
#[derive(Clone, Debug)]
pub struct Stream {
    inner: ChaCha8Rng,
}

impl Stream {
    /// Uniform draw in `[0, 1)` with 53 bits of precision.
    pub fn uniform(&mut self) -> f64 {
        self.inner.random::<f64>()
    }

    /// Uniform integer in `0..n`. Panics if `n == 0`.
    pub fn below(&mut self, n: usize) -> usize {
        self.inner.random_range(0..n)
    }

    pub fn normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.inner)
    }

    pub fn chisquare(&mut self, df: f64) -> Result<f64> {
        if !(df > 0.0) || !df.is_finite() {
            return Err(Error::InvalidParam(format!(
                "chi-square degrees of freedom must be positive, got {df}"
            )));
        }
        let dist = ChiSquared::new(df).map_err(|e| Error::InvalidParam(e.to_string()))?;
        Ok(dist.sample(&mut self.inner))
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }
}
