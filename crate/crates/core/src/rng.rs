//! Deterministic random streams.
//!
//! Every stream is a ChaCha8 generator. A stream for block `(a, b)` of a
//! network with master seed `s` is seeded with
//! `splitmix64(s ^ splitmix64((a << 32) | b))`, so the draws for one block
//! depend only on the master seed and the block's type pair, never on which
//! other blocks are generated or in what order.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution, StandardNormal};

/// One step of the SplitMix64 sequence, used as a 64-bit mixing function.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// A seeded pseudorandom stream. Not `Sync`-shared: give each thread its own.
#[derive(Debug, Clone)]
pub struct RngStream {
    inner: ChaCha8Rng,
}

impl RngStream {
    pub fn from_seed(seed: u64) -> Self {
        Self {
            inner: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// Stream for one block pair, derived from the master seed and the pair.
    pub fn for_block(master_seed: u64, type_a: u32, type_b: u32) -> Self {
        let key = (u64::from(type_a) << 32) | u64::from(type_b);
        Self::from_seed(splitmix64(master_seed ^ splitmix64(key)))
    }

    /// Uniform draw on `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.inner.random::<f64>()
    }

    pub fn standard_normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.inner)
    }

    /// Draw from `N(0, variance)`; returns exactly 0 when the variance is 0.
    pub fn normal(&mut self, variance: f64) -> f64 {
        if variance == 0.0 {
            0.0
        } else {
            variance.sqrt() * self.standard_normal()
        }
    }

    /// Binomial(trials, p) draw. `p` is clamped to `[0, 1]`.
    pub fn binomial(&mut self, trials: u64, p: f64) -> u64 {
        let p = p.clamp(0.0, 1.0);
        if p == 0.0 || trials == 0 {
            return 0;
        }
        if p == 1.0 {
            return trials;
        }
        Binomial::new(trials, p)
            .expect("p is in (0, 1)")
            .sample(&mut self.inner)
    }

    /// Bernoulli(p) draw via a single uniform.
    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.uniform() < p
    }
}
