//! Deterministic randomness for the whole crate: a ChaCha8 stream plus the
//! handful of derived draws we need (uniform index, unit interval, normal,
//! shuffle). Keeping the derivations hand-rolled pins the exact draw sequence
//! across platforms and dependency upgrades, which the reproducibility
//! guarantees rely on.

use alloc::vec::Vec;
use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Seeded generator. Independent substreams (per epoch, per episode) come
/// from ChaCha's stream parameter, never from reseeding arithmetic on the
/// user's seed.
pub struct SeededRng {
    inner: ChaCha8Rng,
}

impl SeededRng {
    pub fn new(seed: u64) -> Self {
        SeededRng {
            inner: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// Substream `stream` of the generator seeded with `seed`.
    pub fn with_stream(seed: u64, stream: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(stream);
        SeededRng { inner }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform draw from `(0, 1]` with 53 bits of precision. The interval is
    /// half-open at zero so `ln(u)` is always finite.
    pub fn unit_open(&mut self) -> f64 {
        (((self.next_u64() >> 11) + 1) as f64) / (1u64 << 53) as f64
    }

    /// Uniform draw from `[lo, hi)`.
    pub fn range(&mut self, lo: f64, hi: f64) -> f64 {
        let u = ((self.next_u64() >> 11) as f64) / (1u64 << 53) as f64;
        lo + (hi - lo) * u
    }

    /// Unbiased uniform index in `[0, n)` by rejection. Panics if `n == 0`.
    pub fn below(&mut self, n: usize) -> usize {
        assert!(n > 0, "below(0) is undefined");
        let bound = n as u64;
        // 2^64 mod bound; draws below this threshold would bias the result.
        let threshold = (u64::MAX % bound + 1) % bound;
        loop {
            let r = self.next_u64();
            if r >= threshold {
                return (r % bound) as usize;
            }
        }
    }

    pub fn coin(&mut self) -> bool {
        self.next_u64() & 1 == 1
    }

    /// Standard normal via Box-Muller on two `(0, 1]` draws.
    pub fn normal(&mut self) -> f64 {
        use num_traits::Float;
        let u1 = self.unit_open();
        let u2 = self.unit_open();
        let r = (-2.0 * Float::ln(u1)).sqrt();
        r * Float::cos(2.0 * core::f64::consts::PI * u2)
    }

    /// In-place Fisher-Yates shuffle.
    pub fn shuffle<E>(&mut self, xs: &mut [E]) {
        for i in (1..xs.len()).rev() {
            let j = self.below(i + 1);
            xs.swap(i, j);
        }
    }

    /// Seeded permutation of `0..n`.
    pub fn permutation(&mut self, n: usize) -> Vec<usize> {
        let mut ids: Vec<usize> = (0..n).collect();
        self.shuffle(&mut ids);
        ids
    }

    /// `k` distinct indices from `0..n`: the first `k` entries of a seeded
    /// permutation. Panics if `k > n`.
    pub fn choose_k(&mut self, n: usize, k: usize) -> Vec<usize> {
        assert!(k <= n, "choose_k: k={k} exceeds n={n}");
        let mut perm = self.permutation(n);
        perm.truncate(k);
        perm
    }
}
