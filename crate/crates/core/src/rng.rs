//! Seeded, splittable random streams.
//!
//! Every stochastic step in the crate (initialization, shuffles, dropout
//! masks, unobserved-pair sampling) draws from an [`RngStream`]. Child
//! streams are derived from the parent *seed* and a label, never from the
//! parent's consumed state, so adding draws in one component cannot shift
//! the numbers another component sees.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone)]
pub struct RngStream {
    seed: u64,
    inner: ChaCha8Rng,
}

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes
        .iter()
        .fold(FNV_OFFSET, |h, &b| (h ^ u64::from(b)).wrapping_mul(FNV_PRIME))
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

impl RngStream {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            inner: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Child stream keyed by `label`. Depends only on this stream's seed.
    pub fn split(&self, label: &str) -> Self {
        Self::new(splitmix64(self.seed ^ splitmix64(fnv1a(label.as_bytes()))))
    }

    /// Child stream keyed by `label` and an index (rounds, seeds, shards).
    pub fn split_indexed(&self, label: &str, index: u64) -> Self {
        let child = self.split(label);
        Self::new(splitmix64(child.seed ^ splitmix64(index.wrapping_add(1))))
    }

    /// Uniform draw in `[0, 1)` with 53 bits of precision.
    pub fn next_f64(&mut self) -> f64 {
        (self.inner.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform index in `0..n` (Lemire's method, unbiased). `n` must be > 0.
    pub fn below(&mut self, n: usize) -> usize {
        assert!(n > 0, "below(0)");
        let n = n as u64;
        loop {
            let m = u128::from(self.inner.next_u64()) * u128::from(n);
            let low = m as u64;
            if low >= n || low >= n.wrapping_neg() % n {
                return (m >> 64) as usize;
            }
        }
    }

    /// Fisher-Yates shuffle.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i + 1);
            items.swap(i, j);
        }
    }

    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.next_f64() < p
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dest: &mut [u8]) {
        self.inner.fill_bytes(dest)
    }

    fn try_fill_bytes(&mut self, dest: &mut [u8]) -> Result<(), rand::Error> {
        self.inner.try_fill_bytes(dest)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_sequence() {
        let mut a = RngStream::new(42);
        let mut b = RngStream::new(42);
        for _ in 0..100 {
            assert_eq!(a.next_u64(), b.next_u64());
        }
    }

    #[test]
    fn split_ignores_parent_consumption() {
        let fresh = RngStream::new(9);
        let mut used = RngStream::new(9);
        for _ in 0..17 {
            used.next_u64();
        }
        assert_eq!(fresh.split("dropout").next_f64(), used.split("dropout").next_f64());
    }

    #[test]
    fn sibling_streams_differ() {
        let root = RngStream::new(1);
        let mut a = root.split("a");
        let mut b = root.split("b");
        let xs: Vec<u64> = (0..8).map(|_| a.next_u64()).collect();
        let ys: Vec<u64> = (0..8).map(|_| b.next_u64()).collect();
        assert_ne!(xs, ys);
        assert_ne!(root.split_indexed("r", 0).seed(), root.split_indexed("r", 1).seed());
    }

    #[test]
    fn below_is_in_range_and_roughly_uniform() {
        let mut r = RngStream::new(3);
        let mut counts = [0usize; 5];
        for _ in 0..50_000 {
            counts[r.below(5)] += 1;
        }
        for c in counts {
            // 10_000 expected, sd ~ 89
            assert!((c as f64 - 10_000.0).abs() < 450.0, "{counts:?}");
        }
    }

    #[test]
    fn unit_draws_in_half_open_interval() {
        let mut r = RngStream::new(5);
        for _ in 0..10_000 {
            let x = r.next_f64();
            assert!((0.0..1.0).contains(&x));
        }
    }
}
