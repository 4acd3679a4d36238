use rand::{Rng as _, RngCore, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;

/// Deterministic random number generator.
///
/// The algorithm is xoshiro256++ (256-bit state). A `u64` seed is expanded
/// into the full state with SplitMix64, so a given seed yields the same stream
/// on every platform.
#[derive(Debug, Clone)]
pub struct Rng {
    inner: Xoshiro256PlusPlus,
}

impl Rng {
    pub fn seed_from_u64(seed: u64) -> Self {
        Self {
            inner: Xoshiro256PlusPlus::seed_from_u64(seed),
        }
    }

    /// Child generator keyed by a stable tag, see [`derive_seed`].
    pub fn child(seed: u64, tag: &str) -> Self {
        Self::seed_from_u64(derive_seed(seed, tag))
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform in `[0, 1)` with 53 bits of precision.
    pub fn unit(&mut self) -> f64 {
        self.inner.random::<f64>()
    }

    /// Uniform in `[lo, hi)`.
    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.unit()
    }

    /// Uniform integer in `0..n`. Panics if `n == 0`.
    pub fn below(&mut self, n: usize) -> usize {
        self.inner.random_range(0..n)
    }

    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.unit() < p
    }
}

/// Child seed derivation: FNV-1a over the tag bytes, combined with the root
/// seed and passed through the SplitMix64 finalizer.
pub fn derive_seed(root: u64, tag: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in tag.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    let mut z = root ^ h.rotate_left(17);
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_stream() {
        let mut a = Rng::seed_from_u64(42);
        let mut b = Rng::seed_from_u64(42);
        for _ in 0..100 {
            assert_eq!(a.next_u64(), b.next_u64());
        }
    }

    #[test]
    fn stream_is_pinned() {
        // Guards against silent algorithm changes in dependencies.
        let mut r = Rng::seed_from_u64(0);
        let first: Vec<u64> = (0..3).map(|_| r.next_u64()).collect();
        let mut again = Rng::seed_from_u64(0);
        assert_eq!(first, (0..3).map(|_| again.next_u64()).collect::<Vec<_>>());
        assert_eq!(first[0], PINNED_FIRST);
    }

    const PINNED_FIRST: u64 = 5987356902031041503;

    #[test]
    fn derived_seeds_differ_by_tag() {
        assert_ne!(derive_seed(7, "init"), derive_seed(7, "data"));
        assert_ne!(derive_seed(7, "init"), derive_seed(8, "init"));
        assert_eq!(derive_seed(7, "init"), derive_seed(7, "init"));
    }

    #[test]
    fn uniform_respects_bounds() {
        let mut r = Rng::seed_from_u64(3);
        for _ in 0..1000 {
            let u = r.uniform(-2.0, 5.0);
            assert!((-2.0..5.0).contains(&u));
        }
    }
}
