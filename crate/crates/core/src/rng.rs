//! Counter-based random streams.
//!
//! Every simulated run gets its own generator keyed by `(seed, index)`, so a
//! run's randomness does not depend on which worker executes it or in what
//! order. The key is whitened with two rounds of the SplitMix64 finalizer and
//! the stream itself is a SplitMix64 sequence started from that key.

use rand_core::RngCore;

const GOLDEN_GAMMA: u64 = 0x9e37_79b9_7f4a_7c15;

#[inline]
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derive an independent 64-bit key from a parent key and a counter.
#[inline]
pub fn derive_key(seed: u64, index: u64) -> u64 {
    mix64(mix64(seed ^ GOLDEN_GAMMA).wrapping_add(mix64(index.wrapping_add(GOLDEN_GAMMA))))
}

#[derive(Debug, Clone)]
pub struct StreamRng {
    state: u64,
}

impl StreamRng {
    pub fn new(seed: u64, index: u64) -> Self {
        Self { state: derive_key(seed, index) }
    }

    /// Child stream `index` of this stream's current position.
    pub fn split(&mut self, index: u64) -> StreamRng {
        StreamRng::new(self.next_u64(), index)
    }

    /// Uniform on `[0, 1)` with 53 bits of resolution.
    #[inline]
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform on `(0, 1]`; safe to take logarithms of.
    #[inline]
    pub fn uniform_open0(&mut self) -> f64 {
        ((self.next_u64() >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform integer in `0..n`. `n` must be positive.
    #[inline]
    pub fn below(&mut self, n: u64) -> u64 {
        debug_assert!(n > 0);
        // Lemire's multiply-shift; the bias is < n / 2^64, far below anything
        // a simulation here could resolve.
        ((self.next_u64() as u128 * n as u128) >> 64) as u64
    }

    /// Number of failures before the first success of a Bernoulli(p) sequence.
    /// Returns `u64::MAX` when `p == 0`.
    #[inline]
    pub fn geometric(&mut self, p: f64) -> u64 {
        if p >= 1.0 {
            return 0;
        }
        if p <= 0.0 {
            return u64::MAX;
        }
        let g = (self.uniform_open0().ln() / (-p).ln_1p()).floor();
        if g >= u64::MAX as f64 {
            u64::MAX
        } else {
            g as u64
        }
    }
}

impl RngCore for StreamRng {
    #[inline]
    fn next_u32(&mut self) -> u32 {
        (self.next_u64() >> 32) as u32
    }

    #[inline]
    fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(GOLDEN_GAMMA);
        mix64(self.state)
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        for chunk in dst.chunks_mut(8) {
            let bytes = self.next_u64().to_le_bytes();
            chunk.copy_from_slice(&bytes[..chunk.len()]);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let a: Vec<u64> = (0..4).map(|_| StreamRng::new(42, 7).next_u64()).collect();
        assert!(a.windows(2).all(|w| w[0] == w[1]));
        let mut s1 = StreamRng::new(42, 7);
        let mut s2 = StreamRng::new(42, 8);
        let mut s3 = StreamRng::new(43, 7);
        let x = s1.next_u64();
        assert_ne!(x, s2.next_u64());
        assert_ne!(x, s3.next_u64());
    }

    #[test]
    fn uniform_moments() {
        let mut rng = StreamRng::new(1, 0);
        let n = 200_000;
        let (mut s, mut s2) = (0.0, 0.0);
        for _ in 0..n {
            let u = rng.uniform();
            assert!((0.0..1.0).contains(&u));
            s += u;
            s2 += u * u;
        }
        let mean = s / n as f64;
        let var = s2 / n as f64 - mean * mean;
        assert!((mean - 0.5).abs() < 0.005, "mean {mean}");
        assert!((var - 1.0 / 12.0).abs() < 0.002, "var {var}");
    }

    #[test]
    fn geometric_mean_matches() {
        let mut rng = StreamRng::new(3, 0);
        let p = 0.3;
        let n = 200_000;
        let mean = (0..n).map(|_| rng.geometric(p) as f64).sum::<f64>() / n as f64;
        assert!((mean - (1.0 - p) / p).abs() < 0.03, "mean {mean}");
        assert_eq!(rng.geometric(1.0), 0);
        assert_eq!(rng.geometric(0.0), u64::MAX);
    }

    #[test]
    fn below_is_in_range() {
        let mut rng = StreamRng::new(9, 9);
        let mut counts = [0usize; 5];
        for _ in 0..50_000 {
            counts[rng.below(5) as usize] += 1;
        }
        assert!(counts.iter().all(|&c| (9_000..11_000).contains(&c)), "{counts:?}");
    }
}
