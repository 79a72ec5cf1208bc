//! Counter-based random number streams.
//!
//! Every simulation path owns a [`Stream`] keyed by `(master seed, stream id)`.
//! The generator is a pure function of `(key, counter)` — a SplitMix-style
//! Weyl sequence pushed through a 64-bit finalizer — so results are identical
//! no matter how paths are scheduled across threads.

/// murmur3 fmix64 finalizer.
#[inline]
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 33)).wrapping_mul(0xff51_afd7_ed55_8ccd);
    z = (z ^ (z >> 33)).wrapping_mul(0xc4ce_b9fe_1a85_ec53);
    z ^ (z >> 33)
}

const GOLDEN_GAMMA: u64 = 0x9e37_79b9_7f4a_7c15;

/// A deterministic random stream addressed by `(master_seed, stream_id)`.
#[derive(Debug, Clone)]
pub struct Stream {
    base: u64,
    gamma: u64,
    counter: u64,
    normal_spare: Option<f64>,
}

impl Stream {
    pub fn new(master_seed: u64, stream_id: u64) -> Self {
        let base = mix64(master_seed ^ mix64(stream_id.wrapping_add(GOLDEN_GAMMA)));
        // Per-stream odd increment decorrelates streams sharing a master seed.
        let gamma = mix64(stream_id.wrapping_mul(GOLDEN_GAMMA) ^ master_seed.rotate_left(17)) | 1;
        Stream { base, gamma, counter: 0, normal_spare: None }
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        self.counter = self.counter.wrapping_add(1);
        mix64(self.base.wrapping_add(self.counter.wrapping_mul(self.gamma)))
    }

    /// Uniform draw on the open interval (0, 1); never returns 0 or 1,
    /// so `ln(u)` is always finite.
    #[inline]
    pub fn uniform(&mut self) -> f64 {
        ((self.next_u64() >> 11) as f64 + 0.5) * (1.0 / 9_007_199_254_740_992.0)
    }

    /// Exponential draw with the given rate (mean 1/rate).
    #[inline]
    pub fn exp(&mut self, rate: f64) -> f64 {
        debug_assert!(rate > 0.0);
        -self.uniform().ln() / rate
    }

    /// Standard normal via Box–Muller; the second draw of each pair is cached.
    pub fn normal(&mut self) -> f64 {
        if let Some(z) = self.normal_spare.take() {
            return z;
        }
        let r = (-2.0 * self.uniform().ln()).sqrt();
        let theta = 2.0 * std::f64::consts::PI * self.uniform();
        self.normal_spare = Some(r * theta.sin());
        r * theta.cos()
    }

    /// Number of failures-plus-one for success probability `p`, i.e. a draw
    /// from the geometric law on {1, 2, ...} with mean 1/p.
    pub fn geometric(&mut self, p: f64) -> u64 {
        debug_assert!(p > 0.0 && p <= 1.0);
        if p >= 1.0 {
            return 1;
        }
        let u = self.uniform();
        let k = (u.ln() / (1.0 - p).ln()).floor() as u64;
        k + 1
    }

    /// Categorical draw: index j with probability `weights[j] / sum(weights)`.
    /// Weights must be nonnegative with a positive sum.
    pub fn categorical(&mut self, weights: &[f64]) -> usize {
        let total: f64 = weights.iter().sum();
        let mut u = self.uniform() * total;
        for (j, &w) in weights.iter().enumerate() {
            u -= w;
            if u <= 0.0 {
                return j;
            }
        }
        weights.len() - 1
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_per_key() {
        let mut a = Stream::new(42, 7);
        let mut b = Stream::new(42, 7);
        for _ in 0..1000 {
            assert_eq!(a.next_u64(), b.next_u64());
        }
    }

    #[test]
    fn streams_differ() {
        let mut a = Stream::new(42, 7);
        let mut b = Stream::new(42, 8);
        let same = (0..1000).filter(|_| a.next_u64() == b.next_u64()).count();
        assert_eq!(same, 0);
    }

    #[test]
    fn uniform_moments() {
        let mut s = Stream::new(1, 0);
        let n = 200_000;
        let (mut m1, mut m2) = (0.0, 0.0);
        for _ in 0..n {
            let u = s.uniform();
            assert!(u > 0.0 && u < 1.0);
            m1 += u;
            m2 += u * u;
        }
        m1 /= n as f64;
        m2 /= n as f64;
        // mean 1/2 and second moment 1/3, each within 5 standard errors
        assert!((m1 - 0.5).abs() < 5.0 * (1.0 / 12.0f64 / n as f64).sqrt());
        assert!((m2 - 1.0 / 3.0).abs() < 5.0 * 0.01);
    }

    #[test]
    fn exponential_mean() {
        let mut s = Stream::new(3, 1);
        let n = 100_000;
        let mean: f64 = (0..n).map(|_| s.exp(2.0)).sum::<f64>() / n as f64;
        assert!((mean - 0.5).abs() < 5.0 * 0.5 / (n as f64).sqrt());
    }

    #[test]
    fn normal_moments() {
        let mut s = Stream::new(5, 2);
        let n = 200_000;
        let (mut m1, mut m2) = (0.0, 0.0);
        for _ in 0..n {
            let z = s.normal();
            m1 += z;
            m2 += z * z;
        }
        m1 /= n as f64;
        m2 /= n as f64;
        assert!(m1.abs() < 5.0 / (n as f64).sqrt());
        assert!((m2 - 1.0).abs() < 5.0 * (2.0f64 / n as f64).sqrt());
    }

    #[test]
    fn geometric_mean() {
        let mut s = Stream::new(9, 4);
        let n = 100_000;
        let mean: f64 = (0..n).map(|_| s.geometric(0.25) as f64).sum::<f64>() / n as f64;
        // mean 4, sd sqrt(1-p)/p = 3.46
        assert!((mean - 4.0).abs() < 5.0 * 3.47 / (n as f64).sqrt());
    }
}
