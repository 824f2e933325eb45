//! Seeded random streams.
//!
//! A stream is a xoshiro256++ generator whose state is expanded from a 64-bit
//! seed with SplitMix64. Each purpose (initialization, noise, masks, Fourier
//! matrices) gets its own stream by mixing an FNV-1a hash of its label into
//! the run seed, so changing how many draws one purpose makes never shifts
//! another purpose's values.

use rand::{Rng as _, RngCore, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;

/// Labels of the per-purpose streams used across the toolkit.
pub mod purpose {
    pub const INIT: &str = "init";
    pub const NOISE: &str = "noise";
    pub const MASK: &str = "mask";
    pub const FOURIER_B: &str = "fourier-b";
}

#[derive(Clone, Debug)]
pub struct Rng {
    inner: Xoshiro256PlusPlus,
    spare: Option<f64>,
}

fn fnv1a(label: &str) -> u64 {
    label.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3))
}

impl Rng {
    pub fn new(seed: u64, purpose: &str) -> Self {
        // seed_from_u64 expands the seed with SplitMix64.
        Self { inner: Xoshiro256PlusPlus::seed_from_u64(seed ^ fnv1a(purpose)), spare: None }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform on `[lo, hi)`.
    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        if lo == hi {
            return lo;
        }
        self.inner.random_range(lo..hi)
    }

    /// Standard normal draw via the Box–Muller transform.
    pub fn normal(&mut self) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        // u1 in (0, 1] keeps the log finite.
        let u1 = 1.0 - self.inner.random::<f64>();
        let u2 = self.inner.random::<f64>();
        let r = (-2.0 * u1.ln()).sqrt();
        let theta = 2.0 * std::f64::consts::PI * u2;
        self.spare = Some(r * theta.sin());
        r * theta.cos()
    }

    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.inner.random::<f64>() < p
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_and_purpose_repeat() {
        let mut a = Rng::new(7, purpose::INIT);
        let mut b = Rng::new(7, purpose::INIT);
        for _ in 0..100 {
            assert_eq!(a.next_u64(), b.next_u64());
        }
    }

    #[test]
    fn purposes_are_distinct_streams() {
        let mut a = Rng::new(7, purpose::INIT);
        let mut b = Rng::new(7, purpose::NOISE);
        let n = 20_000;
        let xs: Vec<f64> = (0..n).map(|_| a.uniform(-1.0, 1.0)).collect();
        let ys: Vec<f64> = (0..n).map(|_| b.uniform(-1.0, 1.0)).collect();
        assert_ne!(xs[..8], ys[..8]);
        let corr: f64 = xs.iter().zip(&ys).map(|(x, y)| x * y).sum::<f64>() / n as f64 / (1.0 / 3.0);
        assert!(corr.abs() < 0.05, "correlation {corr}");
    }

    #[test]
    fn box_muller_moments() {
        let mut r = Rng::new(1, purpose::NOISE);
        let n = 100_000;
        let xs: Vec<f64> = (0..n).map(|_| r.normal()).collect();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64;
        assert!(mean.abs() < 0.02);
        assert!((var - 1.0).abs() < 0.02);
    }
}
