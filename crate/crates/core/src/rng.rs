//! Reproducible random streams, one per traffic source.

use alloc::string::String;
use core::fmt;

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum RngError {
    InvalidRate(f64),
}

impl fmt::Display for RngError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RngError::InvalidRate(r) => write!(f, "rate must be > 0, got {r}"),
        }
    }
}

/// FNV-1a, used to turn a stream label into a ChaCha stream number.
fn label_hash(label: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in label.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// A named, independently seeded random stream. The same `(seed, stream_id)`
/// yields the same sequence on every platform.
#[derive(Clone, Debug)]
pub struct RngStream {
    seed: u64,
    stream_id: String,
    rng: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64, stream_id: &str) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(label_hash(stream_id));
        RngStream { seed, stream_id: String::from(stream_id), rng }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> &str {
        &self.stream_id
    }

    /// Uniform on `[0, 1)` with 53 bits of precision.
    pub fn uniform(&mut self) -> f64 {
        (self.rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform integer on `lo..=hi`.
    pub fn uniform_int(&mut self, lo: u64, hi: u64) -> u64 {
        debug_assert!(lo <= hi);
        let span = hi - lo + 1;
        if span == 0 {
            return self.rng.next_u64();
        }
        // Lemire's multiply-shift with rejection for an unbiased draw.
        let threshold = span.wrapping_neg() % span;
        loop {
            let x = self.rng.next_u64();
            let m = (x as u128) * (span as u128);
            if (m as u64) >= threshold {
                return lo + (m >> 64) as u64;
            }
        }
    }

    /// Exponential inter-arrival time in seconds with mean `1 / rate`.
    pub fn exp_draw(&mut self, rate: f64) -> Result<f64, RngError> {
        if !(rate > 0.0) || !rate.is_finite() {
            return Err(RngError::InvalidRate(rate));
        }
        // 1 - U lies in (0, 1], so the log is finite.
        let u = 1.0 - self.uniform();
        Ok(-libm::log(u) / rate)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec::Vec;

    #[test]
    fn exp_mean_matches_rate() {
        let mut s = RngStream::new(7, "ru0/urllc");
        let n = 1_000_000;
        let sum: f64 = (0..n).map(|_| s.exp_draw(1000.0).unwrap()).sum();
        let mean = sum / n as f64;
        assert!((mean - 1.0e-3).abs() < 0.01 * 1.0e-3, "mean {mean}");
    }

    #[test]
    fn non_positive_rate_is_rejected() {
        let mut s = RngStream::new(1, "x");
        assert_eq!(s.exp_draw(0.0), Err(RngError::InvalidRate(0.0)));
        assert_eq!(s.exp_draw(-3.0), Err(RngError::InvalidRate(-3.0)));
        assert!(s.exp_draw(f64::NAN).is_err());
    }

    #[test]
    fn same_seed_and_label_replays() {
        let draw = |seed, label| {
            let mut s = RngStream::new(seed, label);
            (0..32).map(|_| s.exp_draw(10.0).unwrap()).collect::<Vec<_>>()
        };
        assert_eq!(draw(42, "ru3/normal"), draw(42, "ru3/normal"));
        assert_ne!(draw(42, "ru3/normal"), draw(42, "ru4/normal"));
        assert_ne!(draw(42, "ru3/normal"), draw(43, "ru3/normal"));
    }

    #[test]
    fn uniform_int_stays_in_range() {
        let mut s = RngStream::new(3, "sizes");
        for _ in 0..10_000 {
            let v = s.uniform_int(64, 128);
            assert!((64..=128).contains(&v));
        }
        assert_eq!(s.uniform_int(5, 5), 5);
    }
}
