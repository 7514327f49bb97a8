//! Seedable, splittable random streams.
//!
//! Every stream is a ChaCha8 generator whose seed is a stable mix of a base
//! seed and a list of labels, so the stream for `(seed, "task", "method")`
//! is the same on every platform and in every scheduling order.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Stable 64-bit mix of a base seed and a sequence of labels.
pub fn mix_seed(base: u64, labels: &[&str]) -> u64 {
    let mut h = splitmix64(base);
    for label in labels {
        let mut f = FNV_OFFSET;
        for b in label.as_bytes() {
            f ^= u64::from(*b);
            f = f.wrapping_mul(FNV_PRIME);
        }
        // length-prefix so ("ab", "c") and ("a", "bc") differ
        h = splitmix64(h ^ splitmix64(f ^ label.len() as u64));
    }
    h
}

#[derive(Debug, Clone)]
pub struct RandomStream {
    rng: ChaCha8Rng,
}

impl RandomStream {
    pub fn new(seed: u64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// Stream keyed by a base seed and labels (e.g. task, seed index, method).
    pub fn derive(base: u64, labels: &[&str]) -> Self {
        Self::new(mix_seed(base, labels))
    }

    /// Child stream; consumes one draw from `self`.
    pub fn split(&mut self, label: &str) -> Self {
        let base = self.rng.next_u64();
        Self::derive(base, &[label])
    }

    /// Uniform draw in `[0, 1)` with 53 bits of precision.
    pub fn uniform(&mut self) -> f64 {
        (self.rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }
}

impl RngCore for RandomStream {
    fn next_u32(&mut self) -> u32 {
        self.rng.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.rng.fill_bytes(dst)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_keys_give_identical_streams() {
        let mut a = RandomStream::derive(7, &["beta", "3"]);
        let mut b = RandomStream::derive(7, &["beta", "3"]);
        for _ in 0..100 {
            assert_eq!(a.next_u64(), b.next_u64());
        }
    }

    #[test]
    fn label_boundaries_matter() {
        assert_ne!(mix_seed(1, &["ab", "c"]), mix_seed(1, &["a", "bc"]));
        assert_ne!(mix_seed(1, &["a"]), mix_seed(2, &["a"]));
    }

    #[test]
    fn uniform_in_unit_interval() {
        let mut s = RandomStream::new(0);
        for _ in 0..10_000 {
            let u = s.uniform();
            assert!((0.0..1.0).contains(&u));
        }
    }

    #[test]
    fn mix_is_pinned() {
        // pinned so accidental changes to the mixer break reproducibility loudly
        // value from an independent splitmix64/FNV-1a implementation
        assert_eq!(mix_seed(2026, &["task", "0"]), 14_858_972_506_481_229_849);
    }
}
