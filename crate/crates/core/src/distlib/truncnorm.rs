//! Normal distribution truncated (and renormalized) to `[0, 1]`.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use statrs::distribution::{ContinuousCDF, Normal};
use statrs::function::erf::erfc;

use crate::rng::RandomStream;

fn pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * PI).sqrt()
}

fn cdf(z: f64) -> f64 {
    0.5 * erfc(-z * FRAC_1_SQRT_2)
}

fn upper_tail(z: f64) -> f64 {
    0.5 * erfc(z * FRAC_1_SQRT_2)
}

fn quantile(p: f64) -> f64 {
    Normal::standard().inverse_cdf(p)
}

/// Standard-normal mass in `[lo, hi]`, computed on the side that avoids
/// cancellation.
pub(crate) fn interval_mass(lo: f64, hi: f64) -> f64 {
    if lo >= 0.0 {
        upper_tail(lo) - upper_tail(hi)
    } else if hi <= 0.0 {
        cdf(hi) - cdf(lo)
    } else {
        1.0 - cdf(lo) - upper_tail(hi)
    }
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct TruncatedNormal {
    loc: f64,
    scale: f64,
    lo: f64,
    hi: f64,
    mass: f64,
}

impl TruncatedNormal {
    pub(crate) fn new(loc: f64, scale: f64) -> Self {
        let lo = (0.0 - loc) / scale;
        let hi = (1.0 - loc) / scale;
        Self {
            loc,
            scale,
            lo,
            hi,
            mass: interval_mass(lo, hi),
        }
    }

    pub(crate) fn mass(&self) -> f64 {
        self.mass
    }

    pub(crate) fn mean(&self) -> f64 {
        let r = (pdf(self.lo) - pdf(self.hi)) / self.mass;
        (self.loc + self.scale * r).clamp(0.0, 1.0)
    }

    pub(crate) fn variance(&self) -> f64 {
        let r = (pdf(self.lo) - pdf(self.hi)) / self.mass;
        let s = (tail_term(self.lo) - tail_term(self.hi)) / self.mass;
        (self.scale * self.scale * (1.0 + s - r * r)).max(0.0)
    }

    pub(crate) fn density(&self, x: f64) -> f64 {
        if !(0.0..=1.0).contains(&x) {
            return 0.0;
        }
        pdf((x - self.loc) / self.scale) / (self.scale * self.mass)
    }

    pub(crate) fn sample(&self, stream: &mut RandomStream) -> f64 {
        // open interval keeps the quantile finite
        let u = (stream.uniform() * (1.0 - 2e-16) + 1e-16).min(1.0 - 1e-16);
        let z = if self.lo >= 0.0 {
            // work in the upper tail: Q(z) = Q(lo) - u * mass
            let q = upper_tail(self.lo) - u * self.mass;
            -quantile(q.max(f64::MIN_POSITIVE))
        } else {
            let p = cdf(self.lo) + u * self.mass;
            quantile(p.min(1.0 - f64::EPSILON / 2.0))
        };
        (self.loc + self.scale * z.clamp(self.lo, self.hi)).clamp(0.0, 1.0)
    }

    pub(crate) fn breakpoints(&self) -> Vec<f64> {
        [-6.0, -3.0, -1.0, 0.0, 1.0, 3.0, 6.0]
            .iter()
            .map(|k| self.loc + k * self.scale)
            .collect()
    }
}

/// `z * phi(z)`, which vanishes at infinite truncation points.
fn tail_term(z: f64) -> f64 {
    if z.is_finite() {
        z * pdf(z)
    } else {
        0.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn untruncated_limit() {
        let t = TruncatedNormal::new(0.5, 0.01);
        assert!((t.mass() - 1.0).abs() < 1e-12);
        assert!((t.mean() - 0.5).abs() < 1e-12);
        assert!((t.variance() - 1e-4).abs() < 1e-12);
    }

    #[test]
    fn half_normal_mean() {
        // truncation at the mode: mean = loc + scale * sqrt(2/pi) when the
        // upper bound is far away
        let t = TruncatedNormal::new(0.0, 0.1);
        let expected = 0.1 * (2.0 / PI).sqrt();
        assert!((t.mean() - expected).abs() < 1e-12);
        assert!((t.mass() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn samples_stay_in_window_far_tail() {
        let t = TruncatedNormal::new(-0.5, 0.1);
        let mut s = RandomStream::new(3);
        for _ in 0..10_000 {
            let x = t.sample(&mut s);
            assert!((0.0..=1.0).contains(&x));
        }
    }
}
