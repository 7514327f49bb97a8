//! Optimal importance-sampling baseline for mean estimation.
//!
//! The variance-minimizing proposal for estimating `E[X]` is
//! `q*(x) = |x - mu| p(x) / Z` with `Z = E|X - mu|`. Draws come from rejection
//! sampling against a uniform proposal on `[0, 1]`.

use crate::distlib::DistributionSpec;
use crate::error::{Error, Result};
use crate::quadrature;
use crate::rng::RandomStream;

pub const DEFAULT_RETRY_CAP: usize = 1_000_000;
pub const ENVELOPE_GRID_POINTS: usize = 10_001;
pub const ENVELOPE_SAFETY: f64 = 1.1;
const Z_ABS_TOL: f64 = 1e-10;
const Z_REL_TOL: f64 = 1e-8;
const MIN_NORMALIZER: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct OptimalProposal {
    target: DistributionSpec,
    target_mean: f64,
    normalizer: f64,
    envelope: f64,
}

impl OptimalProposal {
    pub fn target(&self) -> &DistributionSpec {
        &self.target
    }

    pub fn target_mean(&self) -> f64 {
        self.target_mean
    }

    /// `Z = E|X - mu|`.
    pub fn normalizer(&self) -> f64 {
        self.normalizer
    }

    pub fn envelope(&self) -> f64 {
        self.envelope
    }

    /// `q*(x)`; zero outside `[0, 1]`.
    pub fn density(&self, x: f64) -> f64 {
        let p = self.target.density(x).unwrap_or(0.0);
        (x - self.target_mean).abs() * p / self.normalizer
    }

    /// Importance weight `p(x) / q*(x) = Z / |x - mu|`.
    pub fn weight(&self, x: f64) -> Result<f64> {
        let d = (x - self.target_mean).abs();
        if d == 0.0 || self.density(x) == 0.0 {
            return Err(Error::ZeroProposalDensity(x));
        }
        Ok(self.normalizer / d)
    }
}

pub fn build_optimal_proposal(target: &DistributionSpec) -> Result<OptimalProposal> {
    if !target.is_continuous() {
        return Err(Error::UnsupportedDensity(target.label().to_string()));
    }
    target.density(0.5)?;
    let mu = target.moments().mean;
    let mut pts = target.breakpoints();
    pts.push(mu);
    let f = |x: f64| (x - mu).abs() * target.density(x).unwrap_or(0.0);
    let z = quadrature::integrate(f, 0.0, 1.0, &pts, Z_ABS_TOL, Z_REL_TOL)?.value;
    if !(z >= MIN_NORMALIZER) {
        return Err(Error::DegenerateTarget(z));
    }
    let last = (ENVELOPE_GRID_POINTS - 1) as f64;
    let grid_max = (0..ENVELOPE_GRID_POINTS)
        .map(|i| f(i as f64 / last) / z)
        .fold(0.0f64, f64::max);
    if !grid_max.is_finite() || grid_max <= 0.0 {
        return Err(Error::InvalidParameter(format!(
            "optimal proposal for `{}` has no finite envelope",
            target.label()
        )));
    }
    Ok(OptimalProposal {
        target: target.clone(),
        target_mean: mu,
        normalizer: z,
        envelope: ENVELOPE_SAFETY * grid_max,
    })
}

/// One accepted draw from `q*` plus the number of candidates it took.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RejectionDraw {
    pub value: f64,
    pub attempts: usize,
}

pub fn rejection_sample(proposal: &OptimalProposal, stream: &mut RandomStream) -> Result<f64> {
    rejection_sample_with_cap(proposal, stream, DEFAULT_RETRY_CAP).map(|d| d.value)
}

pub fn rejection_sample_with_cap(
    proposal: &OptimalProposal,
    stream: &mut RandomStream,
    cap: usize,
) -> Result<RejectionDraw> {
    for attempts in 1..=cap {
        let x = stream.uniform();
        let u = stream.uniform();
        if u * proposal.envelope < proposal.density(x) {
            return Ok(RejectionDraw { value: x, attempts });
        }
    }
    Err(Error::RejectionCapExceeded(cap))
}

/// `n` draws from `q*` and the realized acceptance rate.
pub fn rejection_sample_n(
    proposal: &OptimalProposal,
    n: usize,
    stream: &mut RandomStream,
) -> Result<(Vec<f64>, f64)> {
    let mut out = Vec::with_capacity(n);
    let mut attempts = 0usize;
    for _ in 0..n {
        let d = rejection_sample_with_cap(proposal, stream, DEFAULT_RETRY_CAP)?;
        attempts += d.attempts;
        out.push(d.value);
    }
    let rate = if attempts == 0 {
        f64::NAN
    } else {
        n as f64 / attempts as f64
    };
    Ok((out, rate))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum IsMode {
    #[default]
    SelfNormalized,
    Plain,
}

/// Importance-sampling estimate of the target mean from draws of `q*`.
pub fn is_estimate(samples: &[f64], proposal: &OptimalProposal, mode: IsMode) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::InvalidParameter("importance sampling needs at least one sample".into()));
    }
    let mut num = 0.0;
    let mut den = 0.0;
    for &x in samples {
        let w = proposal.weight(x)?;
        num += w * x;
        den += w;
    }
    Ok(match mode {
        IsMode::SelfNormalized => num / den,
        IsMode::Plain => num / samples.len() as f64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distlib::{BetaComponent, Family, NormalComponent};

    fn uniform() -> DistributionSpec {
        DistributionSpec::uniform("u").unwrap()
    }

    /// Composite Simpson on `[0, 1]`, independent of the adaptive integrator.
    fn simpson(f: impl Fn(f64) -> f64, n: usize) -> f64 {
        let h = 1.0 / n as f64;
        let mut s = f(0.0) + f(1.0);
        for i in 1..n {
            s += f(i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
        }
        s * h / 3.0
    }

    fn continuous_bank() -> Vec<DistributionSpec> {
        vec![
            DistributionSpec::beta("beta", 2.0, 5.0).unwrap(),
            DistributionSpec::truncated_normal("tn", 0.6, 0.15).unwrap(),
            DistributionSpec::new(
                "gm",
                Family::GaussianMixture {
                    components: vec![
                        NormalComponent { weight: 0.4, loc: 0.25, scale: 0.08 },
                        NormalComponent { weight: 0.6, loc: 0.7, scale: 0.1 },
                    ],
                },
            )
            .unwrap(),
            DistributionSpec::new(
                "bimodal",
                Family::Bimodal {
                    components: [
                        BetaComponent { weight: 0.5, a: 2.0, b: 8.0 },
                        BetaComponent { weight: 0.5, a: 8.0, b: 2.0 },
                    ],
                },
            )
            .unwrap(),
            DistributionSpec::uniform_spike("spike", 0.3, 0.05, 0.4).unwrap(),
            uniform(),
        ]
    }

    #[test]
    fn uniform_closed_form() {
        let p = build_optimal_proposal(&uniform()).unwrap();
        assert!((p.normalizer() - 0.25).abs() < 1e-12);
        for x in [0.0, 0.1, 0.5, 0.77, 1.0] {
            assert!((p.density(x) - 4.0 * (x - 0.5f64).abs()).abs() < 1e-12);
        }
        assert!((p.envelope() - 2.2).abs() < 1e-12);
    }

    #[test]
    fn beta_normalizer_matches_simpson() {
        let spec = DistributionSpec::beta("b", 2.0, 5.0).unwrap();
        let p = build_optimal_proposal(&spec).unwrap();
        let mu = 2.0 / 7.0;
        // split at mu so the kink sits on a node
        let lo = |x: f64| (mu - x * mu) * spec.density(x * mu).unwrap() * mu;
        let hi = |x: f64| {
            let t = mu + x * (1.0 - mu);
            (t - mu) * spec.density(t).unwrap() * (1.0 - mu)
        };
        let z = simpson(lo, 20_000) + simpson(hi, 20_000);
        assert!((p.normalizer() - z).abs() < 1e-8, "{} vs {z}", p.normalizer());
    }

    #[test]
    fn proposal_normalizes_for_continuous_bank() {
        for spec in continuous_bank() {
            let p = build_optimal_proposal(&spec).unwrap();
            let mut pts = spec.breakpoints();
            pts.push(p.target_mean());
            let total = quadrature::integrate(|x| p.density(x), 0.0, 1.0, &pts, 1e-10, 1e-10).unwrap().value;
            assert!((total - 1.0).abs() < 1e-6, "{}: {total}", spec.label());
            let grid_max = (0..=10_000).map(|i| p.density(i as f64 / 1e4)).fold(0.0, f64::max);
            assert!(p.envelope() >= grid_max);
        }
    }

    #[test]
    fn discrete_target_rejected() {
        let b = DistributionSpec::bernoulli("coin", 0.3).unwrap();
        assert!(matches!(build_optimal_proposal(&b), Err(Error::UnsupportedDensity(_))));
    }

    #[test]
    fn uniform_acceptance_rate() {
        let p = build_optimal_proposal(&uniform()).unwrap();
        let mut s = RandomStream::new(3);
        let (draws, rate) = rejection_sample_n(&p, 100_000, &mut s).unwrap();
        assert!(draws.iter().all(|x| (0.0..=1.0).contains(x)));
        // acceptance probability is the integral of q*/envelope over a unit window
        let expected: f64 = 1.0 / 2.2;
        let se = (expected * (1.0 - expected) / (100_000.0 / expected)).sqrt();
        assert!((rate - expected).abs() < 5.0 * se, "{rate}");
    }

    #[test]
    fn uniform_histogram_matches_closed_form() {
        let p = build_optimal_proposal(&uniform()).unwrap();
        let mut s = RandomStream::new(11);
        let n = 100_000;
        let (draws, _) = rejection_sample_n(&p, n, &mut s).unwrap();
        let mut counts = [0usize; 20];
        for x in draws {
            counts[((x * 20.0) as usize).min(19)] += 1;
        }
        let mut chi2 = 0.0;
        for (i, c) in counts.iter().enumerate() {
            let (a, b) = (i as f64 / 20.0, (i + 1) as f64 / 20.0);
            // CDF of 4|x - 1/2|: mass of [a, b]
            let cdf = |x: f64| if x < 0.5 { 0.5 - 2.0 * (0.5 - x).powi(2) } else { 0.5 + 2.0 * (x - 0.5).powi(2) };
            let e = n as f64 * (cdf(b) - cdf(a));
            chi2 += (*c as f64 - e).powi(2) / e;
        }
        // 19 degrees of freedom; 0.999 quantile is about 43.8
        assert!(chi2 < 43.8, "chi2 = {chi2}");
    }

    #[test]
    fn retry_cap_is_enforced() {
        let mut p = build_optimal_proposal(&uniform()).unwrap();
        p.envelope = 1e12;
        let mut s = RandomStream::new(0);
        assert!(matches!(
            rejection_sample_with_cap(&p, &mut s, 10),
            Err(Error::RejectionCapExceeded(10))
        ));
    }

    #[test]
    fn single_sample_and_constant_weights() {
        let p = build_optimal_proposal(&uniform()).unwrap();
        assert_eq!(is_estimate(&[0.8], &p, IsMode::SelfNormalized).unwrap(), 0.8);
        // 0.3 and 0.7 are equidistant from 0.5, so weights agree
        let v = is_estimate(&[0.3, 0.7, 0.7], &p, IsMode::SelfNormalized).unwrap();
        assert!((v - 1.7 / 3.0).abs() < 1e-15);
        assert!(is_estimate(&[], &p, IsMode::Plain).is_err());
        assert!(matches!(
            is_estimate(&[0.5], &p, IsMode::Plain),
            Err(Error::ZeroProposalDensity(_))
        ));
    }

    #[test]
    fn plain_mode_formula() {
        let p = build_optimal_proposal(&uniform()).unwrap();
        let xs = [0.1, 0.9, 0.6];
        let expect: f64 = xs.iter().map(|x| x * 0.25 / (x - 0.5f64).abs()).sum::<f64>() / 3.0;
        assert!((is_estimate(&xs, &p, IsMode::Plain).unwrap() - expect).abs() < 1e-15);
    }

    #[test]
    fn consistency_per_family() {
        for (i, spec) in continuous_bank().into_iter().enumerate() {
            let p = build_optimal_proposal(&spec).unwrap();
            let mut s = RandomStream::derive(77, &[spec.label()]);
            // independent replications give an honest standard error for the ratio estimator
            let reps = 40;
            let ests: Vec<f64> = (0..reps)
                .map(|_| {
                    let (d, _) = rejection_sample_n(&p, 2_500, &mut s).unwrap();
                    is_estimate(&d, &p, IsMode::SelfNormalized).unwrap()
                })
                .collect();
            let mean = ests.iter().sum::<f64>() / reps as f64;
            let var = ests.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (reps - 1) as f64;
            let se = (var / reps as f64).sqrt();
            let mu = spec.moments().mean;
            assert!((mean - mu).abs() < 4.0 * se, "family {i}: {mean} vs {mu} (se {se})");
        }
    }
}
