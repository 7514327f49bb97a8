//! Simulator expert bank: Gaussian log-scores, softmax trust weights and the
//! weighted mixture moments that drive the approximated Kelly bet.
//!
//! Each round the bank is used in a fixed order: refresh sampled experts,
//! read `(m_t, v_t)` for the bet, observe the real outcome, then
//! [`ExpertBank::update_scores`] decrements every score by `eta * loss` and
//! recomputes the weights.

mod external;

use std::f64::consts::PI;

pub use external::{parse_sample, ExternalCommand, ExternalSampler, DEFAULT_TIMEOUT_SECS};

use crate::distlib::DistributionSpec;
use crate::error::{Error, Result};
use crate::rng::RandomStream;
use crate::scalar::Scalar;

pub const DEFAULT_VARIANCE_FLOOR: f64 = 1e-6;
/// Variance assumed for an expert with fewer than two samples (uniform on [0, 1]).
pub const PRIOR_VARIANCE: f64 = 1.0 / 12.0;
const PRIOR_MEAN: f64 = 0.5;

/// Negative log-likelihood of `y` under `N(mu, var)`. Larger is worse.
#[inline]
pub fn gaussian_log_score<T: Scalar>(y: T, mu: T, var: T) -> T {
    let two_pi = T::lit(2.0 * PI);
    let r = y - mu;
    T::lit(0.5) * ((two_pi * var).ln() + r * r / var)
}

/// `exp(s_k) / Σ_j exp(s_j)` with the maximum subtracted first.
pub fn softmax_weights<T: Scalar>(scores: &[T]) -> Vec<T> {
    let max = scores
        .iter()
        .copied()
        .fold(T::neg_infinity(), T::max);
    let exps: Vec<T> = scores.iter().map(|s| (*s - max).exp()).collect();
    let total: T = exps.iter().copied().sum();
    exps.into_iter().map(|e| e / total).collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MixtureMoments<T> {
    /// `Σ π_k μ_k`
    pub m: T,
    /// `Σ π_k σ_k²` (mean of the expert variances), floored.
    pub v: T,
}

pub fn mixture_moments<T: Scalar>(
    weights: &[T],
    means: &[T],
    variances: &[T],
    variance_floor: T,
) -> MixtureMoments<T> {
    let m = weights.iter().zip(means).map(|(w, mu)| *w * *mu).sum();
    let v: T = weights.iter().zip(variances).map(|(w, s)| *w * *s).sum();
    MixtureMoments {
        m,
        v: v.max(variance_floor),
    }
}

pub enum ExpertSource {
    /// Closed-form moments from a distribution; never refreshed.
    Analytic(DistributionSpec),
    /// Stored draws, optionally grown from a generator on refresh.
    SampleSet(Option<SampleGenerator>),
    /// Draws read from a child process on refresh.
    External(ExternalSampler),
}

pub struct SampleGenerator {
    pub spec: DistributionSpec,
    pub n_sim: usize,
    pub stream: RandomStream,
}

impl std::fmt::Debug for ExpertSource {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ExpertSource::Analytic(spec) => f.debug_tuple("Analytic").field(&spec.label()).finish(),
            ExpertSource::SampleSet(g) => f
                .debug_tuple("SampleSet")
                .field(&g.as_ref().map(|g| g.spec.label()))
                .finish(),
            ExpertSource::External(s) => f.debug_tuple("External").field(s).finish(),
        }
    }
}

/// One simulator hypothesis summarized by its predictive mean and variance.
#[derive(Debug)]
pub struct Expert<T> {
    id: String,
    source: ExpertSource,
    samples: Vec<f64>,
    mean: T,
    variance: T,
    variance_floor: T,
    failure: Option<String>,
}

impl<T: Scalar> Expert<T> {
    pub fn analytic(spec: DistributionSpec, variance_floor: T) -> Self {
        let m = spec.moments();
        Self {
            id: spec.label().to_string(),
            samples: Vec::new(),
            mean: T::lit(m.mean),
            variance: T::lit(m.variance).max(variance_floor),
            source: ExpertSource::Analytic(spec),
            variance_floor,
            failure: None,
        }
    }

    fn with_source(id: String, source: ExpertSource, samples: Vec<f64>, variance_floor: T) -> Self {
        let mut e = Self {
            id,
            source,
            samples,
            mean: T::lit(PRIOR_MEAN),
            variance: T::lit(PRIOR_VARIANCE),
            variance_floor,
            failure: None,
        };
        e.recompute();
        e
    }

    /// Expert over a fixed set of draws.
    pub fn from_samples(id: impl Into<String>, samples: Vec<f64>, variance_floor: T) -> Self {
        Self::with_source(id.into(), ExpertSource::SampleSet(None), samples, variance_floor)
    }

    /// Expert that draws `n_sim` fresh samples from `spec` on every refresh.
    pub fn sampled(spec: DistributionSpec, n_sim: usize, stream: RandomStream, variance_floor: T) -> Self {
        let id = spec.label().to_string();
        let generator = SampleGenerator { spec, n_sim, stream };
        Self::with_source(id, ExpertSource::SampleSet(Some(generator)), Vec::new(), variance_floor)
    }

    pub fn external(id: impl Into<String>, cmd: ExternalCommand, variance_floor: T) -> Self {
        Self::with_source(
            id.into(),
            ExpertSource::External(ExternalSampler::new(cmd)),
            Vec::new(),
            variance_floor,
        )
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn mean(&self) -> T {
        self.mean
    }

    pub fn variance(&self) -> T {
        self.variance
    }

    pub fn source(&self) -> &ExpertSource {
        &self.source
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn is_failed(&self) -> bool {
        self.failure.is_some()
    }

    pub fn failure(&self) -> Option<&str> {
        self.failure.as_deref()
    }

    /// Pulls fresh simulator draws and recomputes moments from the whole
    /// accumulated set. No-op for analytic experts and fixed sample sets.
    /// On failure the expert is marked failed and keeps its last moments.
    pub fn refresh(&mut self) -> Result<()> {
        if let Some(reason) = &self.failure {
            return Err(Error::ExpertFailed {
                id: self.id.clone(),
                reason: reason.clone(),
            });
        }
        let fresh = match &mut self.source {
            ExpertSource::Analytic(_) | ExpertSource::SampleSet(None) => return Ok(()),
            ExpertSource::SampleSet(Some(g)) => Ok(g.spec.sample_n(g.n_sim, &mut g.stream)),
            ExpertSource::External(sampler) => sampler.fetch(),
        };
        match fresh {
            Ok(draws) => {
                self.samples.extend(draws);
                self.recompute();
                Ok(())
            }
            Err(reason) => {
                log::warn!("expert `{}` failed: {reason}", self.id);
                self.failure = Some(reason.clone());
                Err(Error::ExpertFailed {
                    id: self.id.clone(),
                    reason,
                })
            }
        }
    }

    fn recompute(&mut self) {
        if matches!(self.source, ExpertSource::Analytic(_)) {
            return;
        }
        let (mean, variance) = sample_moments(&self.samples);
        self.mean = T::lit(mean);
        self.variance = T::lit(variance).max(self.variance_floor);
    }
}

pub fn refresh_expert<T: Scalar>(expert: &mut Expert<T>) -> Result<()> {
    expert.refresh()
}

/// Mean and unbiased variance; prior values below two samples.
pub fn sample_moments(samples: &[f64]) -> (f64, f64) {
    let n = samples.len();
    if n == 0 {
        return (PRIOR_MEAN, PRIOR_VARIANCE);
    }
    let mean = samples.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, PRIOR_VARIANCE);
    }
    let ss: f64 = samples.iter().map(|x| (x - mean) * (x - mean)).sum();
    (mean, ss / (n - 1) as f64)
}

/// `K` experts with cumulative log-scores and softmax trust weights.
#[derive(Debug)]
pub struct ExpertBank<T> {
    experts: Vec<Expert<T>>,
    scores: Vec<T>,
    weights: Vec<T>,
    eta: T,
    variance_floor: T,
}

impl<T: Scalar> ExpertBank<T> {
    /// Scores start at zero, so the initial weights are uniform.
    pub fn new(experts: Vec<Expert<T>>, eta: T, variance_floor: T) -> Result<Self> {
        if experts.is_empty() {
            return Err(Error::InvalidParameter("expert bank needs at least one expert".into()));
        }
        if !(eta.is_finite() && eta >= T::zero()) {
            return Err(Error::InvalidParameter(format!("eta must be finite and >= 0, got {eta}")));
        }
        if !(variance_floor > T::zero()) {
            return Err(Error::InvalidParameter("variance floor must be > 0".into()));
        }
        let k = experts.len();
        let mut bank = Self {
            experts,
            scores: vec![T::zero(); k],
            weights: Vec::new(),
            eta,
            variance_floor,
        };
        bank.reweight()?;
        Ok(bank)
    }

    pub fn len(&self) -> usize {
        self.experts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.experts.is_empty()
    }

    pub fn experts(&self) -> &[Expert<T>] {
        &self.experts
    }

    pub fn scores(&self) -> &[T] {
        &self.scores
    }

    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    pub fn eta(&self) -> T {
        self.eta
    }

    /// Refreshes every live expert in bank order. Failed experts are logged,
    /// frozen and dropped from the weights; it is an error only when none
    /// remain.
    pub fn refresh(&mut self) -> Result<()> {
        let mut any_failed = false;
        for e in self.experts.iter_mut().filter(|e| !e.is_failed()) {
            if e.refresh().is_err() {
                any_failed = true;
            }
        }
        if any_failed {
            self.reweight()?;
        }
        Ok(())
    }

    /// `s_k -= eta * loss(y; mu_k, var_k)` for every live expert, then
    /// recomputes the weights.
    pub fn update_scores(&mut self, y: T) -> Result<()> {
        for (s, e) in self.scores.iter_mut().zip(&self.experts) {
            if !e.is_failed() {
                *s = *s - self.eta * gaussian_log_score(y, e.mean, e.variance);
            }
        }
        self.reweight()
    }

    pub fn mixture_moments(&self) -> MixtureMoments<T> {
        let means: Vec<T> = self.experts.iter().map(|e| e.mean).collect();
        let vars: Vec<T> = self.experts.iter().map(|e| e.variance).collect();
        mixture_moments(&self.weights, &means, &vars, self.variance_floor)
    }

    fn reweight(&mut self) -> Result<()> {
        let live: Vec<usize> = (0..self.experts.len())
            .filter(|i| !self.experts[*i].is_failed())
            .collect();
        if live.is_empty() {
            return Err(Error::AllExpertsFailed);
        }
        let live_scores: Vec<T> = live.iter().map(|i| self.scores[*i]).collect();
        let w = softmax_weights(&live_scores);
        self.weights = vec![T::zero(); self.experts.len()];
        for (i, wi) in live.into_iter().zip(w) {
            self.weights[i] = wi;
        }
        Ok(())
    }
}

pub fn update_scores<T: Scalar>(bank: &mut ExpertBank<T>, y: T) -> Result<()> {
    bank.update_scores(y)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn analytic(label: &str, a: f64, b: f64) -> Expert<f64> {
        Expert::analytic(DistributionSpec::beta(label, a, b).unwrap(), DEFAULT_VARIANCE_FLOOR)
    }

    #[test]
    fn log_score_value() {
        // 0.5 * (ln(2*pi*0.04) + 0.01 / 0.04), evaluated at 30 digits with mpmath
        let got = gaussian_log_score(0.6, 0.5, 0.04f64);
        assert!((got - (-0.565_499_379_229_427_6)).abs() < 1e-14);
    }

    #[test]
    fn log_score_zero_residual_and_symmetry() {
        let v = 0.09f64;
        let at_mean = gaussian_log_score(0.3, 0.3, v);
        assert!((at_mean - 0.5 * (2.0 * PI * v).ln()).abs() < 1e-15);
        for d in [0.01, 0.1, 0.25] {
            let (up, down) = (gaussian_log_score(0.3 + d, 0.3, v), gaussian_log_score(0.3 - d, 0.3, v));
            assert!((up - down).abs() < 1e-13);
            assert!(gaussian_log_score(0.3 + d, 0.3, v) > at_mean);
        }
    }

    #[test]
    fn softmax_examples() {
        assert_eq!(softmax_weights(&[0.0f64; 4]), vec![0.25; 4]);
        let w = softmax_weights(&[3.0f64.ln(), 0.0]);
        assert!((w[0] - 0.75).abs() < 1e-15 && (w[1] - 0.25).abs() < 1e-15);
    }

    #[test]
    fn softmax_survives_huge_scores() {
        let w = softmax_weights(&[-1e6f64, -1e6 - 1.0, 1e6]);
        assert!(w.iter().all(|x| x.is_finite()));
        assert_eq!(w[2], 1.0);
    }

    #[test]
    fn mixture_examples() {
        let single = mixture_moments(&[1.0], &[0.3], &[0.02f64], 1e-6);
        assert_eq!((single.m, single.v), (0.3, 0.02));
        let m = mixture_moments(&[0.75, 0.25], &[0.2, 0.6], &[0.01, 0.01f64], 1e-6);
        assert!((m.m - 0.3).abs() < 1e-15);
        let v = mixture_moments(&[0.5, 0.5], &[0.2, 0.6], &[0.01, 0.09f64], 1e-6);
        assert!((v.v - 0.05).abs() < 1e-15);
        let floored = mixture_moments(&[1.0], &[0.3], &[0.0f64], 1e-6);
        assert_eq!(floored.v, 1e-6);
    }

    #[test]
    fn zero_eta_freezes_bank() {
        let mut bank = ExpertBank::new(vec![analytic("a", 2.0, 5.0), analytic("b", 5.0, 2.0)], 0.0, 1e-6).unwrap();
        for y in [0.1, 0.9, 0.4] {
            bank.update_scores(y).unwrap();
        }
        assert_eq!(bank.scores(), &[0.0, 0.0]);
        assert_eq!(bank.weights(), &[0.5, 0.5]);
    }

    #[test]
    fn identical_experts_stay_uniform() {
        let experts = (0..5).map(|i| analytic(&format!("e{i}"), 2.0, 3.0)).collect();
        let mut bank = ExpertBank::new(experts, 3.0, 1e-6).unwrap();
        for y in [0.05, 0.7, 0.33, 0.99] {
            bank.update_scores(y).unwrap();
            assert!(bank.weights().iter().all(|w| *w == 0.2));
        }
    }

    #[test]
    fn better_expert_gains_weight_with_eta() {
        // outcome 0.3: expert near 0.3 has far smaller loss than one near 0.8
        let make = |eta| {
            let mut b = ExpertBank::new(
                vec![analytic("near", 3.0, 7.0), analytic("far", 8.0, 2.0)],
                eta,
                1e-6,
            )
            .unwrap();
            b.update_scores(0.3).unwrap();
            b.weights()[0]
        };
        let mut prev = 0.5;
        for eta in [0.01, 0.05, 0.1, 0.2, 0.5, 1.0, 2.0] {
            let w = make(eta);
            // closed form: 1 / (1 + exp(-eta * (l_far - l_near)))
            let l_near = gaussian_log_score(0.3, 0.3, 21.0 / 1100.0);
            let l_far = gaussian_log_score(0.3, 0.8, 16.0 / 1100.0);
            let expected = 1.0 / (1.0 + (-eta * (l_far - l_near)).exp());
            assert!((w - expected).abs() < 1e-12);
            assert!(w > prev);
            prev = w;
        }
        assert!(prev > 0.999_999);
    }

    #[test]
    fn analytic_refresh_is_noop() {
        let mut e = analytic("a", 2.0, 5.0);
        let before = (e.mean(), e.variance());
        e.refresh().unwrap();
        assert_eq!(before, (e.mean(), e.variance()));
    }

    #[test]
    fn sample_moments_priors_and_floor() {
        assert_eq!(sample_moments(&[]), (0.5, PRIOR_VARIANCE));
        assert_eq!(sample_moments(&[0.2]), (0.2, PRIOR_VARIANCE));
        let e = Expert::<f64>::from_samples("c", vec![0.5; 10], 1e-6);
        assert_eq!(e.mean(), 0.5);
        assert_eq!(e.variance(), 1e-6);
    }

    #[test]
    fn sampled_expert_converges_to_analytic() {
        let spec = DistributionSpec::beta("b", 2.0, 5.0).unwrap();
        let m = spec.moments();
        let mut e = Expert::<f64>::sampled(spec, 1000, RandomStream::new(5), 1e-6);
        for _ in 0..100 {
            e.refresh().unwrap();
        }
        let n = e.samples().len() as f64;
        assert_eq!(n, 100_000.0);
        assert!((e.mean() - m.mean).abs() < 4.0 * (m.variance / n).sqrt());
        // variance of the sample variance ~ (mu4 - sigma^4) / n; bound loosely by 4 sigma with mu4 <= sigma^2 on [0,1]
        assert!((e.variance() - m.variance).abs() < 4.0 * (m.variance / n).sqrt());
    }

    #[test]
    fn failed_expert_is_excluded_and_weights_renormalize() {
        let bad = Expert::external("bad", ExternalCommand::new(vec![], 3), 1e-6);
        let mut bank = ExpertBank::new(vec![analytic("a", 2.0, 5.0), bad, analytic("c", 5.0, 2.0)], 1.0, 1e-6).unwrap();
        bank.refresh().unwrap();
        assert!(bank.experts()[1].is_failed());
        assert_eq!(bank.weights()[1], 0.0);
        assert!((bank.weights().iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let frozen = bank.scores()[1];
        bank.update_scores(0.4).unwrap();
        assert_eq!(bank.scores()[1], frozen);
        assert_eq!(bank.weights()[1], 0.0);
    }

    #[test]
    fn all_failed_is_error() {
        let bad = Expert::<f64>::external("bad", ExternalCommand::new(vec![], 3), 1e-6);
        let mut bank = ExpertBank::new(vec![bad], 1.0, 1e-6).unwrap();
        assert!(matches!(bank.refresh(), Err(Error::AllExpertsFailed)));
    }

    #[test]
    fn f32_bank() {
        let e = Expert::<f32>::analytic(DistributionSpec::beta("a", 2.0, 2.0).unwrap(), 1e-6);
        let mut bank = ExpertBank::new(vec![e], 1.0f32, 1e-6).unwrap();
        bank.update_scores(0.5).unwrap();
        assert_eq!(bank.weights(), &[1.0f32]);
    }

    proptest! {
        #[test]
        fn softmax_on_simplex(scores in prop::collection::vec(-500.0f64..500.0, 1..200)) {
            let w = softmax_weights(&scores);
            prop_assert!(w.iter().all(|x| *x >= 0.0));
            prop_assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }

        #[test]
        fn softmax_shift_invariant(
            raw in prop::collection::vec(-(1i64 << 26)..(1i64 << 26), 1..50),
            c_raw in -(1i64 << 30)..(1i64 << 30),
        ) {
            // dyadic grid so that s + c is computed without rounding
            let unit = 1.0 / (1u64 << 20) as f64;
            let scores: Vec<f64> = raw.iter().map(|r| *r as f64 * unit).collect();
            let c = c_raw as f64 * unit;
            let shifted: Vec<f64> = scores.iter().map(|s| s + c).collect();
            let (a, b) = (softmax_weights(&scores), softmax_weights(&shifted));
            for (x, y) in a.iter().zip(&b) {
                prop_assert!((x - y).abs() < 1e-14);
            }
        }

        #[test]
        fn mixture_is_linear_dot_product(
            raw in prop::collection::vec((0.0f64..1.0, 0.0f64..1.0, 1e-4f64..0.25), 1..40)
        ) {
            let total: f64 = raw.iter().map(|r| r.0).sum::<f64>() + 1e-9;
            let w: Vec<f64> = raw.iter().map(|r| (r.0 + 1e-9 / raw.len() as f64) / total).collect();
            let mu: Vec<f64> = raw.iter().map(|r| r.1).collect();
            let var: Vec<f64> = raw.iter().map(|r| r.2).collect();
            let m = mixture_moments(&w, &mu, &var, 1e-6);
            let mut dot_m = 0.0;
            let mut dot_v = 0.0;
            for i in 0..w.len() {
                dot_m += w[i] * mu[i];
                dot_v += w[i] * var[i];
            }
            prop_assert!((m.m - dot_m).abs() < 1e-14);
            prop_assert!((m.v - dot_v.max(1e-6)).abs() < 1e-14);
            let lo = mu.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = mu.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(m.m >= lo - 1e-12 && m.m <= hi + 1e-12);
        }

        #[test]
        fn bank_weights_stay_on_simplex(
            ys in prop::collection::vec(0.0f64..=1.0, 1..100),
            eta in 0.0f64..100.0,
        ) {
            let experts = vec![
                analytic("a", 2.0, 5.0),
                analytic("b", 5.0, 2.0),
                analytic("c", 1.0, 1.0),
                analytic("d", 20.0, 20.0),
            ];
            let mut bank = ExpertBank::new(experts, eta, 1e-6).unwrap();
            for y in ys {
                bank.update_scores(y).unwrap();
                let w = bank.weights();
                prop_assert!(w.iter().all(|x| *x >= 0.0));
                prop_assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            }
        }

        #[test]
        fn dominant_expert_weight_nondecreasing(
            ys in prop::collection::vec(0.25f64..=0.35, 1..60),
            eta in 0.01f64..20.0,
        ) {
            // for outcomes near 0.3 expert "near" always has smaller loss
            let mut bank = ExpertBank::new(
                vec![analytic("near", 3.0, 7.0), analytic("far", 8.0, 2.0)],
                eta,
                1e-6,
            ).unwrap();
            let mut prev = bank.weights()[0];
            for y in ys {
                let ln = gaussian_log_score(y, 0.3, 21.0 / 1100.0);
                let lf = gaussian_log_score(y, 0.8, 16.0 / 1100.0);
                prop_assume!(ln < lf);
                bank.update_scores(y).unwrap();
                prop_assert!(bank.weights()[0] >= prev);
                prev = bank.weights()[0];
            }
        }

        #[test]
        fn eta_continuity_near_zero(y in 0.0f64..=1.0) {
            let mut bank = ExpertBank::new(
                vec![analytic("a", 2.0, 5.0), analytic("b", 5.0, 2.0)],
                1e-9,
                1e-6,
            ).unwrap();
            bank.update_scores(y).unwrap();
            prop_assert!((bank.weights()[0] - 0.5).abs() < 1e-8);
        }
    }
}
