//! Parametric distributions on `[0, 1]`.
//!
//! A [`DistributionSpec`] plays every distribution role in the crate: the
//! "real-world" target, an analytic simulator expert, and the density behind
//! the importance-sampling baseline. Specs are validated when constructed
//! (including when deserialized), so sampling and moment evaluation never fail
//! on parameter grounds.

mod bank;
mod truncnorm;

use rand_distr::Distribution;
use serde::{Deserialize, Serialize};
use statrs::function::beta::ln_beta;

pub use bank::{make_bank, BankConfig, Grid};

use crate::error::{Error, Result};
use crate::quadrature;
use crate::rng::RandomStream;
use truncnorm::TruncatedNormal;

const WEIGHT_TOL: f64 = 1e-9;
const MIN_TRUNCATION_MASS: f64 = 1e-12;

/// Mean and variance of a distribution on `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Moments {
    pub mean: f64,
    pub variance: f64,
}

impl Moments {
    fn second_raw(&self) -> f64 {
        self.variance + self.mean * self.mean
    }

    /// Law of total variance over `(weight, component moments)` pairs.
    fn mixture(parts: impl IntoIterator<Item = (f64, Moments)> + Clone) -> Moments {
        let mean: f64 = parts.clone().into_iter().map(|(w, m)| w * m.mean).sum();
        let second: f64 = parts.into_iter().map(|(w, m)| w * m.second_raw()).sum();
        Moments {
            mean: mean.clamp(0.0, 1.0),
            variance: (second - mean * mean).max(0.0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalComponent {
    pub weight: f64,
    pub loc: f64,
    pub scale: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BetaComponent {
    pub weight: f64,
    pub a: f64,
    pub b: f64,
}

/// Family and parameters. Serialized with a `family` tag, e.g.
/// `{"family": "beta", "a": 2, "b": 5}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum Family {
    Beta {
        a: f64,
        b: f64,
    },
    /// Normal renormalized to `[0, 1]`.
    TruncatedNormal {
        loc: f64,
        scale: f64,
    },
    /// Mixture of individually truncated normals; weights apply after
    /// truncation.
    GaussianMixture {
        components: Vec<NormalComponent>,
    },
    Bernoulli {
        p: f64,
    },
    /// Two-component Beta mixture.
    Bimodal {
        components: [BetaComponent; 2],
    },
    /// `(1 - mass) * U[0,1] + mass * U[center - halfwidth, center + halfwidth] ∩ [0,1]`.
    UniformSpike {
        center: f64,
        halfwidth: f64,
        mass: f64,
    },
}

#[derive(Deserialize)]
struct RawSpec {
    label: String,
    #[serde(flatten)]
    family: Family,
}

impl TryFrom<RawSpec> for DistributionSpec {
    type Error = Error;

    fn try_from(raw: RawSpec) -> Result<Self> {
        DistributionSpec::new(raw.label, raw.family)
    }
}

/// A validated, labelled distribution on `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSpec")]
pub struct DistributionSpec {
    label: String,
    #[serde(flatten)]
    family: Family,
}

impl DistributionSpec {
    pub fn new(label: impl Into<String>, family: Family) -> Result<Self> {
        let label = label.into();
        let family = validate(&label, family)?;
        Ok(Self { label, family })
    }

    pub fn beta(label: impl Into<String>, a: f64, b: f64) -> Result<Self> {
        Self::new(label, Family::Beta { a, b })
    }

    pub fn truncated_normal(label: impl Into<String>, loc: f64, scale: f64) -> Result<Self> {
        Self::new(label, Family::TruncatedNormal { loc, scale })
    }

    pub fn bernoulli(label: impl Into<String>, p: f64) -> Result<Self> {
        Self::new(label, Family::Bernoulli { p })
    }

    pub fn uniform_spike(
        label: impl Into<String>,
        center: f64,
        halfwidth: f64,
        mass: f64,
    ) -> Result<Self> {
        Self::new(
            label,
            Family::UniformSpike {
                center,
                halfwidth,
                mass,
            },
        )
    }

    pub fn uniform(label: impl Into<String>) -> Result<Self> {
        Self::uniform_spike(label, 0.5, 0.5, 0.0)
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn family(&self) -> &Family {
        &self.family
    }

    pub fn family_name(&self) -> &'static str {
        match self.family {
            Family::Beta { .. } => "beta",
            Family::TruncatedNormal { .. } => "truncated_normal",
            Family::GaussianMixture { .. } => "gaussian_mixture",
            Family::Bernoulli { .. } => "bernoulli",
            Family::Bimodal { .. } => "bimodal",
            Family::UniformSpike { .. } => "uniform_spike",
        }
    }

    /// Whether the spec has a Lebesgue density on `[0, 1]`.
    pub fn is_continuous(&self) -> bool {
        !matches!(self.family, Family::Bernoulli { .. })
    }

    pub fn moments(&self) -> Moments {
        match &self.family {
            Family::Beta { a, b } => beta_moments(*a, *b),
            Family::TruncatedNormal { loc, scale } => {
                let t = TruncatedNormal::new(*loc, *scale);
                Moments {
                    mean: t.mean(),
                    variance: t.variance(),
                }
            }
            Family::GaussianMixture { components } => Moments::mixture(components.iter().map(|c| {
                let t = TruncatedNormal::new(c.loc, c.scale);
                (
                    c.weight,
                    Moments {
                        mean: t.mean(),
                        variance: t.variance(),
                    },
                )
            })),
            Family::Bernoulli { p } => Moments {
                mean: *p,
                variance: p * (1.0 - p),
            },
            Family::Bimodal { components } => {
                Moments::mixture(components.iter().map(|c| (c.weight, beta_moments(c.a, c.b))))
            }
            Family::UniformSpike {
                center,
                halfwidth,
                mass,
            } => {
                let (lo, hi) = spike_window(*center, *halfwidth);
                Moments::mixture([
                    (
                        1.0 - mass,
                        Moments {
                            mean: 0.5,
                            variance: 1.0 / 12.0,
                        },
                    ),
                    (
                        *mass,
                        Moments {
                            mean: 0.5 * (lo + hi),
                            variance: (hi - lo) * (hi - lo) / 12.0,
                        },
                    ),
                ])
            }
        }
    }

    /// Density on `[0, 1]` (zero outside). Discrete families have none.
    pub fn density(&self, x: f64) -> Result<f64> {
        if !self.is_continuous() {
            return Err(Error::UnsupportedDensity(self.label.clone()));
        }
        if !(0.0..=1.0).contains(&x) {
            return Ok(0.0);
        }
        Ok(match &self.family {
            Family::Beta { a, b } => beta_density(*a, *b, x),
            Family::TruncatedNormal { loc, scale } => TruncatedNormal::new(*loc, *scale).density(x),
            Family::GaussianMixture { components } => components
                .iter()
                .map(|c| c.weight * TruncatedNormal::new(c.loc, c.scale).density(x))
                .sum(),
            Family::Bimodal { components } => components
                .iter()
                .map(|c| c.weight * beta_density(c.a, c.b, x))
                .sum(),
            Family::UniformSpike {
                center,
                halfwidth,
                mass,
            } => {
                let (lo, hi) = spike_window(*center, *halfwidth);
                let spike = if (lo..=hi).contains(&x) {
                    1.0 / (hi - lo)
                } else {
                    0.0
                };
                (1.0 - mass) + mass * spike
            }
            Family::Bernoulli { .. } => unreachable!("checked above"),
        })
    }

    /// Points where the density has kinks, jumps or concentrated mass; used
    /// to seed adaptive quadrature.
    pub fn breakpoints(&self) -> Vec<f64> {
        let mut pts = match &self.family {
            Family::TruncatedNormal { loc, scale } => {
                TruncatedNormal::new(*loc, *scale).breakpoints()
            }
            Family::GaussianMixture { components } => components
                .iter()
                .flat_map(|c| TruncatedNormal::new(c.loc, c.scale).breakpoints())
                .collect(),
            Family::UniformSpike {
                center, halfwidth, ..
            } => {
                let (lo, hi) = spike_window(*center, *halfwidth);
                vec![lo, hi]
            }
            Family::Beta { a, b } => vec![beta_mode(*a, *b)],
            Family::Bimodal { components } => {
                components.iter().map(|c| beta_mode(c.a, c.b)).collect()
            }
            Family::Bernoulli { .. } => Vec::new(),
        };
        pts.retain(|p| *p > 0.0 && *p < 1.0);
        pts.sort_by(f64::total_cmp);
        pts.dedup();
        pts
    }

    /// One draw in `[0, 1]`.
    pub fn sample(&self, stream: &mut RandomStream) -> f64 {
        let x = match &self.family {
            Family::Beta { a, b } => sample_beta(*a, *b, stream),
            Family::TruncatedNormal { loc, scale } => {
                TruncatedNormal::new(*loc, *scale).sample(stream)
            }
            Family::GaussianMixture { components } => {
                let weights: Vec<f64> = components.iter().map(|c| c.weight).collect();
                let c = &components[pick(&weights, stream)];
                TruncatedNormal::new(c.loc, c.scale).sample(stream)
            }
            Family::Bernoulli { p } => {
                if stream.uniform() < *p {
                    1.0
                } else {
                    0.0
                }
            }
            Family::Bimodal { components } => {
                let c = &components[pick(&[components[0].weight, components[1].weight], stream)];
                sample_beta(c.a, c.b, stream)
            }
            Family::UniformSpike {
                center,
                halfwidth,
                mass,
            } => {
                let (lo, hi) = spike_window(*center, *halfwidth);
                if stream.uniform() < *mass {
                    lo + (hi - lo) * stream.uniform()
                } else {
                    stream.uniform()
                }
            }
        };
        x.clamp(0.0, 1.0)
    }

    /// Draws `n` values.
    pub fn sample_n(&self, n: usize, stream: &mut RandomStream) -> Vec<f64> {
        (0..n).map(|_| self.sample(stream)).collect()
    }

    /// Numerically integrates `g(x) * density(x)` over `[0, 1]`.
    pub fn integrate_against<G: Fn(f64) -> f64>(
        &self,
        g: G,
        extra_breakpoints: &[f64],
        abs_tol: f64,
    ) -> Result<f64> {
        // evaluate once to surface the unsupported-density error
        self.density(0.5)?;
        let mut pts = self.breakpoints();
        pts.extend_from_slice(extra_breakpoints);
        let f = |x: f64| g(x) * self.density(x).unwrap_or(0.0);
        Ok(quadrature::integrate(f, 0.0, 1.0, &pts, abs_tol, 0.0)?.value)
    }
}

fn beta_moments(a: f64, b: f64) -> Moments {
    let s = a + b;
    Moments {
        mean: a / s,
        variance: a * b / (s * s * (s + 1.0)),
    }
}

fn beta_density(a: f64, b: f64, x: f64) -> f64 {
    if x <= 0.0 || x >= 1.0 {
        // boundary: finite only when the shape parameter at that edge is >= 1
        let edge_exp = if x <= 0.0 { a } else { b };
        return if edge_exp > 1.0 {
            0.0
        } else if edge_exp == 1.0 {
            (-ln_beta(a, b)).exp()
        } else {
            f64::INFINITY
        };
    }
    ((a - 1.0) * x.ln() + (b - 1.0) * (-x).ln_1p() - ln_beta(a, b)).exp()
}

fn beta_mode(a: f64, b: f64) -> f64 {
    if a > 1.0 && b > 1.0 {
        (a - 1.0) / (a + b - 2.0)
    } else {
        -1.0
    }
}

fn sample_beta(a: f64, b: f64, stream: &mut RandomStream) -> f64 {
    rand_distr::Beta::new(a, b)
        .expect("validated at construction")
        .sample(stream)
}

fn spike_window(center: f64, halfwidth: f64) -> (f64, f64) {
    ((center - halfwidth).max(0.0), (center + halfwidth).min(1.0))
}

fn pick(weights: &[f64], stream: &mut RandomStream) -> usize {
    let u = stream.uniform();
    let mut acc = 0.0;
    for (i, w) in weights.iter().enumerate() {
        acc += w;
        if u < acc {
            return i;
        }
    }
    weights.len() - 1
}

fn invalid(label: &str, reason: impl Into<String>) -> Error {
    Error::InvalidDistribution {
        label: label.to_string(),
        reason: reason.into(),
    }
}

fn positive(label: &str, name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(invalid(label, format!("{name} must be finite and > 0, got {v}")))
    }
}

fn unit(label: &str, name: &str, v: f64) -> Result<()> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(invalid(label, format!("{name} must lie in [0, 1], got {v}")))
    }
}

/// Checks nonnegativity and unit sum (within 1e-9), then renormalizes so the
/// stored weights sum to one at machine precision.
fn normalize_weights(label: &str, weights: &mut [&mut f64]) -> Result<()> {
    if weights.is_empty() {
        return Err(invalid(label, "mixture needs at least one component"));
    }
    if weights.iter().any(|w| !(w.is_finite() && **w >= 0.0)) {
        return Err(invalid(label, "mixture weights must be finite and >= 0"));
    }
    let total: f64 = weights.iter().map(|w| **w).sum();
    if (total - 1.0).abs() > WEIGHT_TOL {
        return Err(invalid(label, format!("mixture weights sum to {total}, not 1")));
    }
    for w in weights.iter_mut() {
        **w /= total;
    }
    Ok(())
}

fn check_truncation(label: &str, loc: f64, scale: f64) -> Result<()> {
    if !loc.is_finite() {
        return Err(invalid(label, "loc must be finite"));
    }
    positive(label, "scale", scale)?;
    let mass = TruncatedNormal::new(loc, scale).mass();
    if !(mass >= MIN_TRUNCATION_MASS) {
        return Err(invalid(
            label,
            format!("[0, 1] carries only {mass:e} of the normal's mass"),
        ));
    }
    Ok(())
}

fn validate(label: &str, mut family: Family) -> Result<Family> {
    if label.is_empty() {
        return Err(invalid(label, "label must not be empty"));
    }
    match &mut family {
        Family::Beta { a, b } => {
            positive(label, "a", *a)?;
            positive(label, "b", *b)?;
        }
        Family::TruncatedNormal { loc, scale } => check_truncation(label, *loc, *scale)?,
        Family::GaussianMixture { components } => {
            for c in components.iter() {
                check_truncation(label, c.loc, c.scale)?;
            }
            let mut ws: Vec<&mut f64> = components.iter_mut().map(|c| &mut c.weight).collect();
            normalize_weights(label, &mut ws)?;
        }
        Family::Bernoulli { p } => unit(label, "p", *p)?,
        Family::Bimodal { components } => {
            for c in components.iter() {
                positive(label, "a", c.a)?;
                positive(label, "b", c.b)?;
            }
            let [c0, c1] = components;
            normalize_weights(label, &mut [&mut c0.weight, &mut c1.weight])?;
        }
        Family::UniformSpike {
            center,
            halfwidth,
            mass,
        } => {
            unit(label, "center", *center)?;
            positive(label, "halfwidth", *halfwidth)?;
            unit(label, "mass", *mass)?;
        }
    }
    Ok(family)
}
