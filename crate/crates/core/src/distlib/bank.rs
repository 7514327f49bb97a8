use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::{DistributionSpec, Family};
use crate::error::{Error, Result};

/// A parameter axis: an explicit list or `num` evenly spaced points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Grid {
    Values(Vec<f64>),
    Linspace { start: f64, stop: f64, num: usize },
}

impl Grid {
    pub fn values(&self) -> Vec<f64> {
        match self {
            Grid::Values(v) => v.clone(),
            Grid::Linspace { start, stop, num } => match num {
                0 => Vec::new(),
                1 => vec![*start],
                n => (0..*n)
                    .map(|i| start + (stop - start) * i as f64 / (*n - 1) as f64)
                    // keep labels short and stable
                    .map(|v| (v * 1e10).round() / 1e10)
                    .collect(),
            },
        }
    }
}

/// Keeps only specs whose analytic mean lies in `[min_mean, max_mean)`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MeanFilter {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min_mean: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_mean: Option<f64>,
}

impl MeanFilter {
    fn keeps(&self, spec: &DistributionSpec) -> bool {
        let m = spec.moments().mean;
        self.min_mean.is_none_or(|lo| m >= lo) && self.max_mean.is_none_or(|hi| m < hi)
    }
}

/// Generator for a bank of distributions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BankConfig {
    Explicit {
        specs: Vec<DistributionSpec>,
    },
    BetaGrid {
        a: Grid,
        b: Grid,
        #[serde(default, flatten)]
        filter: MeanFilter,
        #[serde(default)]
        prefix: Option<String>,
    },
    /// Beta distributions parametrized by mean `m` and concentration `k`,
    /// i.e. `a = m k`, `b = (1 - m) k`.
    BetaMeanGrid {
        mean: Grid,
        concentration: Grid,
        #[serde(default, flatten)]
        filter: MeanFilter,
        #[serde(default)]
        prefix: Option<String>,
    },
    TruncatedNormalGrid {
        loc: Grid,
        scale: Grid,
        #[serde(default, flatten)]
        filter: MeanFilter,
        #[serde(default)]
        prefix: Option<String>,
    },
    Union {
        parts: Vec<BankConfig>,
    },
}

/// Expands a generator into its bank. The result is deterministic, non-empty
/// and has unique labels.
pub fn make_bank(config: &BankConfig) -> Result<Vec<DistributionSpec>> {
    let bank = expand(config)?;
    if bank.is_empty() {
        return Err(Error::EmptyBank);
    }
    let mut seen = BTreeSet::new();
    for spec in &bank {
        if !seen.insert(spec.label()) {
            return Err(Error::DuplicateLabel(spec.label().to_string()));
        }
    }
    Ok(bank)
}

fn expand(config: &BankConfig) -> Result<Vec<DistributionSpec>> {
    match config {
        BankConfig::Explicit { specs } => Ok(specs.clone()),
        BankConfig::BetaGrid {
            a,
            b,
            filter,
            prefix,
        } => cartesian(a, b, filter, |x, y| {
            DistributionSpec::new(
                format!("{}beta(a={x},b={y})", prefix.as_deref().unwrap_or("")),
                Family::Beta { a: x, b: y },
            )
        }),
        BankConfig::BetaMeanGrid {
            mean,
            concentration,
            filter,
            prefix,
        } => cartesian(mean, concentration, filter, |m, k| {
            DistributionSpec::new(
                format!("{}beta(mean={m},k={k})", prefix.as_deref().unwrap_or("")),
                Family::Beta {
                    a: m * k,
                    b: (1.0 - m) * k,
                },
            )
        }),
        BankConfig::TruncatedNormalGrid {
            loc,
            scale,
            filter,
            prefix,
        } => cartesian(loc, scale, filter, |x, y| {
            DistributionSpec::new(
                format!("{}tnorm(loc={x},scale={y})", prefix.as_deref().unwrap_or("")),
                Family::TruncatedNormal { loc: x, scale: y },
            )
        }),
        BankConfig::Union { parts } => {
            let mut out = Vec::new();
            for p in parts {
                out.extend(expand(p)?);
            }
            Ok(out)
        }
    }
}

fn cartesian(
    xs: &Grid,
    ys: &Grid,
    filter: &MeanFilter,
    build: impl Fn(f64, f64) -> Result<DistributionSpec>,
) -> Result<Vec<DistributionSpec>> {
    let (xs, ys) = (xs.values(), ys.values());
    if xs.is_empty() || ys.is_empty() {
        return Err(Error::EmptyBank);
    }
    let mut out = Vec::with_capacity(xs.len() * ys.len());
    for &x in &xs {
        for &y in &ys {
            let spec = build(x, y)?;
            if filter.keeps(&spec) {
                out.push(spec);
            }
        }
    }
    Ok(out)
}
