//! Bet-producing policies.
//!
//! All Kelly variants share one rule: bet toward the modeled mean with raw
//! stake `lambda * |mean - tau| / max(var, eps)`, then clamp the stake to
//! `[stake_floor, 1]`. Ideal Kelly plugs in the target's true moments,
//! approximated Kelly plugs in the expert-bank mixture moments.

use std::fmt;
use std::str::FromStr;

use crate::betting::{BetDecision, Direction};
use crate::error::{Error, Result};
use crate::experts::ExpertBank;
use crate::scalar::Scalar;

pub const DEFAULT_STAKE_FLOOR: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KellyParams<T> {
    /// λ in (0, 1]; 1 is full Kelly, 0.5 half Kelly.
    pub kelly_fraction: T,
    /// Minimum stake, so every round consumes one real sample.
    pub stake_floor: T,
    pub variance_floor: T,
}

impl<T: Scalar> KellyParams<T> {
    pub fn new(kelly_fraction: T, stake_floor: T, variance_floor: T) -> Result<Self> {
        if !(kelly_fraction > T::zero() && kelly_fraction <= T::one()) {
            return Err(Error::InvalidParameter(format!(
                "kelly fraction must lie in (0, 1], got {kelly_fraction}"
            )));
        }
        if !(stake_floor > T::zero() && stake_floor <= T::one()) {
            return Err(Error::InvalidParameter(format!(
                "stake floor must lie in (0, 1], got {stake_floor}"
            )));
        }
        if !(variance_floor > T::zero() && variance_floor.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "variance floor must be > 0, got {variance_floor}"
            )));
        }
        Ok(Self {
            kelly_fraction,
            stake_floor,
            variance_floor,
        })
    }

    pub fn full() -> Self {
        Self::new(T::one(), T::lit(DEFAULT_STAKE_FLOOR), T::lit(crate::experts::DEFAULT_VARIANCE_FLOOR))
            .expect("defaults are valid")
    }

    pub fn with_fraction(self, kelly_fraction: T) -> Result<Self> {
        Self::new(kelly_fraction, self.stake_floor, self.variance_floor)
    }
}

impl<T: Scalar> Default for KellyParams<T> {
    fn default() -> Self {
        Self::full()
    }
}

/// `direction * (mu - tau_prev)`.
#[inline]
pub fn compute_edge<T: Scalar>(mu: T, tau_prev: T, direction: Direction) -> T {
    direction.sign::<T>() * (mu - tau_prev)
}

fn kelly_bet<T: Scalar>(mean: T, variance: T, tau_prev: T, params: &KellyParams<T>) -> BetDecision<T> {
    let direction = Direction::toward(mean, tau_prev);
    let var = variance.max(params.variance_floor);
    let raw_stake = params.kelly_fraction * compute_edge(mean, tau_prev, direction) / var;
    BetDecision {
        stake: raw_stake.max(params.stake_floor).min(T::one()),
        direction,
        raw_stake,
    }
}

/// Kelly bet from the target's true mean and variance.
pub fn ideal_kelly_bet<T: Scalar>(mu: T, sigma_sq: T, tau_prev: T, params: &KellyParams<T>) -> BetDecision<T> {
    kelly_bet(mu, sigma_sq, tau_prev, params)
}

/// Kelly bet from the expert mixture `(m_t, v_t)`.
pub fn approx_kelly_bet<T: Scalar>(m: T, v: T, tau_prev: T, params: &KellyParams<T>) -> BetDecision<T> {
    kelly_bet(m, v, tau_prev, params)
}

/// Unit stake; with every stake equal the estimator is the sample mean.
pub fn mc_bet<T: Scalar>() -> BetDecision<T> {
    BetDecision {
        stake: T::one(),
        direction: Direction::Up,
        raw_stake: T::one(),
    }
}

/// Strategy names accepted in configuration and on the command line.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum StrategyName {
    MonteCarlo,
    IdealKelly,
    ApproxKelly,
}

impl StrategyName {
    pub fn as_str(self) -> &'static str {
        match self {
            StrategyName::MonteCarlo => "mc",
            StrategyName::IdealKelly => "ideal-kelly",
            StrategyName::ApproxKelly => "approx-kelly",
        }
    }
}

impl fmt::Display for StrategyName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for StrategyName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mc" => Ok(StrategyName::MonteCarlo),
            "ideal-kelly" => Ok(StrategyName::IdealKelly),
            "approx-kelly" => Ok(StrategyName::ApproxKelly),
            other => Err(Error::Config(format!(
                "unknown strategy `{other}` (expected mc, ideal-kelly or approx-kelly)"
            ))),
        }
    }
}

/// A betting policy together with whatever state it carries through a run.
#[derive(Debug)]
pub enum StrategyKind<T> {
    MonteCarlo,
    IdealKelly {
        target_mean: T,
        target_variance: T,
        params: KellyParams<T>,
    },
    ApproxKelly {
        bank: ExpertBank<T>,
        params: KellyParams<T>,
    },
}

impl<T: Scalar> StrategyKind<T> {
    pub fn ideal_kelly(target_mean: T, target_variance: T, params: KellyParams<T>) -> Result<Self> {
        if !(target_mean >= T::zero() && target_mean <= T::one()) {
            return Err(Error::InvalidParameter(format!(
                "target mean must lie in [0, 1], got {target_mean}"
            )));
        }
        if !(target_variance > T::zero()) {
            return Err(Error::InvalidParameter(format!(
                "target variance must be > 0, got {target_variance}"
            )));
        }
        Ok(StrategyKind::IdealKelly {
            target_mean,
            target_variance,
            params,
        })
    }

    pub fn approx_kelly(bank: ExpertBank<T>, params: KellyParams<T>) -> Self {
        StrategyKind::ApproxKelly { bank, params }
    }

    pub fn name(&self) -> StrategyName {
        match self {
            StrategyKind::MonteCarlo => StrategyName::MonteCarlo,
            StrategyKind::IdealKelly { .. } => StrategyName::IdealKelly,
            StrategyKind::ApproxKelly { .. } => StrategyName::ApproxKelly,
        }
    }

    /// Produces this round's bet. For the expert bank this first refreshes
    /// sampled experts.
    pub fn decide(&mut self, tau_prev: T) -> Result<BetDecision<T>> {
        match self {
            StrategyKind::MonteCarlo => Ok(mc_bet()),
            StrategyKind::IdealKelly {
                target_mean,
                target_variance,
                params,
            } => Ok(ideal_kelly_bet(*target_mean, *target_variance, tau_prev, params)),
            StrategyKind::ApproxKelly { bank, params } => {
                bank.refresh()?;
                let mix = bank.mixture_moments();
                Ok(approx_kelly_bet(mix.m, mix.v, tau_prev, params))
            }
        }
    }

    /// Feeds the realized outcome back (score update for the expert bank).
    pub fn observe(&mut self, y: T) -> Result<()> {
        match self {
            StrategyKind::ApproxKelly { bank, .. } => bank.update_scores(y),
            _ => Ok(()),
        }
    }

    pub fn bank(&self) -> Option<&ExpertBank<T>> {
        match self {
            StrategyKind::ApproxKelly { bank, .. } => Some(bank),
            _ => None,
        }
    }
}
