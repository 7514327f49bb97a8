//! The abstract sequential betting loop: stakes, payoffs, wealth and the
//! bet-weighted estimator.
//!
//! One round is: a strategy produces a [`BetDecision`], one real outcome
//! `y` is drawn, the pair `(y, stake)` is appended to the [`Ledger`], wealth
//! is multiplied by `1 + stake * payoff`, and the running estimate
//! `tau = Σ b·y / Σ b` is refreshed. Nothing here knows how stakes are chosen.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Betting direction: `Up` bets that the next outcome lands above the
/// running estimate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Direction {
    Up,
    Down,
}

impl Direction {
    /// Direction of `target - from`; ties go `Up`.
    pub fn toward<T: Scalar>(target: T, from: T) -> Self {
        if target >= from {
            Direction::Up
        } else {
            Direction::Down
        }
    }

    pub fn sign<T: Scalar>(self) -> T {
        match self {
            Direction::Up => T::one(),
            Direction::Down => -T::one(),
        }
    }

    pub fn as_i8(self) -> i8 {
        match self {
            Direction::Up => 1,
            Direction::Down => -1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BetDecision<T> {
    /// Stake actually placed, in `[0, 1]`.
    pub stake: T,
    pub direction: Direction,
    /// Stake before clamping, kept for diagnostics.
    pub raw_stake: T,
}

impl<T: Scalar> BetDecision<T> {
    pub fn new(stake: T, direction: Direction, raw_stake: T) -> Result<Self> {
        if !(stake >= T::zero() && stake <= T::one()) {
            return Err(Error::InvalidParameter(format!(
                "stake must lie in [0, 1], got {stake}"
            )));
        }
        Ok(Self {
            stake,
            direction,
            raw_stake,
        })
    }
}

/// Signed margin `direction * (y - tau_prev)`.
#[inline]
pub fn payoff<T: Scalar>(y: T, tau_prev: T, direction: Direction) -> T {
    direction.sign::<T>() * (y - tau_prev)
}

/// Ordered record of `(outcome, stake)` pairs.
///
/// The weighted and stake sums are accumulated in insertion order, so the
/// estimate after `t` entries depends only on the first `t` entries.
#[derive(Debug, Clone)]
pub struct Ledger<T> {
    entries: Vec<(T, T)>,
    tau0: T,
    weighted_sum: T,
    stake_sum: T,
}

impl<T: Scalar> Ledger<T> {
    pub fn new(tau0: T) -> Result<Self> {
        unit(tau0, "tau0")?;
        Ok(Self {
            entries: Vec::new(),
            tau0,
            weighted_sum: T::zero(),
            stake_sum: T::zero(),
        })
    }

    pub fn append(&mut self, outcome: T, stake: T) -> Result<()> {
        unit(outcome, "outcome")?;
        unit(stake, "stake")?;
        self.entries.push((outcome, stake));
        self.weighted_sum = self.weighted_sum + stake * outcome;
        self.stake_sum = self.stake_sum + stake;
        Ok(())
    }

    /// `Σ b·y / Σ b`; undefined while the total stake is zero.
    pub fn estimate(&self) -> Result<T> {
        if self.stake_sum > T::zero() {
            Ok(self.weighted_sum / self.stake_sum)
        } else {
            Err(Error::UndefinedEstimate)
        }
    }

    /// Current estimate, falling back to `tau0` before any stake is placed.
    pub fn tau(&self) -> T {
        self.estimate().unwrap_or(self.tau0)
    }

    pub fn tau0(&self) -> T {
        self.tau0
    }

    pub fn entries(&self) -> &[(T, T)] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn total_stake(&self) -> T {
        self.stake_sum
    }
}

pub fn bet_weighted_estimate<T: Scalar>(ledger: &Ledger<T>) -> Result<T> {
    ledger.estimate()
}

/// Multiplicative wealth, `W_0 = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct WealthProcess<T> {
    trajectory: Vec<T>,
}

impl<T: Scalar> Default for WealthProcess<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> WealthProcess<T> {
    pub fn new() -> Self {
        Self {
            trajectory: vec![T::one()],
        }
    }

    pub fn current(&self) -> T {
        *self.trajectory.last().expect("trajectory starts at W_0")
    }

    pub fn trajectory(&self) -> &[T] {
        &self.trajectory
    }

    /// Appends `W * (1 + stake * payoff)` and returns it. Zero is absorbing.
    pub fn update(&mut self, stake: T, payoff: T) -> T {
        let next = self.current() * (T::one() + stake * payoff);
        self.trajectory.push(next);
        next
    }
}

pub fn update_wealth<T: Scalar>(mut process: WealthProcess<T>, stake: T, payoff: T) -> WealthProcess<T> {
    process.update(stake, payoff);
    process
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RoundOutcome<T> {
    pub outcome: T,
    pub payoff: T,
    pub decision: BetDecision<T>,
    pub tau_before: T,
    pub tau_after: T,
    pub wealth_after: T,
}

/// Source of real outcomes in `[0, 1]`.
pub trait OutcomeSource<T> {
    fn draw(&mut self) -> Result<T>;
}

impl<T, F: FnMut() -> Result<T>> OutcomeSource<T> for F {
    fn draw(&mut self) -> Result<T> {
        self()
    }
}

/// Plays one round: draw, append to the ledger, update wealth, refresh tau,
/// in that order.
pub fn run_round<T: Scalar, S: OutcomeSource<T> + ?Sized>(
    decision: BetDecision<T>,
    source: &mut S,
    ledger: &mut Ledger<T>,
    wealth: &mut WealthProcess<T>,
) -> Result<RoundOutcome<T>> {
    if !(decision.stake > T::zero()) {
        return Err(Error::InvalidParameter(
            "run_round requires a positive stake; apply the stake floor".into(),
        ));
    }
    let tau_before = ledger.tau();
    let y = source.draw()?;
    ledger.append(y, decision.stake)?;
    let pay = payoff(y, tau_before, decision.direction);
    let wealth_after = wealth.update(decision.stake, pay);
    Ok(RoundOutcome {
        outcome: y,
        payoff: pay,
        decision,
        tau_before,
        tau_after: ledger.tau(),
        wealth_after,
    })
}

pub const TRACE_HEADER: &str = "round,stake,raw_stake,direction,outcome,payoff,tau,wealth";

/// Writes a round-by-round trace (rounds numbered from 1).
pub fn write_trace_csv<T: Scalar, W: Write>(mut out: W, rounds: &[RoundOutcome<T>]) -> std::io::Result<()> {
    writeln!(out, "{TRACE_HEADER}")?;
    for (i, r) in rounds.iter().enumerate() {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            i + 1,
            r.decision.stake,
            r.decision.raw_stake,
            r.decision.direction.as_i8(),
            r.outcome,
            r.payoff,
            r.tau_after,
            r.wealth_after
        )?;
    }
    Ok(())
}

fn unit<T: Scalar>(v: T, name: &str) -> Result<()> {
    if v >= T::zero() && v <= T::one() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("{name} must lie in [0, 1], got {v}")))
    }
}
