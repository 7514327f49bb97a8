//! Betting-based sequential estimation of a real-world mean from scarce real
//! samples, guided by cheap simulator experts.
//!
//! The math (`betting`, `strategies`, `experts`, `diagnostics`) is generic
//! over [`Scalar`] (`f32` or `f64`); distributions, the importance-sampling
//! baseline and the experiment harness work in `f64`.

pub mod baselines;
pub mod betting;
pub mod diagnostics;
pub mod distlib;
pub mod error;
pub mod experts;
pub mod harness;
pub mod quadrature;
pub mod rng;
pub mod scalar;
pub mod strategies;

pub use error::{Error, Result};
pub use rng::RandomStream;
pub use scalar::Scalar;

pub type Ledger64 = betting::Ledger<f64>;
pub type Ledger32 = betting::Ledger<f32>;
pub type WealthProcess64 = betting::WealthProcess<f64>;
pub type WealthProcess32 = betting::WealthProcess<f32>;
pub type BetDecision64 = betting::BetDecision<f64>;
pub type BetDecision32 = betting::BetDecision<f32>;
pub type KellyParams64 = strategies::KellyParams<f64>;
pub type KellyParams32 = strategies::KellyParams<f32>;
pub type Strategy64 = strategies::StrategyKind<f64>;
pub type Strategy32 = strategies::StrategyKind<f32>;
pub type Expert64 = experts::Expert<f64>;
pub type Expert32 = experts::Expert<f32>;
pub type ExpertBank64 = experts::ExpertBank<f64>;
pub type ExpertBank32 = experts::ExpertBank<f32>;
pub type MseDecomposition64 = diagnostics::MseDecomposition<f64>;
pub type EValueReport64 = diagnostics::EValueReport<f64>;
