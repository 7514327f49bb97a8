//! Evidence and efficiency checks: the wealth e-value test, the MSE
//! decomposition of the bet-weighted estimator and inverse-variance weights.

use std::fmt;

use rand::RngCore;
use rayon::prelude::*;

use crate::betting::{payoff, Direction, WealthProcess};
use crate::error::{Error, Result};
use crate::experts::DEFAULT_VARIANCE_FLOOR;
use crate::rng::RandomStream;
use crate::scalar::Scalar;

fn check_alpha<T: Scalar>(alpha: T) -> Result<()> {
    if alpha > T::zero() && alpha < T::one() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("alpha must lie in (0, 1), got {alpha}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EValueReport<T> {
    pub final_wealth: T,
    pub alpha: T,
    pub threshold: T,
    pub exceeds: bool,
}

impl<T: Scalar> fmt::Display for EValueReport<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.exceeds {
            write!(
                f,
                "final wealth {} >= {} (1/alpha): reject no-edge at level {}",
                self.final_wealth, self.threshold, self.alpha
            )
        } else {
            write!(
                f,
                "final wealth {} < {} (1/alpha): no evidence of edge at level {}",
                self.final_wealth, self.threshold, self.alpha
            )
        }
    }
}

pub fn evalue_check<T: Scalar>(wealth: &WealthProcess<T>, alpha: T) -> Result<EValueReport<T>> {
    evalue_from_final(wealth.current(), alpha)
}

pub fn evalue_from_final<T: Scalar>(final_wealth: T, alpha: T) -> Result<EValueReport<T>> {
    check_alpha(alpha)?;
    let threshold = T::one() / alpha;
    Ok(EValueReport {
        final_wealth,
        alpha,
        threshold,
        exceeds: final_wealth >= threshold,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct MseDecomposition<T> {
    pub weights: Vec<T>,
    pub sigma_sq: Vec<T>,
    pub beta: Vec<T>,
    /// `sum w_t^2 sigma_t^2`
    pub variance_term: T,
    /// `(sum w_t beta_t)^2`
    pub bias_term: T,
    /// `sigma^2 / n`
    pub mc_variance: T,
    pub efficiency_holds: bool,
}

impl<T: Scalar> MseDecomposition<T> {
    pub fn mse(&self) -> T {
        self.variance_term + self.bias_term
    }
}

/// `beta` is the per-round weight/outcome dependence, supplied as a known
/// input.
pub fn mse_decomposition<T: Scalar>(
    weights: &[T],
    sigma_sq: &[T],
    beta: &[T],
    sigma_sq_target: T,
    n: usize,
) -> Result<MseDecomposition<T>> {
    if weights.len() != sigma_sq.len() || weights.len() != beta.len() {
        return Err(Error::LengthMismatch(format!(
            "weights {}, sigma_sq {}, beta {}",
            weights.len(),
            sigma_sq.len(),
            beta.len()
        )));
    }
    if n == 0 {
        return Err(Error::InvalidParameter("n must be >= 1".into()));
    }
    let total: T = weights.iter().copied().sum();
    if (total.to_f64_lossy() - 1.0).abs() > 1e-9 {
        return Err(Error::NotNormalized(total.to_f64_lossy()));
    }
    let variance_term: T = weights.iter().zip(sigma_sq).map(|(w, s)| *w * *w * *s).sum();
    let drift: T = weights.iter().zip(beta).map(|(w, b)| *w * *b).sum();
    let bias_term = drift * drift;
    let mc_variance = sigma_sq_target / T::from_usize(n).expect("n fits");
    Ok(MseDecomposition {
        weights: weights.to_vec(),
        sigma_sq: sigma_sq.to_vec(),
        beta: beta.to_vec(),
        variance_term,
        bias_term,
        mc_variance,
        efficiency_holds: mc_variance - variance_term > bias_term,
    })
}

/// `w_t = (1/sigma_t^2) / sum_j (1/sigma_j^2)`, with each variance floored.
pub fn inverse_variance_weights<T: Scalar>(sigma_sq: &[T]) -> Vec<T> {
    let floor = T::lit(DEFAULT_VARIANCE_FLOOR);
    let inv: Vec<T> = sigma_sq.iter().map(|s| T::one() / s.max(floor)).collect();
    let total: T = inv.iter().copied().sum();
    inv.into_iter().map(|v| v / total).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct NullExceedance {
    pub rate: f64,
    /// `alpha + 3 sqrt(alpha (1 - alpha) / reps)`
    pub bound: f64,
    pub exceedances: usize,
    pub replications: usize,
    /// Across-replication mean of `W_t`, `t = 0..=T`.
    pub mean_wealth: Vec<f64>,
    /// Monte Carlo standard error of each entry of `mean_wealth`.
    pub mean_wealth_se: Vec<f64>,
}

impl NullExceedance {
    pub fn within_bound(&self) -> bool {
        self.rate <= self.bound
    }

    /// Every mean wealth stays below `1 + 3 se`.
    pub fn supermartingale_ok(&self) -> bool {
        self.mean_wealth
            .iter()
            .zip(&self.mean_wealth_se)
            .all(|(m, se)| *m <= 1.0 + 3.0 * se)
    }
}

/// Bets a fixed stake with a coin-flip direction against outcomes uniform on
/// `[0, 1]` and a fixed estimate of 0.5, so every payoff has conditional mean
/// zero. Counts replications whose final wealth reaches `1/alpha`.
pub fn null_exceedance_simulation(
    rounds: usize,
    stake: f64,
    alpha: f64,
    replications: usize,
    stream: &mut RandomStream,
) -> Result<NullExceedance> {
    check_alpha(alpha)?;
    if !(0.0..=1.0).contains(&stake) {
        return Err(Error::InvalidParameter(format!("stake must lie in [0, 1], got {stake}")));
    }
    if replications == 0 {
        return Err(Error::InvalidParameter("replications must be >= 1".into()));
    }
    let base = stream.next_u64();
    let tau = 0.5;
    let paths: Vec<Vec<f64>> = (0..replications)
        .into_par_iter()
        .map(|r| {
            let mut s = RandomStream::derive(base, &["null", &r.to_string()]);
            let mut w = WealthProcess::<f64>::new();
            for _ in 0..rounds {
                let dir = if s.uniform() < 0.5 { Direction::Up } else { Direction::Down };
                let y = s.uniform();
                w.update(stake, payoff(y, tau, dir));
            }
            w.trajectory().to_vec()
        })
        .collect();
    let threshold = 1.0 / alpha;
    let exceedances = paths.iter().filter(|p| p[rounds] >= threshold).count();
    let n = replications as f64;
    let mut mean_wealth = vec![0.0; rounds + 1];
    let mut sq = vec![0.0; rounds + 1];
    for p in &paths {
        for (t, w) in p.iter().enumerate() {
            mean_wealth[t] += w;
            sq[t] += w * w;
        }
    }
    let mean_wealth_se = mean_wealth
        .iter_mut()
        .zip(&sq)
        .map(|(m, s)| {
            *m /= n;
            let var = if replications > 1 {
                ((s / n - *m * *m) * n / (n - 1.0)).max(0.0)
            } else {
                0.0
            };
            (var / n).sqrt()
        })
        .collect();
    Ok(NullExceedance {
        rate: exceedances as f64 / n,
        bound: alpha + 3.0 * (alpha * (1.0 - alpha) / n).sqrt(),
        exceedances,
        replications,
        mean_wealth,
        mean_wealth_se,
    })
}
