//! Point and probabilistic scoring of predictive mixtures.
//!
//! LPS is reported as the negative mean log predictive density, so smaller
//! is better. Intervals are the central 90% intervals of the moment-matched
//! Gaussian at each location.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mixture::PredictiveMixture;

/// Upper 5% standard normal quantile, fixed to seven significant digits.
pub const Z90: f64 = 1.6448536;

const HALF_LOG_2PI: f64 = 0.918_938_533_204_672_7;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    pub rmse: f64,
    pub lps: f64,
    pub coverage90: f64,
    pub mean_width: f64,
    pub interval_score: f64,
    pub n_scored: usize,
}

/// Which predictive density enters the log score.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LpsDensity {
    /// Exact mixture density over all components.
    #[default]
    Mixture,
    /// Gaussian with the aggregated mean and variance.
    MomentMatched,
}

fn check_lengths(n_pred: usize, n_obs: usize) -> Result<()> {
    if n_pred != n_obs {
        return Err(Error::Scoring(format!("{n_pred} predictions but {n_obs} observations")));
    }
    if n_obs == 0 {
        return Err(Error::Scoring("nothing to score".into()));
    }
    Ok(())
}

pub fn rmse(means: &[f64], actuals: &[f64]) -> Result<f64> {
    check_lengths(means.len(), actuals.len())?;
    let sse: f64 = means.iter().zip(actuals).map(|(m, y)| (m - y).powi(2)).sum();
    Ok((sse / actuals.len() as f64).sqrt())
}

fn gaussian_log_density(y: f64, mean: f64, variance: f64) -> f64 {
    -HALF_LOG_2PI - 0.5 * variance.ln() - 0.5 * (y - mean).powi(2) / variance
}

/// Log of `sum_i exp(a_i)` without overflow.
fn log_sum_exp(terms: &[f64]) -> f64 {
    let max = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + terms.iter().map(|t| (t - max).exp()).sum::<f64>().ln()
}

/// Negative mean log mixture density of `actuals`.
pub fn lps(mixture: &PredictiveMixture, actuals: &[f64]) -> Result<f64> {
    check_lengths(mixture.len(), actuals.len())?;
    let mut total = 0.0;
    for (i, (pt, &y)) in mixture.points.iter().zip(actuals).enumerate() {
        let mut terms = Vec::with_capacity(pt.components.len());
        for c in pt.components.iter().filter(|c| c.weight > 0.0) {
            if !(c.variance > 0.0) {
                return Err(Error::Scoring(format!("component with variance {} at location {i}", c.variance)));
            }
            terms.push(c.weight.ln() + gaussian_log_density(y, c.mean, c.variance));
        }
        if terms.is_empty() {
            return Err(Error::Scoring(format!("no weighted component at location {i}")));
        }
        total -= log_sum_exp(&terms);
    }
    Ok(total / actuals.len() as f64)
}

/// Negative mean log density of the moment-matched Gaussians.
pub fn lps_gaussian(mixture: &PredictiveMixture, actuals: &[f64]) -> Result<f64> {
    check_lengths(mixture.len(), actuals.len())?;
    let mut total = 0.0;
    for (i, (pt, &y)) in mixture.points.iter().zip(actuals).enumerate() {
        if !(pt.variance > 0.0) {
            return Err(Error::Scoring(format!("variance {} at location {i}", pt.variance)));
        }
        total -= gaussian_log_density(y, pt.mean, pt.variance);
    }
    Ok(total / actuals.len() as f64)
}

/// Central 90% interval `(lower, upper)` at every location.
pub fn intervals90(mixture: &PredictiveMixture) -> Vec<(f64, f64)> {
    mixture
        .points
        .iter()
        .map(|pt| {
            let half = Z90 * pt.variance.max(0.0).sqrt();
            (pt.mean - half, pt.mean + half)
        })
        .collect()
}

/// Empirical coverage and mean width of the closed 90% intervals.
pub fn hpd90(mixture: &PredictiveMixture, actuals: &[f64]) -> Result<(f64, f64)> {
    check_lengths(mixture.len(), actuals.len())?;
    let iv = intervals90(mixture);
    let covered = iv.iter().zip(actuals).filter(|((l, u), y)| *l <= **y && **y <= *u).count();
    let width: f64 = iv.iter().map(|(l, u)| u - l).sum();
    let n = actuals.len() as f64;
    Ok((covered as f64 / n, width / n))
}

fn interval_score_one(lower: f64, upper: f64, y: f64, alpha: f64) -> f64 {
    let mut s = upper - lower;
    if y < lower {
        s += 2.0 / alpha * (lower - y);
    }
    if y > upper {
        s += 2.0 / alpha * (y - upper);
    }
    s
}

/// Mean interval score of the 90% intervals with penalty level `alpha`.
pub fn interval_score(mixture: &PredictiveMixture, actuals: &[f64], alpha: f64) -> Result<f64> {
    check_lengths(mixture.len(), actuals.len())?;
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Scoring(format!("interval score alpha {alpha} outside (0, 1)")));
    }
    let total: f64 = intervals90(mixture)
        .iter()
        .zip(actuals)
        .map(|(&(l, u), &y)| interval_score_one(l, u, y, alpha))
        .sum();
    Ok(total / actuals.len() as f64)
}

/// All scores for one method on one test set.
pub fn score(mixture: &PredictiveMixture, actuals: &[f64], density: LpsDensity) -> Result<ScoreReport> {
    let rmse = rmse(&mixture.means(), actuals)?;
    let lps = match density {
        LpsDensity::Mixture => lps(mixture, actuals)?,
        LpsDensity::MomentMatched => lps_gaussian(mixture, actuals)?,
    };
    let (coverage90, mean_width) = hpd90(mixture, actuals)?;
    let interval_score = interval_score(mixture, actuals, 0.1)?;
    Ok(ScoreReport {
        rmse,
        lps,
        coverage90,
        mean_width,
        interval_score,
        n_scored: actuals.len(),
    })
}
