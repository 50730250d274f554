//! Convergence-slope diagnostic: least-squares slope of log mean squared
//! error against log `n`.
//!
//! The error is measured against the noise-free test field, so the fitted
//! slope tracks the L2 risk of the predictive mean rather than being floored
//! by the nugget.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::Serialize;

use super::config::ExperimentConfig;
use super::run::{run, ResultRow};
use crate::error::{Error, Result};
use crate::simgen::fmt_g12;

pub const SLOPES_HEADER: &str = "method,slope,std_err,n_values";
pub const SLOPE_POINTS_HEADER: &str = "method,n,seed,mse_latent,rmse,status";

const MIN_GRID: usize = 3;
const MIN_REPLICATES: usize = 5;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SlopeFit {
    pub slope: f64,
    pub std_err: f64,
    pub n_values: usize,
}

/// Ordinary least-squares slope of `y` on `x` and its standard error (NaN
/// for two points).
pub fn ols_slope(x: &[f64], y: &[f64]) -> Result<(f64, f64)> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(Error::Input("slope needs at least two paired points".into()));
    }
    let k = x.len() as f64;
    let mx = x.iter().sum::<f64>() / k;
    let my = y.iter().sum::<f64>() / k;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    if !(sxx > 0.0) {
        return Err(Error::Input("slope needs at least two distinct x values".into()));
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ssr: f64 = x.iter().zip(y).map(|(a, b)| (b - intercept - slope * a).powi(2)).sum();
    let std_err = if x.len() > 2 {
        (ssr / (k - 2.0) / sxx).sqrt()
    } else {
        f64::NAN
    };
    Ok((slope, std_err))
}

/// Fits `log(mean err2) ~ log n` from `(n, err2)` samples. Needs at least
/// three distinct `n` with at least five samples each.
pub fn slope_diagnostic(samples: &[(usize, f64)]) -> Result<SlopeFit> {
    let mut by_n: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
    for &(n, e) in samples {
        if e.is_finite() {
            by_n.entry(n).or_default().push(e);
        }
    }
    if by_n.len() < MIN_GRID {
        return Err(Error::Input(format!(
            "slope needs at least {MIN_GRID} distinct n values, got {}",
            by_n.len()
        )));
    }
    if let Some((n, v)) = by_n.iter().find(|(_, v)| v.len() < MIN_REPLICATES) {
        return Err(Error::Input(format!(
            "slope needs at least {MIN_REPLICATES} replicates per n; n = {n} has {}",
            v.len()
        )));
    }
    let x: Vec<f64> = by_n.keys().map(|&n| (n as f64).ln()).collect();
    let y: Vec<f64> = by_n
        .values()
        .map(|v| (v.iter().sum::<f64>() / v.len() as f64).ln())
        .collect();
    let (slope, std_err) = ols_slope(&x, &y)?;
    Ok(SlopeFit {
        slope,
        std_err,
        n_values: by_n.len(),
    })
}

#[derive(Debug)]
pub struct SlopeReport {
    /// Every `(method, n, replicate)` row of the underlying runs.
    pub points: Vec<ResultRow>,
    /// One fit per method, in config order.
    pub fits: Vec<(String, Result<SlopeFit>)>,
}

impl SlopeReport {
    pub fn fit(&self, method: &str) -> Option<&SlopeFit> {
        self.fits.iter().find(|(m, _)| m == method).and_then(|(_, f)| f.as_ref().ok())
    }

    pub fn slopes_csv(&self) -> String {
        let mut out = String::from(SLOPES_HEADER);
        out.push('\n');
        for (method, fit) in &self.fits {
            match fit {
                Ok(f) => {
                    let _ = writeln!(out, "{method},{},{},{}", fmt_g12(f.slope), fmt_g12(f.std_err), f.n_values);
                }
                Err(_) => {
                    let _ = writeln!(out, "{method},nan,nan,0");
                }
            }
        }
        out
    }

    pub fn points_csv(&self) -> String {
        let mut out = String::from(SLOPE_POINTS_HEADER);
        out.push('\n');
        for r in &self.points {
            let rmse = r.scores.map_or(f64::NAN, |s| s.rmse);
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                r.method,
                r.n,
                r.seed,
                fmt_g12(r.latent_mse),
                fmt_g12(rmse),
                r.status
            );
        }
        out
    }

    /// Writes `slopes.csv` and `slope_points.csv` into `dir`.
    pub fn write_to(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("slopes.csv"), self.slopes_csv())?;
        std::fs::write(dir.join("slope_points.csv"), self.points_csv())?;
        Ok(())
    }
}

/// Runs the configured methods at every `n` of `cfg.slopes.n_grid` and fits
/// one slope per method.
pub fn run_slopes(cfg: &ExperimentConfig) -> Result<SlopeReport> {
    cfg.validate()?;
    let mut points = Vec::new();
    for &n in &cfg.slopes.n_grid {
        let mut at_n = cfg.clone();
        at_n.scenario.n = n;
        points.extend(run(&at_n)?.rows);
    }
    let fits = cfg
        .methods
        .iter()
        .map(|m| {
            let label = m.label();
            let samples: Vec<(usize, f64)> = points
                .iter()
                .filter(|r| r.method == label && r.is_ok())
                .map(|r| (r.n, r.latent_mse))
                .collect();
            let fit = slope_diagnostic(&samples);
            (label, fit)
        })
        .collect();
    Ok(SlopeReport { points, fits })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_power_law() {
        let samples: Vec<(usize, f64)> = [250usize, 500, 1000, 2000]
            .iter()
            .flat_map(|&n| (0..5).map(move |_| (n, 3.0 * (n as f64).powf(-0.6))))
            .collect();
        let fit = slope_diagnostic(&samples).unwrap();
        assert!((fit.slope + 0.6).abs() < 1e-6);
        assert!(fit.std_err < 1e-6);
        assert_eq!(fit.n_values, 4);
    }

    #[test]
    fn insufficient_grid() {
        let two: Vec<(usize, f64)> = (0..10).map(|i| (100 * (1 + i % 2), 1.0)).collect();
        assert!(slope_diagnostic(&two).is_err());
        let thin = [(100, 1.0), (200, 1.0), (300, 1.0)];
        assert!(slope_diagnostic(&thin).is_err());
    }

    #[test]
    fn ols_known_line() {
        let (s, se) = ols_slope(&[0.0, 1.0, 2.0], &[1.0, 3.0, 5.0]).unwrap();
        assert!((s - 2.0).abs() < 1e-15 && se.abs() < 1e-15);
        assert!(ols_slope(&[1.0, 1.0], &[0.0, 1.0]).is_err());
    }
}
