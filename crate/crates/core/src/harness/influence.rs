//! Influence-function audit of the exact GP against the predictive process.
//!
//! Every trial draws a uniform design on `[-3, 3]^2` and a uniform target,
//! computes both analytic influence vectors and their bounds, and checks
//! selected entries against central finite differences of the predictive
//! mean.

use std::fmt::Write as _;

use rand::seq::index;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

use super::config::ExperimentConfig;
use super::slopes::ols_slope;
use crate::error::Result;
use crate::gp::{GpFit, Influence};
use crate::kernels::Location;
use crate::pp::PpModel;
use crate::rng::{derive_seed, stream, sub_seed, Stream};
use crate::simgen::fmt_g12;
use crate::support_points::support_points;

pub const INFLUENCE_HEADER: &str = "n,m,max_infl_gp,bound_gp,max_infl_pp,bound_pp,fd_max_err";

const HALF_WIDTH: f64 = 3.0;
const FD_STEP: f64 = 1e-3;
const FD_TOP: usize = 10;

/// One random design.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct InfluenceTrial {
    pub n: usize,
    pub m: usize,
    pub trial: usize,
    pub max_infl_gp: f64,
    pub bound_gp: f64,
    pub max_infl_pp: f64,
    pub bound_pp: f64,
    /// Smallest eigenvalue of `C_nm' C_nm / n`.
    pub e_min: f64,
    /// Largest relative finite-difference error over the checked entries of
    /// both methods.
    pub fd_max_err: f64,
    pub gp_bound_holds: bool,
    pub pp_bound_holds: bool,
}

/// Trial means for one `(n, m)` cell; `fd_max_err` is the worst trial.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct InfluenceRow {
    pub n: usize,
    pub m: usize,
    pub max_infl_gp: f64,
    pub bound_gp: f64,
    pub max_infl_pp: f64,
    pub bound_pp: f64,
    pub fd_max_err: f64,
    pub violations: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct InfluenceReport {
    pub rows: Vec<InfluenceRow>,
    pub trials: Vec<InfluenceTrial>,
}

impl InfluenceReport {
    pub fn csv(&self) -> String {
        let mut out = String::from(INFLUENCE_HEADER);
        out.push('\n');
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{}",
                r.n,
                r.m,
                fmt_g12(r.max_infl_gp),
                fmt_g12(r.bound_gp),
                fmt_g12(r.max_infl_pp),
                fmt_g12(r.bound_pp),
                fmt_g12(r.fd_max_err)
            );
        }
        out
    }

    pub fn total_violations(&self) -> usize {
        self.rows.iter().map(|r| r.violations).sum()
    }

    /// Log-log slopes `(gp, pp)` of mean max influence against `n` at fixed
    /// `m`.
    pub fn decay_slopes(&self, m: usize) -> Result<(f64, f64)> {
        let cells: Vec<&InfluenceRow> = self.rows.iter().filter(|r| r.m == m).collect();
        let x: Vec<f64> = cells.iter().map(|r| (r.n as f64).ln()).collect();
        let gp: Vec<f64> = cells.iter().map(|r| r.max_infl_gp.ln()).collect();
        let pp: Vec<f64> = cells.iter().map(|r| r.max_infl_pp.ln()).collect();
        Ok((ols_slope(&x, &gp)?.0, ols_slope(&x, &pp)?.0))
    }
}

fn uniform_point(rng: &mut impl Rng) -> Location {
    Location::new(
        rng.random_range(-HALF_WIDTH..HALF_WIDTH),
        rng.random_range(-HALF_WIDTH..HALF_WIDTH),
    )
}

/// Indices of the `k` largest `|values|`, ties toward lower indices.
fn top_indices(values: &[f64], k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[b].abs().total_cmp(&values[a].abs()).then(a.cmp(&b)));
    idx.truncate(k);
    idx
}

fn relative_error(fd: f64, analytic: f64, max_abs: f64) -> f64 {
    (fd - analytic).abs() / analytic.abs().max(1e-2 * max_abs).max(f64::MIN_POSITIVE)
}

/// Worst relative error of central differences of `mean(values)` against
/// the analytic influence at `check`.
fn fd_error<F>(values: &[f64], infl: &Influence, check: &[usize], mean: F) -> Result<f64>
where
    F: Fn(&[f64]) -> Result<f64>,
{
    let mut worst = 0.0f64;
    let mut y = values.to_vec();
    for &i in check {
        let orig = y[i];
        y[i] = orig + FD_STEP;
        let plus = mean(&y)?;
        y[i] = orig - FD_STEP;
        let minus = mean(&y)?;
        y[i] = orig;
        let fd = (plus - minus) / (2.0 * FD_STEP);
        worst = worst.max(relative_error(fd, infl.values[i], infl.max_abs));
    }
    Ok(worst)
}

/// Runs one audit trial.
pub fn influence_trial(cfg: &ExperimentConfig, n: usize, m: usize, trial: usize) -> Result<InfluenceTrial> {
    let params = cfg.scenario.params;
    let design_seed = derive_seed(derive_seed(cfg.scenario.seed, n as u64), trial as u64);
    let mut rng = stream(design_seed, Stream::Audit);
    let locations: Vec<Location> = (0..n).map(|_| uniform_point(&mut rng)).collect();
    let target = uniform_point(&mut rng);
    let values: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
    let mut pick_rng = stream(derive_seed(design_seed, m as u64), Stream::Audit);

    let gp = GpFit::fit(&locations, &values, params)?;
    let gp_infl = gp.influence(&target)?;
    let sp = cfg
        .sp
        .with_seed(sub_seed(derive_seed(design_seed, m as u64), Stream::SupportPoints));
    let inducing = support_points(&locations, m, &sp)?;
    let pp = PpModel::fit(&locations, &values, &inducing, params)?;
    let pp_infl = pp.influence(&target)?;

    let random: Vec<usize> = index::sample(&mut pick_rng, n, cfg.influence.fd_checks.min(n)).into_vec();
    let checks = |infl: &Influence| {
        let mut idx = top_indices(&infl.values, FD_TOP);
        idx.extend(&random);
        idx.sort_unstable();
        idx.dedup();
        idx
    };
    let gp_err = fd_error(&values, &gp_infl, &checks(&gp_infl), |y| {
        Ok(gp.with_values(y)?.predict(&[target]).points[0].mean)
    })?;
    let pp_err = fd_error(&values, &pp_infl, &checks(&pp_infl), |y| {
        Ok(pp.with_values(y)?.predict(&[target]).points[0].mean)
    })?;

    Ok(InfluenceTrial {
        n,
        m,
        trial,
        max_infl_gp: gp_infl.max_abs,
        bound_gp: gp_infl.bound,
        max_infl_pp: pp_infl.max_abs,
        bound_pp: pp_infl.bound,
        e_min: pp_infl.e_min.unwrap_or(f64::NAN),
        fd_max_err: gp_err.max(pp_err),
        gp_bound_holds: gp_infl.bound_holds,
        pp_bound_holds: pp_infl.bound_holds,
    })
}

/// Runs the `(n, m, trial)` grid of `cfg.influence` on `parallel_jobs`
/// threads.
pub fn influence_audit(cfg: &ExperimentConfig) -> Result<InfluenceReport> {
    cfg.validate()?;
    let grid = &cfg.influence;
    let jobs: Vec<(usize, usize, usize)> = grid
        .n_grid
        .iter()
        .flat_map(|&n| grid.m_grid.iter().flat_map(move |&m| (0..grid.trials).map(move |t| (n, m, t))))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.parallel_jobs)
        .build()
        .map_err(|e| crate::Error::Config(format!("cannot start worker threads: {e}")))?;
    let trials: Vec<InfluenceTrial> = pool.install(|| {
        jobs.par_iter()
            .map(|&(n, m, t)| influence_trial(cfg, n, m, t))
            .collect::<Result<Vec<_>>>()
    })?;

    let rows = trials
        .chunks(grid.trials)
        .map(|cell| {
            let k = cell.len() as f64;
            let mean = |f: fn(&InfluenceTrial) -> f64| cell.iter().map(f).sum::<f64>() / k;
            InfluenceRow {
                n: cell[0].n,
                m: cell[0].m,
                max_infl_gp: mean(|t| t.max_infl_gp),
                bound_gp: mean(|t| t.bound_gp),
                max_infl_pp: mean(|t| t.max_infl_pp),
                bound_pp: mean(|t| t.bound_pp),
                fd_max_err: cell.iter().map(|t| t.fd_max_err).fold(0.0, f64::max),
                violations: cell
                    .iter()
                    .map(|t| usize::from(!t.gp_bound_holds) + usize::from(!t.pp_bound_holds))
                    .sum(),
            }
        })
        .collect();
    Ok(InfluenceReport { rows, trials })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::config::InfluenceConfig;
    use crate::simgen::{Scenario, ScenarioConfig};

    fn cfg(n_grid: Vec<usize>, trials: usize) -> ExperimentConfig {
        let mut c = ExperimentConfig::new(ScenarioConfig::new(Scenario::FixedSpace, 100, 9), vec![], 1);
        c.influence = InfluenceConfig {
            n_grid,
            m_grid: vec![10],
            trials,
            fd_checks: 5,
        };
        c
    }

    #[test]
    fn audit_rows_hold_bounds_and_match_fd() {
        let report = influence_audit(&cfg(vec![100, 200], 3)).unwrap();
        assert_eq!(report.rows.len(), 2);
        assert_eq!(report.trials.len(), 6);
        assert_eq!(report.total_violations(), 0);
        for r in &report.rows {
            assert!(r.max_infl_gp <= r.bound_gp && r.max_infl_pp <= r.bound_pp);
            assert!(r.fd_max_err < 1e-4, "{r:?}");
        }
        let csv = report.csv();
        assert_eq!(csv.lines().next().unwrap(), INFLUENCE_HEADER);
        assert_eq!(csv.lines().count(), 3);
    }

    #[test]
    fn audit_is_deterministic() {
        let c = cfg(vec![80], 2);
        assert_eq!(influence_audit(&c).unwrap(), influence_audit(&c).unwrap());
    }

    #[test]
    fn top_indices_order() {
        assert_eq!(top_indices(&[0.1, -0.5, 0.3, 0.5], 3), vec![1, 3, 2]);
    }
}
