//! Replicated experiment runs.

use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use rand::seq::index;
use rayon::prelude::*;
use serde::Serialize;
use sha2::{Digest, Sha256};

use super::config::{ExperimentConfig, ResolvedMethod};
use crate::ensemble::{EppModel, MreppModel};
use crate::error::{Error, Result};
use crate::gp::GpFit;
use crate::kernels::{KernelParams, Location};
use crate::metrics::{score, ScoreReport};
use crate::mixture::PredictiveMixture;
use crate::pp::PpModel;
use crate::rng::{stream, sub_seed, Stream};
use crate::simgen::{fmt_g12, generate, Dataset, ScenarioConfig};
use crate::support_points::{support_points, SpConfig};

pub const RESULTS_HEADER: &str =
    "method,scenario,n,contamination,seed,rmse,lps,coverage90,mean_width,interval_score,runtime_s,status";

/// One method scored on one replicate.
#[derive(Clone, Debug, PartialEq)]
pub struct ResultRow {
    pub method: String,
    pub scenario: String,
    pub n: usize,
    pub contamination: f64,
    pub seed: u64,
    /// `None` when the method failed.
    pub scores: Option<ScoreReport>,
    /// Mean squared error of the predictive mean against the noise-free
    /// test field.
    pub latent_mse: f64,
    pub runtime_s: f64,
    /// `ok`, or `error: ...` for failed methods.
    pub status: String,
}

impl ResultRow {
    pub fn is_ok(&self) -> bool {
        self.scores.is_some()
    }

    pub fn csv_line(&self) -> String {
        let nan = f64::NAN;
        let s = self.scores;
        let field = |f: fn(&ScoreReport) -> f64| fmt_g12(s.as_ref().map_or(nan, f));
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            self.method,
            self.scenario,
            self.n,
            fmt_g12(self.contamination),
            self.seed,
            field(|r| r.rmse),
            field(|r| r.lps),
            field(|r| r.coverage90),
            field(|r| r.mean_width),
            field(|r| r.interval_score),
            fmt_g12(self.runtime_s),
            self.status
        )
    }
}

/// Learned resolution weights of one MREPP fit.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightRow {
    pub method: String,
    pub scenario: String,
    pub n: usize,
    pub contamination: f64,
    pub seed: u64,
    pub weights: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MethodRun {
    pub method: String,
    pub status: String,
    pub runtime_s: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ReplicateManifest {
    pub replicate: usize,
    pub seed: u64,
    /// SHA-256 of the dataset CSV that every method of this replicate used.
    pub dataset_sha256: String,
    pub wall_time_s: f64,
    pub methods: Vec<MethodRun>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ResolvedEntry {
    pub method: String,
    pub resolved: ResolvedMethod,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Manifest {
    pub library_version: String,
    pub config: ExperimentConfig,
    pub resolved_methods: Vec<ResolvedEntry>,
    pub replicates: Vec<ReplicateManifest>,
    pub total_wall_time_s: f64,
}

/// Everything produced by [`run`].
#[derive(Clone, Debug)]
pub struct RunReport {
    pub rows: Vec<ResultRow>,
    pub weights: Vec<WeightRow>,
    pub manifest: Manifest,
}

impl RunReport {
    pub fn results_csv(&self) -> String {
        results_csv(&self.rows)
    }

    /// Wide table `method,scenario,n,contamination,seed,p1,...,pL`; rows of
    /// methods with fewer levels leave the trailing cells empty.
    pub fn weights_csv(&self) -> String {
        let levels = self.weights.iter().map(|w| w.weights.len()).max().unwrap_or(0);
        let mut out = String::from("method,scenario,n,contamination,seed");
        for l in 1..=levels {
            let _ = write!(out, ",p{l}");
        }
        out.push('\n');
        for w in &self.weights {
            let _ = write!(
                out,
                "{},{},{},{},{}",
                w.method,
                w.scenario,
                w.n,
                fmt_g12(w.contamination),
                w.seed
            );
            for l in 0..levels {
                out.push(',');
                if let Some(p) = w.weights.get(l) {
                    out.push_str(&fmt_g12(*p));
                }
            }
            out.push('\n');
        }
        out
    }

    pub fn manifest_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.manifest)?)
    }

    /// Writes `results.csv`, `weights.csv` and `manifest.json` into `dir`.
    pub fn write_to(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("results.csv"), self.results_csv())?;
        std::fs::write(dir.join("weights.csv"), self.weights_csv())?;
        std::fs::write(dir.join("manifest.json"), self.manifest_json()? + "\n")?;
        Ok(())
    }
}

pub fn results_csv(rows: &[ResultRow]) -> String {
    let mut out = String::from(RESULTS_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&r.csv_line());
        out.push('\n');
    }
    out
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().fold(String::with_capacity(64), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

/// Predictions of one fitted method on the test set.
pub struct MethodOutput {
    pub mixture: PredictiveMixture,
    /// Learned resolution weights for MREPP.
    pub weights: Option<Vec<f64>>,
}

/// Training indices held out for MREPP weight calibration.
pub fn calibration_indices(n: usize, fraction: f64, levels: usize, seed: u64) -> Result<Vec<usize>> {
    let count = ((fraction * n as f64).round() as usize).max(levels);
    if count >= n {
        return Err(Error::Input(format!(
            "calibration set of {count} leaves no training data out of {n}"
        )));
    }
    let mut idx = index::sample(&mut stream(seed, Stream::Calibration), n, count).into_vec();
    idx.sort_unstable();
    Ok(idx)
}

fn split(data: &Dataset, calib: &[usize]) -> (Vec<Location>, Vec<f64>, Vec<Location>, Vec<f64>) {
    let mut held = vec![false; data.n()];
    for &i in calib {
        held[i] = true;
    }
    let (mut tl, mut tv, mut cl, mut cv) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for i in 0..data.n() {
        if held[i] {
            cl.push(data.train_locations[i]);
            cv.push(data.train_values[i]);
        } else {
            tl.push(data.train_locations[i]);
            tv.push(data.train_values[i]);
        }
    }
    (tl, tv, cl, cv)
}

/// Fits `method` on the dataset's training data and predicts its test
/// locations. `seed` is the replicate seed.
pub fn fit_and_predict(
    method: &ResolvedMethod,
    data: &Dataset,
    params: KernelParams,
    sp: &SpConfig,
    seed: u64,
) -> Result<MethodOutput> {
    let sp = sp.with_seed(sub_seed(seed, Stream::SupportPoints));
    let (locs, vals, targets) = (&data.train_locations, &data.train_values, &data.test_locations);
    let output = match method {
        ResolvedMethod::Gp => MethodOutput {
            mixture: GpFit::fit(locs, vals, params)?.predict(targets),
            weights: None,
        },
        ResolvedMethod::Pp { m } => {
            let inducing = support_points(locs, *m, &sp)?;
            MethodOutput {
                mixture: PpModel::fit(locs, vals, &inducing, params)?.predict(targets),
                weights: None,
            }
        }
        ResolvedMethod::Epp { k, m, delta } => MethodOutput {
            mixture: EppModel::fit(locs, vals, *k, *m, *delta, params, &sp)?.predict(targets),
            weights: None,
        },
        ResolvedMethod::Mrepp { levels, calib_fraction } => {
            let calib = calibration_indices(data.n(), *calib_fraction, levels.len(), seed)?;
            let (tl, tv, cl, cv) = split(data, &calib);
            let mut model = MreppModel::fit(&tl, &tv, levels, params, &sp)?;
            let p = model.learn_weights(&cl, &cv)?;
            MethodOutput {
                mixture: model.predict(targets),
                weights: Some(p),
            }
        }
    };
    Ok(output)
}

fn status_of(err: &Error) -> String {
    let msg: String = err
        .to_string()
        .chars()
        .map(|c| match c {
            ',' => ';',
            '\n' | '\r' | '"' => ' ',
            c => c,
        })
        .collect();
    format!("error: {msg}")
}

struct ReplicateOutput {
    rows: Vec<ResultRow>,
    weights: Vec<WeightRow>,
    manifest: ReplicateManifest,
}

fn run_replicate(
    cfg: &ExperimentConfig,
    methods: &[(String, ResolvedMethod)],
    replicate: usize,
) -> ReplicateOutput {
    let started = Instant::now();
    let seed = cfg.scenario.seed.wrapping_add(replicate as u64);
    let scenario = ScenarioConfig { seed, ..cfg.scenario };
    let contamination = scenario.contamination_value.unwrap_or(0.0);
    let row = |method: &str, scores, latent_mse, runtime_s, status: String| ResultRow {
        method: method.to_string(),
        scenario: scenario.scenario.name().to_string(),
        n: scenario.n,
        contamination,
        seed,
        scores,
        latent_mse,
        runtime_s,
        status,
    };

    let data = match generate(&scenario) {
        Ok(d) => d,
        Err(e) => {
            let status = status_of(&e);
            log::warn!("replicate {replicate}: data generation failed: {e}");
            let rows: Vec<ResultRow> = methods
                .iter()
                .map(|(name, _)| row(name, None, f64::NAN, 0.0, status.clone()))
                .collect();
            let runs = rows
                .iter()
                .map(|r| MethodRun {
                    method: r.method.clone(),
                    status: r.status.clone(),
                    runtime_s: 0.0,
                })
                .collect();
            return ReplicateOutput {
                rows,
                weights: Vec::new(),
                manifest: ReplicateManifest {
                    replicate,
                    seed,
                    dataset_sha256: String::new(),
                    wall_time_s: started.elapsed().as_secs_f64(),
                    methods: runs,
                },
            };
        }
    };
    let dataset_sha256 = sha256_hex(&data.to_csv_bytes(None));

    let mut rows = Vec::with_capacity(methods.len());
    let mut weights = Vec::new();
    let mut runs = Vec::with_capacity(methods.len());
    for (name, method) in methods {
        let t0 = Instant::now();
        let outcome = fit_and_predict(method, &data, scenario.params, &cfg.sp, seed).and_then(|out| {
            let report = score(&out.mixture, &data.test_values, cfg.lps_density)?;
            Ok((out, report))
        });
        let runtime_s = t0.elapsed().as_secs_f64();
        let r = match outcome {
            Ok((out, report)) => {
                let means = out.mixture.means();
                let latent_mse = means
                    .iter()
                    .zip(&data.test_latent)
                    .map(|(m, f)| (m - f).powi(2))
                    .sum::<f64>()
                    / means.len() as f64;
                if let Some(p) = out.weights {
                    weights.push(WeightRow {
                        method: name.clone(),
                        scenario: scenario.scenario.name().to_string(),
                        n: scenario.n,
                        contamination,
                        seed,
                        weights: p,
                    });
                }
                row(name, Some(report), latent_mse, runtime_s, "ok".into())
            }
            Err(e) => {
                log::warn!("replicate {replicate}, method {name}: {e}");
                row(name, None, f64::NAN, runtime_s, status_of(&e))
            }
        };
        runs.push(MethodRun {
            method: name.clone(),
            status: r.status.clone(),
            runtime_s,
        });
        rows.push(r);
    }
    ReplicateOutput {
        rows,
        weights,
        manifest: ReplicateManifest {
            replicate,
            seed,
            dataset_sha256,
            wall_time_s: started.elapsed().as_secs_f64(),
            methods: runs,
        },
    }
}

/// Runs every method on every replicate. Replicates are scheduled on
/// `parallel_jobs` threads; output order is replicate-major and does not
/// depend on scheduling.
pub fn run(cfg: &ExperimentConfig) -> Result<RunReport> {
    cfg.validate()?;
    if cfg.methods.is_empty() {
        return Err(Error::Config("no methods configured".into()));
    }
    let started = Instant::now();
    let methods = cfg.resolved_methods(cfg.scenario.n)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.parallel_jobs)
        .build()
        .map_err(|e| Error::Config(format!("cannot start {} worker threads: {e}", cfg.parallel_jobs)))?;
    let outputs: Vec<ReplicateOutput> = pool.install(|| {
        (0..cfg.replicates)
            .into_par_iter()
            .map(|r| run_replicate(cfg, &methods, r))
            .collect()
    });

    let mut rows = Vec::new();
    let mut weights = Vec::new();
    let mut replicates = Vec::new();
    for out in outputs {
        rows.extend(out.rows);
        weights.extend(out.weights);
        replicates.push(out.manifest);
    }
    Ok(RunReport {
        rows,
        weights,
        manifest: Manifest {
            library_version: env!("CARGO_PKG_VERSION").to_string(),
            config: cfg.clone(),
            resolved_methods: methods
                .into_iter()
                .map(|(method, resolved)| ResolvedEntry { method, resolved })
                .collect(),
            replicates,
            total_wall_time_s: started.elapsed().as_secs_f64(),
        },
    })
}
