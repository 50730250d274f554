//! Experiment configuration and method resolution.
//!
//! Configs are TOML files. A minimal example:
//!
//! ```toml
//! replicates = 3
//! output_path = "out"
//!
//! [scenario]
//! scenario = "contaminated"
//! n = 1000
//! contamination_value = 15.0
//!
//! [[methods]]
//! kind = "gp"
//!
//! [[methods]]
//! kind = "mrepp"
//! alphas = [0.0, 0.5]
//! ```

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::ensemble::LevelConfig;
use crate::error::{Error, Result};
use crate::metrics::LpsDensity;
use crate::simgen::ScenarioConfig;
use crate::support_points::SpConfig;

fn one() -> usize {
    1
}

fn default_output() -> PathBuf {
    PathBuf::from("results")
}

fn default_m_max() -> usize {
    200
}

fn default_calib_fraction() -> f64 {
    0.2
}

/// One method to fit in every replicate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MethodEntry {
    /// Label used in output files; derived from the spec when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(flatten)]
    pub spec: MethodSpec,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MethodSpec {
    Gp,
    Pp {
        /// Inducing-point count; defaults to `min(n^(2/gamma), n/2)`.
        #[serde(default)]
        m: Option<usize>,
    },
    Epp {
        alpha: f64,
        #[serde(default)]
        delta: Option<f64>,
        /// Local inducing-point count; defaults to
        /// `min((n/K)^(2/gamma), n/(2K))`.
        #[serde(default)]
        m: Option<usize>,
    },
    Mrepp {
        alphas: Vec<f64>,
        #[serde(default = "default_m_max")]
        m_max: usize,
        #[serde(default)]
        delta: Option<f64>,
        #[serde(default = "default_calib_fraction")]
        calib_fraction: f64,
    },
}

/// A method spec with every size fixed for a given `n`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ResolvedMethod {
    Gp,
    Pp { m: usize },
    Epp { k: usize, m: usize, delta: Option<f64> },
    Mrepp { levels: Vec<LevelConfig>, calib_fraction: f64 },
}

/// `floor(n^alpha)`, at least 1.
pub fn regions_for(n: usize, alpha: f64) -> usize {
    // The epsilon keeps exact powers such as 1000^(1/3) from flooring down.
    ((n as f64).powf(alpha) * (1.0 + 1e-12)).floor().max(1.0) as usize
}

/// `min((n/K)^(2/gamma), n/(2K))` floored, at least 1.
pub fn inducing_for(n: usize, k: usize, gamma: f64) -> usize {
    let per = n as f64 / k as f64;
    per.powf(2.0 / gamma).min(0.5 * per).floor().max(1.0) as usize
}

impl MethodSpec {
    pub fn default_name(&self) -> String {
        match self {
            MethodSpec::Gp => "gp".into(),
            MethodSpec::Pp { .. } => "pp".into(),
            MethodSpec::Epp { alpha, .. } => format!("epp_a{alpha}"),
            MethodSpec::Mrepp { alphas, .. } => format!("mrepp_L{}", alphas.len()),
        }
    }

    fn validate(&self) -> Result<()> {
        let check_alpha = |a: f64| {
            if (0.0..1.0).contains(&a) {
                Ok(())
            } else {
                Err(Error::Config(format!("alpha must lie in [0, 1), got {a}")))
            }
        };
        let check_delta = |d: Option<f64>| match d {
            Some(d) if !(d >= 0.0 && d.is_finite()) => Err(Error::Config(format!("delta must be >= 0, got {d}"))),
            _ => Ok(()),
        };
        match self {
            MethodSpec::Gp => Ok(()),
            MethodSpec::Pp { m } => match m {
                Some(0) => Err(Error::Config("pp m must be >= 1".into())),
                _ => Ok(()),
            },
            MethodSpec::Epp { alpha, delta, m } => {
                check_alpha(*alpha)?;
                check_delta(*delta)?;
                if *m == Some(0) {
                    return Err(Error::Config("epp m must be >= 1".into()));
                }
                Ok(())
            }
            MethodSpec::Mrepp {
                alphas,
                m_max,
                delta,
                calib_fraction,
            } => {
                if alphas.is_empty() {
                    return Err(Error::Config("mrepp needs at least one alpha".into()));
                }
                for &a in alphas {
                    check_alpha(a)?;
                }
                if alphas.windows(2).any(|w| w[1] <= w[0]) {
                    return Err(Error::Config("mrepp alphas must be strictly increasing".into()));
                }
                if *m_max == 0 {
                    return Err(Error::Config("mrepp m_max must be >= 1".into()));
                }
                check_delta(*delta)?;
                if !(*calib_fraction > 0.0 && *calib_fraction < 1.0) {
                    return Err(Error::Config(format!(
                        "calib_fraction must lie in (0, 1), got {calib_fraction}"
                    )));
                }
                Ok(())
            }
        }
    }

    /// Fixes region and inducing-point counts for `n` observations.
    pub fn resolve(&self, n: usize, gamma: f64) -> Result<ResolvedMethod> {
        self.validate()?;
        let resolved = match self {
            MethodSpec::Gp => ResolvedMethod::Gp,
            MethodSpec::Pp { m } => ResolvedMethod::Pp {
                m: m.unwrap_or_else(|| inducing_for(n, 1, gamma)),
            },
            MethodSpec::Epp { alpha, delta, m } => {
                let k = regions_for(n, *alpha);
                ResolvedMethod::Epp {
                    k,
                    m: m.unwrap_or_else(|| inducing_for(n, k, gamma)),
                    delta: *delta,
                }
            }
            MethodSpec::Mrepp {
                alphas,
                m_max,
                delta,
                calib_fraction,
            } => {
                let levels: Vec<LevelConfig> = alphas
                    .iter()
                    .map(|&a| {
                        let k = regions_for(n, a);
                        LevelConfig {
                            k,
                            m: inducing_for(n, k, gamma).min(*m_max),
                            delta: *delta,
                        }
                    })
                    .collect();
                if levels.windows(2).any(|w| w[1].k <= w[0].k) {
                    let ks: Vec<usize> = levels.iter().map(|l| l.k).collect();
                    return Err(Error::Config(format!(
                        "alphas {alphas:?} give region counts {ks:?} at n = {n}; they must be strictly increasing"
                    )));
                }
                ResolvedMethod::Mrepp {
                    levels,
                    calib_fraction: *calib_fraction,
                }
            }
        };
        Ok(resolved)
    }
}

impl MethodEntry {
    pub fn new(spec: MethodSpec) -> Self {
        Self { name: None, spec }
    }

    pub fn label(&self) -> String {
        self.name.clone().unwrap_or_else(|| self.spec.default_name())
    }
}

/// Influence-audit grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InfluenceConfig {
    pub n_grid: Vec<usize>,
    pub m_grid: Vec<usize>,
    /// Random designs per grid cell.
    pub trials: usize,
    /// Random indices checked by finite differences, on top of the ten
    /// largest influences of each method.
    pub fd_checks: usize,
}

impl Default for InfluenceConfig {
    fn default() -> Self {
        Self {
            n_grid: vec![200, 400, 800, 1600],
            m_grid: vec![10],
            trials: 20,
            fd_checks: 10,
        }
    }
}

/// Sample-size grid of the convergence-slope diagnostic.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SlopeConfig {
    pub n_grid: Vec<usize>,
}

impl Default for SlopeConfig {
    fn default() -> Self {
        Self {
            n_grid: vec![250, 500, 1000, 2000],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub scenario: ScenarioConfig,
    #[serde(default)]
    pub methods: Vec<MethodEntry>,
    #[serde(default = "one")]
    pub replicates: usize,
    #[serde(default = "default_output")]
    pub output_path: PathBuf,
    #[serde(default = "one")]
    pub parallel_jobs: usize,
    #[serde(default)]
    pub sp: SpConfig,
    #[serde(default)]
    pub lps_density: LpsDensity,
    #[serde(default)]
    pub influence: InfluenceConfig,
    #[serde(default)]
    pub slopes: SlopeConfig,
}

impl ExperimentConfig {
    pub fn new(scenario: ScenarioConfig, methods: Vec<MethodSpec>, replicates: usize) -> Self {
        Self {
            scenario,
            methods: methods.into_iter().map(MethodEntry::new).collect(),
            replicates,
            output_path: default_output(),
            parallel_jobs: 1,
            sp: SpConfig::default(),
            lps_density: LpsDensity::default(),
            influence: InfluenceConfig::default(),
            slopes: SlopeConfig::default(),
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn validate(&self) -> Result<()> {
        self.scenario.validate()?;
        self.sp.validate()?;
        if self.replicates < 1 {
            return Err(Error::Config("replicates must be >= 1".into()));
        }
        if self.parallel_jobs < 1 {
            return Err(Error::Config("parallel_jobs must be >= 1".into()));
        }
        let mut labels = BTreeSet::new();
        for m in &self.methods {
            let label = m.label();
            if label.is_empty() || label.contains([',', '\n', '"']) {
                return Err(Error::Config(format!("method name {label:?} is not a plain CSV field")));
            }
            if !labels.insert(label.clone()) {
                return Err(Error::Config(format!("duplicate method name {label:?}")));
            }
            m.spec.resolve(self.scenario.n, self.gamma())?;
        }
        let inf = &self.influence;
        if inf.trials < 1 || inf.n_grid.is_empty() || inf.m_grid.is_empty() {
            return Err(Error::Config("influence grid needs trials >= 1 and nonempty n and m grids".into()));
        }
        if inf.n_grid.iter().any(|&n| n < 2) || inf.m_grid.iter().any(|&m| m < 1) {
            return Err(Error::Config("influence grid needs n >= 2 and m >= 1".into()));
        }
        if inf.n_grid.iter().any(|&n| inf.m_grid.iter().any(|&m| m > n)) {
            return Err(Error::Config("influence grid has m > n".into()));
        }
        Ok(())
    }

    /// Smoothness exponent `gamma = nu + 1` of the scenario's kernel.
    pub fn gamma(&self) -> f64 {
        self.scenario.params.nu.gamma()
    }

    /// Labels and resolved sizes of every method at `n` observations.
    pub fn resolved_methods(&self, n: usize) -> Result<Vec<(String, ResolvedMethod)>> {
        self.methods
            .iter()
            .map(|m| Ok((m.label(), m.spec.resolve(n, self.gamma())?)))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const EXAMPLE: &str = r#"
replicates = 3
parallel_jobs = 2

[scenario]
scenario = "contaminated"
n = 1000
contamination_value = 15.0

[[methods]]
kind = "gp"

[[methods]]
kind = "pp"
m = 40

[[methods]]
kind = "epp"
alpha = 0.5

[[methods]]
kind = "mrepp"
name = "mrepp2"
alphas = [0.0, 0.5]
"#;

    #[test]
    fn parses_and_resolves_paper_sizes() {
        let cfg = ExperimentConfig::from_toml_str(EXAMPLE).unwrap();
        assert_eq!(cfg.replicates, 3);
        assert_eq!(cfg.sp, SpConfig::default());
        let resolved = cfg.resolved_methods(1000).unwrap();
        let labels: Vec<&str> = resolved.iter().map(|(l, _)| l.as_str()).collect();
        assert_eq!(labels, ["gp", "pp", "epp_a0.5", "mrepp2"]);
        assert_eq!(resolved[1].1, ResolvedMethod::Pp { m: 40 });
        assert_eq!(resolved[2].1, ResolvedMethod::Epp { k: 31, m: 16, delta: None });
        match &resolved[3].1 {
            ResolvedMethod::Mrepp { levels, calib_fraction } => {
                let ks: Vec<usize> = levels.iter().map(|l| l.k).collect();
                let ms: Vec<usize> = levels.iter().map(|l| l.m).collect();
                assert_eq!(ks, [1, 31]);
                assert_eq!(ms, [200, 16]);
                assert_eq!(*calib_fraction, 0.2);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn size_rules() {
        // gamma = 2.5: (n/K)^(0.8) against n/(2K).
        assert_eq!(inducing_for(1000, 1, 2.5), 251);
        assert_eq!(inducing_for(1000, 31, 2.5), 16);
        assert_eq!(inducing_for(1000, 3, 2.5), 104);
        assert_eq!(regions_for(1000, 0.0), 1);
        assert_eq!(regions_for(1000, 0.2), 3);
        assert_eq!(regions_for(1000, 0.4), 15);
        assert_eq!(regions_for(1000, 0.5), 31);
        assert_eq!(regions_for(1000, 1.0 / 3.0), 10);
        // gamma = 1.5 makes the n/(2K) cap bind.
        assert_eq!(inducing_for(100, 1, 1.5), 50);
    }

    #[test]
    fn rejects_bad_configs() {
        let bad = [
            EXAMPLE.replace("replicates = 3", "replicates = 0"),
            EXAMPLE.replace("alphas = [0.0, 0.5]", "alphas = [0.5, 0.0]"),
            EXAMPLE.replace("alpha = 0.5", "alpha = 1.5"),
            EXAMPLE.replace("name = \"mrepp2\"", "name = \"gp\""),
            EXAMPLE.replace("n = 1000", "n = 5"),
            EXAMPLE.replace("kind = \"gp\"", "kind = \"vecchia\""),
            EXAMPLE.replace("replicates = 3", "replicates = 3\nbogus = 1"),
        ];
        for text in &bad {
            let err = ExperimentConfig::from_toml_str(text).unwrap_err();
            assert!(err.is_config(), "{err}");
        }
    }

    #[test]
    fn colliding_region_counts_rejected() {
        let spec = MethodSpec::Mrepp {
            alphas: vec![0.0, 0.05],
            m_max: 200,
            delta: None,
            calib_fraction: 0.2,
        };
        assert!(spec.resolve(100, 2.5).unwrap_err().is_config());
    }

    #[test]
    fn round_trips_through_toml() {
        let cfg = ExperimentConfig::from_toml_str(EXAMPLE).unwrap();
        let text = toml::to_string(&cfg).unwrap();
        assert_eq!(ExperimentConfig::from_toml_str(&text).unwrap(), cfg);
    }
}
