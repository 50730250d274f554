//! Synthetic spatial datasets for the simulation scenarios.
//!
//! * `FixedSpace`: locations uniform on `[-3, 3]^2`.
//! * `FixedRadius`: locations uniform on `[0, A]^2` with `A = 2 r sqrt(2n)`,
//!   thinned so that training locations keep a separation radius of at
//!   least `r`.
//! * `Contaminated`: the fixed-space design with a fraction of training
//!   values overwritten by a constant.
//!
//! Training and test observations come from one joint field draw. Every
//! random ingredient uses its own sub-stream of the dataset seed, so the
//! contaminated dataset and its clean twin differ only at the contaminated
//! indices.

use std::collections::BTreeSet;
use std::io::Write;

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gp::GpSampler;
use crate::kernels::{KernelParams, Location};
use crate::rng::{stream, Stream, StreamRng};

/// Largest joint field (train plus test) that `generate` will factorize.
pub const MAX_JOINT_POINTS: usize = 8000;

const FIXED_SPACE_HALF_WIDTH: f64 = 3.0;
const THINNING_RETRIES_PER_POINT: usize = 10_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    FixedSpace,
    FixedRadius,
    Contaminated,
}

impl Scenario {
    pub fn name(self) -> &'static str {
        match self {
            Scenario::FixedSpace => "fixed_space",
            Scenario::FixedRadius => "fixed_radius",
            Scenario::Contaminated => "contaminated",
        }
    }
}

fn default_n_test() -> usize {
    500
}

fn default_fraction() -> f64 {
    0.01
}

fn default_r_s() -> f64 {
    0.001
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub scenario: Scenario,
    pub n: usize,
    #[serde(default = "default_n_test")]
    pub n_test: usize,
    #[serde(default = "KernelParams::paper_default")]
    pub params: KernelParams,
    /// Value written over contaminated training observations; `None` leaves
    /// the data clean.
    #[serde(default)]
    pub contamination_value: Option<f64>,
    #[serde(default = "default_fraction")]
    pub contamination_fraction: f64,
    /// Target separation radius of the `FixedRadius` design.
    #[serde(default = "default_r_s")]
    pub r_s_target: f64,
    #[serde(default)]
    pub seed: u64,
}

impl ScenarioConfig {
    pub fn new(scenario: Scenario, n: usize, seed: u64) -> Self {
        Self {
            scenario,
            n,
            n_test: default_n_test(),
            params: KernelParams::paper_default(),
            contamination_value: None,
            contamination_fraction: default_fraction(),
            r_s_target: default_r_s(),
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 10 {
            return Err(Error::Config(format!("n must be >= 10, got {}", self.n)));
        }
        if self.n_test < 1 {
            return Err(Error::Config("n_test must be >= 1".into()));
        }
        if !(0.0..0.5).contains(&self.contamination_fraction) {
            return Err(Error::Config(format!(
                "contamination_fraction must lie in [0, 0.5), got {}",
                self.contamination_fraction
            )));
        }
        if let Some(v) = self.contamination_value {
            if !v.is_finite() {
                return Err(Error::Config("contamination_value must be finite".into()));
            }
        }
        if !(self.r_s_target > 0.0 && self.r_s_target.is_finite()) {
            return Err(Error::Config("r_s_target must be positive".into()));
        }
        if self.n + self.n_test > MAX_JOINT_POINTS {
            return Err(Error::Config(format!(
                "n + n_test = {} exceeds the joint-sampling limit of {MAX_JOINT_POINTS}",
                self.n + self.n_test
            )));
        }
        Ok(())
    }

    /// Number of training values overwritten when contamination is active.
    pub fn contamination_count(&self) -> usize {
        match self.contamination_value {
            Some(_) => (self.contamination_fraction * self.n as f64).ceil() as usize,
            None => 0,
        }
    }

    /// Side length of the `FixedRadius` domain.
    pub fn fixed_radius_side(&self) -> f64 {
        2.0 * self.r_s_target * (self.n as f64 / 0.5).sqrt()
    }
}

/// Axis-aligned bounding box of the sampling domain.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Domain {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

impl Domain {
    fn square(lo: f64, hi: f64) -> Self {
        Self {
            x_min: lo,
            x_max: hi,
            y_min: lo,
            y_max: hi,
        }
    }

    fn draw(&self, rng: &mut StreamRng) -> Location {
        Location::new(
            rng.random_range(self.x_min..self.x_max),
            rng.random_range(self.y_min..self.y_max),
        )
    }

    pub fn contains(&self, s: &Location) -> bool {
        (self.x_min..=self.x_max).contains(&s.x) && (self.y_min..=self.y_max).contains(&s.y)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub train_locations: Vec<Location>,
    pub train_values: Vec<f64>,
    pub test_locations: Vec<Location>,
    /// Noisy held-out observations.
    pub test_values: Vec<f64>,
    /// Noise-free field at the test locations.
    pub test_latent: Vec<f64>,
    /// Sorted training indices whose values were overwritten.
    pub contaminated_indices: Vec<usize>,
    pub domain: Domain,
}

impl Dataset {
    pub fn n(&self) -> usize {
        self.train_locations.len()
    }

    /// Writes the dataset as `role,x,y,value,contaminated` rows. Training
    /// rows listed in `calib` are tagged `calib` instead of `train`.
    pub fn write_csv<W: Write>(&self, mut out: W, calib: Option<&[usize]>) -> Result<()> {
        let calib: BTreeSet<usize> = calib.unwrap_or(&[]).iter().copied().collect();
        let contaminated: BTreeSet<usize> = self.contaminated_indices.iter().copied().collect();
        writeln!(out, "role,x,y,value,contaminated")?;
        for (i, (s, v)) in self.train_locations.iter().zip(&self.train_values).enumerate() {
            let role = if calib.contains(&i) { "calib" } else { "train" };
            writeln!(
                out,
                "{role},{},{},{},{}",
                fmt_g12(s.x),
                fmt_g12(s.y),
                fmt_g12(*v),
                u8::from(contaminated.contains(&i))
            )?;
        }
        for (s, v) in self.test_locations.iter().zip(&self.test_values) {
            writeln!(out, "test,{},{},{},0", fmt_g12(s.x), fmt_g12(s.y), fmt_g12(*v))?;
        }
        Ok(())
    }

    pub fn to_csv_bytes(&self, calib: Option<&[usize]>) -> Vec<u8> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf, calib).expect("writing to memory cannot fail");
        buf
    }
}

/// Formats like C's `%.12g`.
pub fn fmt_g12(v: f64) -> String {
    const P: i32 = 12;
    if v.is_nan() {
        return "nan".into();
    }
    if v.is_infinite() {
        return if v > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if v == 0.0 {
        return if v.is_sign_negative() { "-0".into() } else { "0".into() };
    }
    let sci = format!("{:.*e}", (P - 1) as usize, v);
    let (mantissa, exp) = sci.split_once('e').expect("scientific format has an exponent");
    let exp: i32 = exp.parse().expect("integer exponent");
    if exp < -4 || exp >= P {
        let mantissa = strip_zeros(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{mantissa}e{sign}{:02}", exp.abs())
    } else {
        strip_zeros(&format!("{:.*}", (P - 1 - exp) as usize, v)).to_string()
    }
}

fn strip_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

/// Half the smallest pairwise distance.
pub fn separation_radius(locations: &[Location]) -> Result<f64> {
    if locations.len() < 2 {
        return Err(Error::Input("separation radius needs at least two locations".into()));
    }
    let mut best = f64::INFINITY;
    for (i, a) in locations.iter().enumerate() {
        for b in &locations[i + 1..] {
            best = best.min(a.dist2(b));
        }
    }
    Ok(0.5 * best.sqrt())
}

/// Random sequential placement with a minimum pairwise distance, using a
/// background grid of cell size `min_dist` so only 3x3 neighborhoods are
/// checked.
fn thinned_uniform(n: usize, side: f64, min_dist: f64, rng: &mut StreamRng) -> Result<Vec<Location>> {
    let cells = ((side / min_dist).floor() as usize).max(1);
    let cell = side / cells as f64;
    let mut grid: Vec<Vec<usize>> = vec![Vec::new(); cells * cells];
    let min2 = min_dist * min_dist;
    let mut out: Vec<Location> = Vec::with_capacity(n);
    let to_cell = |v: f64| ((v / cell) as usize).min(cells - 1);
    for _ in 0..n {
        let mut placed = false;
        for _ in 0..THINNING_RETRIES_PER_POINT {
            let s = Location::new(rng.random_range(0.0..side), rng.random_range(0.0..side));
            let (cx, cy) = (to_cell(s.x), to_cell(s.y));
            let clash = (cx.saturating_sub(1)..=(cx + 1).min(cells - 1)).any(|gx| {
                (cy.saturating_sub(1)..=(cy + 1).min(cells - 1))
                    .any(|gy| grid[gx * cells + gy].iter().any(|&j| out[j].dist2(&s) < min2))
            });
            if !clash {
                grid[cx * cells + cy].push(out.len());
                out.push(s);
                placed = true;
                break;
            }
        }
        if !placed {
            return Err(Error::TooDense(format!(
                "placed only {} of {n} points with separation {min_dist} on a side of {side}; \
                 try a side of at least {:.6}",
                out.len(),
                side * 1.25
            )));
        }
    }
    Ok(out)
}

pub fn generate(cfg: &ScenarioConfig) -> Result<Dataset> {
    cfg.validate()?;
    let mut train_rng = stream(cfg.seed, Stream::TrainLocations);
    let mut test_rng = stream(cfg.seed, Stream::TestLocations);
    let (domain, train_locations) = match cfg.scenario {
        Scenario::FixedSpace | Scenario::Contaminated => {
            let d = Domain::square(-FIXED_SPACE_HALF_WIDTH, FIXED_SPACE_HALF_WIDTH);
            let locs = (0..cfg.n).map(|_| d.draw(&mut train_rng)).collect();
            (d, locs)
        }
        Scenario::FixedRadius => {
            let side = cfg.fixed_radius_side();
            let locs = thinned_uniform(cfg.n, side, 2.0 * cfg.r_s_target, &mut train_rng)?;
            (Domain::square(0.0, side), locs)
        }
    };
    let test_locations: Vec<Location> = (0..cfg.n_test).map(|_| domain.draw(&mut test_rng)).collect();

    let joint: Vec<Location> = train_locations.iter().chain(&test_locations).copied().collect();
    let sampler = GpSampler::new(&joint, cfg.params)?;
    let field = sampler.sample(&mut stream(cfg.seed, Stream::Field));
    let mut train_values = field.observed[..cfg.n].to_vec();
    let test_values = field.observed[cfg.n..].to_vec();
    let test_latent = field.latent[cfg.n..].to_vec();

    let mut contaminated_indices = Vec::new();
    if let Some(value) = cfg.contamination_value {
        let mut rng = stream(cfg.seed, Stream::Contamination);
        contaminated_indices = index::sample(&mut rng, cfg.n, cfg.contamination_count()).into_vec();
        contaminated_indices.sort_unstable();
        for &i in &contaminated_indices {
            train_values[i] = value;
        }
    }

    Ok(Dataset {
        train_locations,
        train_values,
        test_locations,
        test_values,
        test_latent,
        contaminated_indices,
        domain,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn contaminated(n: usize, seed: u64, value: Option<f64>) -> ScenarioConfig {
        ScenarioConfig {
            contamination_value: value,
            n_test: 100,
            ..ScenarioConfig::new(Scenario::Contaminated, n, seed)
        }
    }

    #[test]
    fn g12_formatting() {
        assert_eq!(fmt_g12(0.0), "0");
        assert_eq!(fmt_g12(1.0), "1");
        assert_eq!(fmt_g12(-2.5), "-2.5");
        assert_eq!(fmt_g12(0.1), "0.1");
        assert_eq!(fmt_g12(1.0 / 3.0), "0.333333333333");
        assert_eq!(fmt_g12(123456.789), "123456.789");
        assert_eq!(fmt_g12(1e-5), "1e-05");
        assert_eq!(fmt_g12(0.0001234), "0.0001234");
        assert_eq!(fmt_g12(1e12), "1e+12");
        assert_eq!(fmt_g12(999999999999.0), "999999999999");
        assert_eq!(fmt_g12(9.9999999999996), "10");
        assert_eq!(fmt_g12(-1.5e-7), "-1.5e-07");
        assert_eq!(fmt_g12(f64::NAN), "nan");
    }

    #[test]
    fn paper_parameters_accepted() {
        let cfg: ScenarioConfig = toml::from_str(
            "scenario = 'fixed_space'\nn = 100\n[params]\neta2 = 1.5\nphi = 0.21\nnu = 1.5\ntau2 = 0.25\n",
        )
        .unwrap();
        assert_eq!(cfg.params, KernelParams::paper_default());
        assert_eq!(cfg.n_test, 500);
        assert_eq!(cfg.contamination_fraction, 0.01);
    }

    #[test]
    fn validation() {
        let mut cfg = ScenarioConfig::new(Scenario::FixedSpace, 9, 0);
        assert!(generate(&cfg).unwrap_err().is_config());
        cfg.n = 100;
        cfg.contamination_fraction = 0.5;
        assert!(generate(&cfg).unwrap_err().is_config());
        cfg.contamination_fraction = 0.01;
        cfg.n = MAX_JOINT_POINTS;
        assert!(generate(&cfg).unwrap_err().is_config());
    }

    #[test]
    fn contamination_count_and_placement() {
        let d = generate(&contaminated(1000, 3, Some(15.0))).unwrap();
        assert_eq!(d.contaminated_indices.len(), 10);
        for &i in &d.contaminated_indices {
            assert_eq!(d.train_values[i], 15.0);
        }
        assert!(!d.test_values.iter().any(|&v| v == 15.0));
        assert_eq!(contaminated(1001, 0, Some(5.0)).contamination_count(), 11);
        assert_eq!(contaminated(1000, 0, None).contamination_count(), 0);
    }

    #[test]
    fn contamination_levels_in_noise_units() {
        let sd = KernelParams::paper_default().tau2.sqrt();
        for (level, multiple) in [(5.0, 10.0), (10.0, 20.0), (15.0, 30.0)] {
            assert!((level / sd - multiple).abs() < 1e-12);
        }
    }

    #[test]
    fn clean_twin_differs_only_at_contaminated_indices() {
        let dirty = generate(&contaminated(400, 11, Some(10.0))).unwrap();
        let clean = generate(&contaminated(400, 11, None)).unwrap();
        assert!(clean.contaminated_indices.is_empty());
        assert_eq!(dirty.train_locations, clean.train_locations);
        assert_eq!(dirty.test_values, clean.test_values);
        for i in 0..400 {
            let hit = dirty.contaminated_indices.binary_search(&i).is_ok();
            assert_eq!(dirty.train_values[i] != clean.train_values[i], hit, "index {i}");
        }
    }

    #[test]
    fn deterministic_bytes() {
        let cfg = contaminated(300, 21, Some(15.0));
        let a = generate(&cfg).unwrap().to_csv_bytes(Some(&[1, 2, 3]));
        let b = generate(&cfg).unwrap().to_csv_bytes(Some(&[1, 2, 3]));
        assert_eq!(a, b);
        let text = String::from_utf8(a).unwrap();
        assert!(text.starts_with("role,x,y,value,contaminated\n"));
        assert_eq!(text.lines().count(), 1 + 300 + 100);
        assert_eq!(text.lines().filter(|l| l.starts_with("calib,")).count(), 3);
        let other = generate(&ScenarioConfig { seed: 22, ..cfg }).unwrap().to_csv_bytes(None);
        assert_ne!(text.as_bytes(), other.as_slice());
    }

    #[test]
    fn fixed_space_domain_and_disjointness() {
        let d = generate(&ScenarioConfig::new(Scenario::FixedSpace, 500, 4)).unwrap();
        assert_eq!(d.test_locations.len(), 500);
        assert!(d.train_locations.iter().chain(&d.test_locations).all(|s| d.domain.contains(s)));
        let train: BTreeSet<(u64, u64)> = d.train_locations.iter().map(|s| (s.x.to_bits(), s.y.to_bits())).collect();
        assert!(d.test_locations.iter().all(|s| !train.contains(&(s.x.to_bits(), s.y.to_bits()))));
    }

    #[test]
    fn separation_radius_examples() {
        let two = [Location::new(0.0, 0.0), Location::new(2.0, 0.0)];
        assert_eq!(separation_radius(&two).unwrap(), 1.0);
        let h = 0.3;
        let grid: Vec<Location> = (0..5)
            .flat_map(|i| (0..5).map(move |j| Location::new(i as f64 * h, j as f64 * h)))
            .collect();
        assert!((separation_radius(&grid).unwrap() - h / 2.0).abs() < 1e-15);
        assert!(separation_radius(&two[..1]).is_err());
    }

    #[test]
    fn fixed_radius_keeps_separation() {
        for n in [500, 1000, 2000] {
            let cfg = ScenarioConfig {
                n_test: 50,
                ..ScenarioConfig::new(Scenario::FixedRadius, n, 7)
            };
            let d = generate(&cfg).unwrap();
            assert_eq!(d.n(), n);
            let r = separation_radius(&d.train_locations).unwrap();
            assert!(r >= cfg.r_s_target - 1e-12, "n = {n}: r_S = {r}");
            assert!((d.domain.x_max - 2.0 * 0.001 * (2.0 * n as f64).sqrt()).abs() < 1e-15);
        }
    }

    #[test]
    fn overfull_domain_reports_too_dense() {
        let mut rng = stream(0, Stream::TrainLocations);
        let err = thinned_uniform(200, 1.0, 0.2, &mut rng).unwrap_err();
        assert!(matches!(err, Error::TooDense(_)));
    }
}
