//! Ensembles of predictive processes.
//!
//! An [`EppModel`] fits one predictive process per overlapping SPVT region
//! and mixes their predictive distributions with the partition's horizontal
//! weights. An [`MreppModel`] stacks several EPP levels, coarse to fine, and
//! mixes them again with resolution weights `p(l)` learned on a calibration
//! set.
//!
//! Horizontal weights are normalized within each level, so the MREPP mean is
//! `sum_l p(l) * mean_l` and calibrating `p` is a least-squares problem over
//! the probability simplex.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::{KernelParams, Location};
use crate::mixture::{Component, MixturePoint, PredictiveMixture};
use crate::partition::Partition;
use crate::pp::PpModel;
use crate::rng::derive_seed;
use crate::support_points::SpConfig;

/// EPP: a locally weighted mixture of per-region predictive processes.
#[derive(Clone, Debug)]
pub struct EppModel {
    partition: Partition,
    region_models: Vec<PpModel>,
    params: KernelParams,
}

impl EppModel {
    pub fn fit(
        locations: &[Location],
        values: &[f64],
        k: usize,
        m: usize,
        delta: Option<f64>,
        params: KernelParams,
        cfg: &SpConfig,
    ) -> Result<Self> {
        if locations.len() != values.len() {
            return Err(Error::Input(format!(
                "{} locations but {} values",
                locations.len(),
                values.len()
            )));
        }
        let partition = Partition::build(locations, k, m, delta, cfg)?;
        Self::from_partition(partition, locations, values, params)
    }

    /// Fits the region models of an already built partition. Member indices
    /// refer to `locations`.
    pub fn from_partition(
        partition: Partition,
        locations: &[Location],
        values: &[f64],
        params: KernelParams,
    ) -> Result<Self> {
        let region_models = partition
            .regions
            .par_iter()
            .map(|r| {
                let locs: Vec<Location> = r.members.iter().map(|&i| locations[i]).collect();
                let vals: Vec<f64> = r.members.iter().map(|&i| values[i]).collect();
                PpModel::fit(&locs, &vals, &r.inducing, params)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            partition,
            region_models,
            params,
        })
    }

    pub fn partition(&self) -> &Partition {
        &self.partition
    }

    pub fn region_models(&self) -> &[PpModel] {
        &self.region_models
    }

    pub fn params(&self) -> &KernelParams {
        &self.params
    }

    pub fn k(&self) -> usize {
        self.region_models.len()
    }

    /// Largest local inducing-point count.
    pub fn m(&self) -> usize {
        self.region_models.iter().map(PpModel::m).max().unwrap_or(0)
    }

    pub fn predict(&self, targets: &[Location]) -> PredictiveMixture {
        let weights: Vec<Vec<f64>> = targets
            .iter()
            .map(|t| self.partition.horizontal_weights(t))
            .collect();
        let mut components: Vec<Vec<Component>> = vec![Vec::new(); targets.len()];
        for (k, model) in self.region_models.iter().enumerate() {
            let idx: Vec<usize> = (0..targets.len()).filter(|&i| weights[i][k] > 0.0).collect();
            if idx.is_empty() {
                continue;
            }
            let local: Vec<Location> = idx.iter().map(|&i| targets[i]).collect();
            let pred = model.predict(&local);
            for (&i, pt) in idx.iter().zip(&pred.points) {
                components[i].push(Component {
                    weight: weights[i][k],
                    mean: pt.mean,
                    variance: pt.variance,
                });
            }
        }
        PredictiveMixture {
            points: components.into_iter().map(MixturePoint::from_components).collect(),
        }
    }
}

/// Configuration of one MREPP resolution level.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LevelConfig {
    pub k: usize,
    pub m: usize,
    /// `None` selects the default overlap rule.
    pub delta: Option<f64>,
}

/// MREPP: simplex-weighted mixture of EPP levels.
#[derive(Clone, Debug)]
pub struct MreppModel {
    levels: Vec<EppModel>,
    weights: Vec<f64>,
}

/// JSON audit record of a fitted MREPP.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MreppAudit {
    pub weights: Vec<f64>,
    pub levels: Vec<LevelAudit>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LevelAudit {
    pub k: usize,
    pub m: usize,
    pub delta: f64,
    pub partition: Partition,
}

fn check_levels(configs: &[LevelConfig]) -> Result<()> {
    if configs.is_empty() {
        return Err(Error::Input("MREPP needs at least one level".into()));
    }
    for w in configs.windows(2) {
        if w[1].k <= w[0].k {
            return Err(Error::Input(format!(
                "level sizes must be strictly increasing, got K = {} then {}",
                w[0].k, w[1].k
            )));
        }
        if w[1].m > w[0].m {
            return Err(Error::Input(format!(
                "inducing counts must be non-increasing across levels, got m = {} then {}",
                w[0].m, w[1].m
            )));
        }
    }
    Ok(())
}

impl MreppModel {
    /// Fits every level independently and starts from uniform `p`.
    pub fn fit(
        locations: &[Location],
        values: &[f64],
        configs: &[LevelConfig],
        params: KernelParams,
        cfg: &SpConfig,
    ) -> Result<Self> {
        check_levels(configs)?;
        let levels = configs
            .par_iter()
            .enumerate()
            .map(|(l, c)| {
                let level_cfg = cfg.with_seed(derive_seed(cfg.seed, 0x1E7E_1000 + l as u64));
                EppModel::fit(locations, values, c.k, c.m, c.delta, params, &level_cfg)
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_levels(levels)
    }

    pub fn from_levels(levels: Vec<EppModel>) -> Result<Self> {
        if levels.is_empty() {
            return Err(Error::Input("MREPP needs at least one level".into()));
        }
        for w in levels.windows(2) {
            if w[1].k() <= w[0].k() {
                return Err(Error::Input("level sizes must be strictly increasing".into()));
            }
        }
        let l = levels.len();
        Ok(Self {
            levels,
            weights: vec![1.0 / l as f64; l],
        })
    }

    pub fn levels(&self) -> &[EppModel] {
        &self.levels
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn set_weights(&mut self, p: Vec<f64>) -> Result<()> {
        if p.len() != self.levels.len() {
            return Err(Error::Input(format!(
                "{} resolution weights for {} levels",
                p.len(),
                self.levels.len()
            )));
        }
        let total: f64 = p.iter().sum();
        if p.iter().any(|&v| !(v >= 0.0)) || (total - 1.0).abs() > 1e-9 {
            return Err(Error::Input("resolution weights must lie on the simplex".into()));
        }
        self.weights = p;
        Ok(())
    }

    /// Per-level EPP predictive means at `targets`.
    pub fn level_means(&self, targets: &[Location]) -> Vec<Vec<f64>> {
        self.levels.iter().map(|l| l.predict(targets).means()).collect()
    }

    /// Learns `p` by minimizing the calibration mean squared error and stores
    /// it on the model.
    pub fn learn_weights(&mut self, calib_locations: &[Location], calib_values: &[f64]) -> Result<Vec<f64>> {
        if calib_locations.len() != calib_values.len() {
            return Err(Error::Input("calibration locations and values differ in length".into()));
        }
        if calib_values.len() < self.levels.len() {
            return Err(Error::Input(format!(
                "{} calibration points for {} levels",
                calib_values.len(),
                self.levels.len()
            )));
        }
        let preds = self.level_means(calib_locations);
        let p = fit_simplex_weights(&preds, calib_values)?;
        self.weights = p.clone();
        Ok(p)
    }

    pub fn predict(&self, targets: &[Location]) -> PredictiveMixture {
        let per_level: Vec<PredictiveMixture> = self.levels.iter().map(|l| l.predict(targets)).collect();
        self.combine(&per_level)
    }

    fn combine(&self, per_level: &[PredictiveMixture]) -> PredictiveMixture {
        let n = per_level.first().map_or(0, PredictiveMixture::len);
        let points = (0..n)
            .map(|i| {
                let mut comps = Vec::new();
                for (pl, level) in self.weights.iter().zip(per_level) {
                    if *pl == 0.0 {
                        continue;
                    }
                    comps.extend(level.points[i].components.iter().map(|c| Component {
                        weight: pl * c.weight,
                        ..*c
                    }));
                }
                let total: f64 = comps.iter().map(|c| c.weight).sum();
                if (total - 1.0).abs() > 1e-12 && total > 0.0 {
                    for c in &mut comps {
                        c.weight /= total;
                    }
                }
                MixturePoint::from_components(comps)
            })
            .collect();
        PredictiveMixture { points }
    }

    pub fn audit(&self) -> MreppAudit {
        MreppAudit {
            weights: self.weights.clone(),
            levels: self
                .levels
                .iter()
                .map(|l| LevelAudit {
                    k: l.k(),
                    m: l.m(),
                    delta: l.partition().delta,
                    partition: l.partition().clone(),
                })
                .collect(),
        }
    }
}

/// Mean resolution index `sum_l l p(l)` with levels numbered from 1.
pub fn resolution_index(p: &[f64]) -> f64 {
    p.iter().enumerate().map(|(l, w)| (l + 1) as f64 * w).sum()
}

/// Euclidean projection onto the probability simplex.
pub fn project_to_simplex(v: &[f64]) -> Vec<f64> {
    let mut u = v.to_vec();
    u.sort_by(|a, b| b.total_cmp(a));
    let mut cumsum = 0.0;
    let mut theta = 0.0;
    for (j, &uj) in u.iter().enumerate() {
        cumsum += uj;
        let t = (cumsum - 1.0) / (j + 1) as f64;
        if uj - t > 0.0 {
            theta = t;
        }
    }
    v.iter().map(|x| (x - theta).max(0.0)).collect()
}

const QP_MAX_ITERS: usize = 10_000;
const QP_TOL: f64 = 1e-10;

/// Minimizes `mean((sum_l p_l a_l - y)^2)` over the simplex by projected
/// gradient descent from uniform weights.
///
/// The step is the inverse Lipschitz constant of the gradient restricted to
/// the simplex's affine hull; components of the gradient along the all-ones
/// direction are removed by the projection anyway.
pub fn fit_simplex_weights(level_predictions: &[Vec<f64>], observed: &[f64]) -> Result<Vec<f64>> {
    let l = level_predictions.len();
    if l == 0 {
        return Err(Error::Input("no levels to weight".into()));
    }
    let n = observed.len();
    if n < l {
        return Err(Error::Input(format!("{n} calibration points for {l} levels")));
    }
    if level_predictions.iter().any(|a| a.len() != n) {
        return Err(Error::Input("level predictions and observations differ in length".into()));
    }
    if l == 1 {
        return Ok(vec![1.0]);
    }

    let a = DMatrix::from_fn(n, l, |i, j| level_predictions[j][i]);
    let y = DVector::from_column_slice(observed);
    let gram = a.tr_mul(&a) / n as f64;
    let h = a.tr_mul(&y) / n as f64;
    let yy = y.norm_squared() / n as f64;
    let objective = |p: &DVector<f64>| (p.dot(&(&gram * p)) - 2.0 * h.dot(p) + yy).max(0.0);

    let center = DMatrix::<f64>::identity(l, l) - DMatrix::from_element(l, l, 1.0 / l as f64);
    let restricted = &center * &gram * &center;
    let restricted = (&restricted + restricted.transpose()) * 0.5;
    let lmax = SymmetricEigen::new(restricted)
        .eigenvalues
        .iter()
        .copied()
        .fold(0.0f64, f64::max);

    let mut p = DVector::from_element(l, 1.0 / l as f64);
    if lmax <= 1e-14 * gram.diagonal().max().max(1e-300) {
        return Ok(p.iter().copied().collect());
    }
    let step = 1.0 / (2.0 * lmax);
    let mut f = objective(&p);
    for _ in 0..QP_MAX_ITERS {
        let grad = (&gram * &p - &h) * 2.0;
        let raw: Vec<f64> = (&p - grad * step).iter().copied().collect();
        let next = DVector::from_vec(project_to_simplex(&raw));
        let f_next = objective(&next);
        p = next;
        let change = (f - f_next).abs();
        f = f_next;
        if change < QP_TOL {
            break;
        }
    }
    Ok(p.iter().copied().collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gp::gp_sample;
    use crate::rng::rng_from_seed;
    use rand::Rng;

    fn uniform(n: usize, seed: u64) -> Vec<Location> {
        let mut rng = rng_from_seed(seed);
        (0..n)
            .map(|_| Location::new(rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0)))
            .collect()
    }

    #[test]
    fn simplex_projection() {
        assert_eq!(project_to_simplex(&[0.5, 0.5]), vec![0.5, 0.5]);
        assert_eq!(project_to_simplex(&[2.0, 0.0]), vec![1.0, 0.0]);
        let p = project_to_simplex(&[0.3, -0.4, 1.6, 0.2]);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        assert!(p.iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn weights_pick_the_exact_level() {
        let mut rng = rng_from_seed(1);
        let y: Vec<f64> = (0..50).map(|_| rng.random_range(-2.0..2.0)).collect();
        let mut a2 = y.clone();
        for v in a2.iter_mut().step_by(5) {
            *v += 1.0;
        }
        let p = fit_simplex_weights(&[y.clone(), a2], &y).unwrap();
        assert!((p[0] - 1.0).abs() < 1e-4 && p[1].abs() < 1e-4, "{p:?}");
    }

    #[test]
    fn identical_levels_split_evenly() {
        let mut rng = rng_from_seed(2);
        let y: Vec<f64> = (0..40).map(|_| rng.random_range(-2.0..2.0)).collect();
        let a: Vec<f64> = y.iter().map(|v| 0.8 * v + 0.1).collect();
        let p = fit_simplex_weights(&[a.clone(), a], &y).unwrap();
        assert!((p[0] - 0.5).abs() < 1e-6 && (p[1] - 0.5).abs() < 1e-6);
        assert_eq!(fit_simplex_weights(&[y.clone()], &y).unwrap(), vec![1.0]);
        assert!(fit_simplex_weights(&[y.clone(), y.clone()], &y[..1]).is_err());
    }

    #[test]
    fn learned_weights_never_worse_than_uniform() {
        let mut rng = rng_from_seed(3);
        for _ in 0..20 {
            let y: Vec<f64> = (0..60).map(|_| rng.random_range(-2.0..2.0)).collect();
            let levels: Vec<Vec<f64>> = (0..4)
                .map(|_| y.iter().map(|v| v + rng.random_range(-1.0..1.0)).collect())
                .collect();
            let p = fit_simplex_weights(&levels, &y).unwrap();
            let mse = |w: &[f64]| {
                (0..y.len())
                    .map(|i| {
                        let m: f64 = (0..4).map(|l| w[l] * levels[l][i]).sum();
                        (m - y[i]).powi(2)
                    })
                    .sum::<f64>()
            };
            assert!(mse(&p) <= mse(&[0.25; 4]) + 1e-12);
            assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }

    /// Largest violation of the simplex KKT conditions: on the support every
    /// gradient entry equals the multiplier, off it none is smaller.
    fn kkt_violation(levels: &[Vec<f64>], y: &[f64], p: &[f64]) -> f64 {
        let n = y.len() as f64;
        let resid: Vec<f64> = (0..y.len())
            .map(|i| levels.iter().zip(p).map(|(a, w)| w * a[i]).sum::<f64>() - y[i])
            .collect();
        let grad: Vec<f64> = levels
            .iter()
            .map(|a| 2.0 * a.iter().zip(&resid).map(|(u, r)| u * r).sum::<f64>() / n)
            .collect();
        let lambda = grad.iter().copied().fold(f64::INFINITY, f64::min);
        grad.iter()
            .zip(p)
            .map(|(g, w)| if *w > 1e-9 { g - lambda } else { 0.0 })
            .fold(0.0, f64::max)
    }

    #[test]
    fn weights_satisfy_kkt_for_collinear_levels() {
        let mut rng = rng_from_seed(4);
        for _ in 0..20 {
            let y: Vec<f64> = (0..200).map(|_| rng.random_range(-2.0..2.0)).collect();
            let common: Vec<f64> = y.iter().map(|v| 0.9 * v + rng.random_range(-0.5..0.5)).collect();
            let levels: Vec<Vec<f64>> = (0..4)
                .map(|_| common.iter().map(|c| c + rng.random_range(-0.05..0.05)).collect())
                .collect();
            let p = fit_simplex_weights(&levels, &y).unwrap();
            let viol = kkt_violation(&levels, &y, &p);
            assert!(viol < 1e-6, "KKT violation {viol:e} at {p:?}");
        }
    }

    fn field(n: usize, seed: u64) -> (Vec<Location>, Vec<f64>) {
        let locs = uniform(n, seed);
        let y = gp_sample(&locs, KernelParams::paper_default(), seed).unwrap();
        (locs, y)
    }

    #[test]
    fn single_region_epp_is_a_pp() {
        let (locs, y) = field(300, 4);
        let p = KernelParams::paper_default();
        let epp = EppModel::fit(&locs, &y, 1, 20, None, p, &SpConfig::default()).unwrap();
        let pp = PpModel::fit(&locs, &y, &epp.partition().regions[0].inducing, p).unwrap();
        let targets = uniform(50, 5);
        assert_eq!(epp.predict(&targets), pp.predict(&targets));
    }

    #[test]
    fn disjoint_regions_train_on_members_only() {
        let (locs, y) = field(2000, 6);
        let epp = EppModel::fit(&locs, &y, 4, 10, Some(0.0), KernelParams::paper_default(), &SpConfig::default())
            .unwrap();
        assert_eq!(epp.k(), 4);
        let mut seen = vec![false; locs.len()];
        for (r, model) in epp.partition().regions.iter().zip(epp.region_models()) {
            assert_eq!(model.n(), r.members.len());
            for &i in &r.members {
                assert!(!seen[i]);
                seen[i] = true;
            }
        }
        assert!(seen.iter().all(|&s| s));
    }

    #[test]
    fn small_regions_clamp_inducing_count() {
        let (locs, y) = field(200, 7);
        let epp = EppModel::fit(&locs, &y, 10, 500, None, KernelParams::paper_default(), &SpConfig::default()).unwrap();
        for (r, model) in epp.partition().regions.iter().zip(epp.region_models()) {
            assert_eq!(model.m(), (r.members.len() / 2).max(1));
        }
    }

    #[test]
    fn mixture_weights_normalized() {
        let (locs, y) = field(600, 8);
        let p = KernelParams::paper_default();
        let epp = EppModel::fit(&locs, &y, 6, 12, None, p, &SpConfig::default()).unwrap();
        for pt in &epp.predict(&uniform(300, 9)).points {
            assert!((pt.weight_sum() - 1.0).abs() < 1e-9);
            let again = MixturePoint::from_components(pt.components.clone());
            assert!((again.variance - pt.variance).abs() < 1e-10);
        }
    }

    #[test]
    fn level_config_validation() {
        let (locs, y) = field(200, 10);
        let p = KernelParams::paper_default();
        let bad = [LevelConfig { k: 3, m: 10, delta: None }, LevelConfig { k: 3, m: 5, delta: None }];
        assert!(matches!(MreppModel::fit(&locs, &y, &bad, p, &SpConfig::default()), Err(Error::Input(_))));
        let growing_m = [LevelConfig { k: 1, m: 10, delta: None }, LevelConfig { k: 3, m: 20, delta: None }];
        assert!(MreppModel::fit(&locs, &y, &growing_m, p, &SpConfig::default()).is_err());
        assert!(MreppModel::fit(&locs, &y, &[], p, &SpConfig::default()).is_err());
    }

    #[test]
    fn one_hot_weights_reproduce_a_level() {
        let (locs, y) = field(500, 11);
        let p = KernelParams::paper_default();
        let cfgs = [LevelConfig { k: 1, m: 30, delta: None }, LevelConfig { k: 5, m: 12, delta: None }];
        let mut model = MreppModel::fit(&locs, &y, &cfgs, p, &SpConfig::default()).unwrap();
        assert_eq!(model.weights(), &[0.5, 0.5]);
        let targets = uniform(40, 12);
        for l in 0..2 {
            let mut w = vec![0.0; 2];
            w[l] = 1.0;
            model.set_weights(w).unwrap();
            assert_eq!(model.predict(&targets), model.levels()[l].predict(&targets));
        }
        assert!(model.set_weights(vec![0.7, 0.7]).is_err());
    }

    #[test]
    fn two_level_mixture_arithmetic() {
        let (locs, y) = field(100, 13);
        let p = KernelParams::paper_default();
        let lvl = |k: usize| {
            let part = Partition::build(&locs, k, 4, None, &SpConfig::default()).unwrap();
            EppModel::from_partition(part, &locs, &y, p).unwrap()
        };
        let model = MreppModel::from_levels(vec![lvl(1), lvl(2)]).unwrap();
        let levels = vec![
            PredictiveMixture::from_moments(&[1.0], &[1.0]),
            PredictiveMixture::from_moments(&[3.0], &[1.0]),
        ];
        let out = model.combine(&levels);
        assert_eq!(out.points[0].mean, 2.0);
        assert!((out.points[0].variance - 2.0).abs() < 1e-15);
    }

    #[test]
    fn single_level_single_region_reduces_to_pp() {
        let (locs, y) = field(250, 15);
        let p = KernelParams::paper_default();
        let cfg = SpConfig::default();
        let model = MreppModel::fit(&locs, &y, &[LevelConfig { k: 1, m: 15, delta: None }], p, &cfg).unwrap();
        assert_eq!(model.weights(), &[1.0]);
        let inducing = &model.levels()[0].partition().regions[0].inducing;
        let pp = PpModel::fit(&locs, &y, inducing, p).unwrap();
        let targets = uniform(30, 16);
        assert_eq!(model.predict(&targets), pp.predict(&targets));
    }

    #[test]
    fn audit_serializes() {
        let (locs, y) = field(300, 14);
        let cfgs = [LevelConfig { k: 1, m: 20, delta: None }, LevelConfig { k: 4, m: 10, delta: None }];
        let model = MreppModel::fit(&locs, &y, &cfgs, KernelParams::paper_default(), &SpConfig::default()).unwrap();
        let json = serde_json::to_string(&model.audit()).unwrap();
        let back: MreppAudit = serde_json::from_str(&json).unwrap();
        assert_eq!(back.levels.len(), 2);
        assert_eq!(back.levels[1].k, 4);
        assert_eq!(back.weights, vec![0.5, 0.5]);
    }
}
