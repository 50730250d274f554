//! Predictive processes: a rank-`m` GP surrogate projected on inducing
//! points.
//!
//! With `A = tau2 C_mm + C_mn C_nm` and `b = C_mn y`:
//!
//! * mean `mu(s) = c_sm A^-1 b`
//! * variance `c(s,s) - c_sm C_mm^-1 c_ms + tau2 c_sm A^-1 c_ms + tau2`
//!
//! The variance keeps the conditional term lost by the plain low-rank
//! projection, so it does not collapse far from the inducing points, and it
//! reproduces the exact GP variance when the inducing points are the
//! training locations.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};
use crate::gp::{check_locations, check_values, has_duplicates, Influence};
use crate::kernels::{cov, cov_matrix, cov_matrix_sym, cov_vector, nearest_index, KernelParams, Location};
use crate::linalg::{cholesky_escalating, cholesky_strict, whitened_col_norms2, Chol};
use crate::mixture::PredictiveMixture;

const E_MIN_FLOOR: f64 = 1e-12;

/// A fitted predictive process on one region (or globally).
#[derive(Clone, Debug)]
pub struct PpModel {
    inducing: Vec<Location>,
    params: KernelParams,
    train_locations: Vec<Location>,
    /// `C_nm`, kept for influence computations.
    cross: DMatrix<f64>,
    a_chol: Chol,
    b: DVector<f64>,
    cmm_chol: Chol,
    /// `A^-1 b`
    weights: DVector<f64>,
}

impl PpModel {
    pub fn fit(
        locations: &[Location],
        values: &[f64],
        inducing: &[Location],
        params: KernelParams,
    ) -> Result<Self> {
        if inducing.is_empty() {
            return Err(Error::Input("at least one inducing point is required".into()));
        }
        if locations.len() != values.len() {
            return Err(Error::Input(format!(
                "{} locations but {} values",
                locations.len(),
                values.len()
            )));
        }
        if locations.len() < inducing.len() {
            return Err(Error::Input(format!(
                "{} inducing points exceed {} training locations",
                inducing.len(),
                locations.len()
            )));
        }
        check_locations(locations)?;
        check_locations(inducing)?;
        check_values(values)?;
        if params.tau2 == 0.0 && has_duplicates(inducing) {
            return Err(Error::Singular(
                "coincident inducing points with zero nugget".into(),
            ));
        }

        let m = inducing.len();
        let cmm = cov_matrix_sym(inducing, &params);
        let cross = cov_matrix(locations, inducing, &params);
        let mut a = cross.tr_mul(&cross);
        for j in 0..m {
            for i in 0..m {
                a[(i, j)] += params.tau2 * cmm[(i, j)];
            }
        }
        // symmetrize against round-off in the Gram product
        let a = (&a + a.transpose()) * 0.5;
        let scale = (0..m).map(|i| a[(i, i)]).sum::<f64>() / m as f64;
        let a_jitter = 1e-10 * scale;
        let a_chol = if params.tau2 == 0.0 {
            let mut aj = a;
            for i in 0..m {
                aj[(i, i)] += a_jitter;
            }
            cholesky_strict(aj, "C_mn C_nm")?
        } else {
            cholesky_escalating(a, a_jitter, "tau2 C_mm + C_mn C_nm")?
        };
        let cmm_chol = cholesky_escalating(cmm, params.jitter(), "C_mm")?;

        let y = DVector::from_column_slice(values);
        let b = cross.tr_mul(&y);
        let weights = a_chol.solve(&b);
        Ok(Self {
            inducing: inducing.to_vec(),
            params,
            train_locations: locations.to_vec(),
            cross,
            a_chol,
            b,
            cmm_chol,
            weights,
        })
    }

    /// Refits on new observations at the same locations, reusing every
    /// factorization.
    pub fn with_values(&self, values: &[f64]) -> Result<Self> {
        if values.len() != self.n() {
            return Err(Error::Input(format!("expected {} values, got {}", self.n(), values.len())));
        }
        check_values(values)?;
        let b = self.cross.tr_mul(&DVector::from_column_slice(values));
        let weights = self.a_chol.solve(&b);
        Ok(Self {
            b,
            weights,
            ..self.clone()
        })
    }

    pub fn n(&self) -> usize {
        self.train_locations.len()
    }

    pub fn m(&self) -> usize {
        self.inducing.len()
    }

    pub fn inducing(&self) -> &[Location] {
        &self.inducing
    }

    pub fn params(&self) -> &KernelParams {
        &self.params
    }

    /// `b = C_mn y`
    pub fn projected_data(&self) -> &DVector<f64> {
        &self.b
    }

    /// Lower factor of `tau2 C_mm + C_mn C_nm`.
    pub fn a_factor(&self) -> DMatrix<f64> {
        self.a_chol.l()
    }

    pub fn predict(&self, targets: &[Location]) -> PredictiveMixture {
        if targets.is_empty() {
            return PredictiveMixture::default();
        }
        let c = cov_matrix(&self.inducing, targets, &self.params);
        let means: Vec<f64> = c.tr_mul(&self.weights).iter().copied().collect();
        let nystrom = whitened_col_norms2(&self.cmm_chol, &c);
        let correction = whitened_col_norms2(&self.a_chol, &c);
        let p = &self.params;
        let variances: Vec<f64> = nystrom
            .iter()
            .zip(&correction)
            .map(|(q, r)| (p.eta2 - q + p.tau2 * r).max(0.0) + p.tau2)
            .collect();
        PredictiveMixture::from_moments(&means, &variances)
    }

    /// Smallest eigenvalue of `n^-1 C_nm' C_nm`.
    pub fn min_gram_eigenvalue(&self) -> f64 {
        let g = self.cross.tr_mul(&self.cross) / self.n() as f64;
        let g = (&g + g.transpose()) * 0.5;
        SymmetricEigen::new(g)
            .eigenvalues
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min)
    }

    /// `I_m(s*) = C_nm A^-1 c_m*` with bound
    /// `m sqrt(m) eta2 / (n e_min) * c(s~_nearest, s*)`.
    pub fn influence(&self, target: &Location) -> Result<Influence> {
        if self.params.tau2 <= 0.0 {
            return Err(Error::Unsupported(
                "PP influence bound requires a positive nugget".into(),
            ));
        }
        let c = cov_vector(&self.inducing, target, &self.params);
        let values = &self.cross * self.a_chol.solve(&c);
        let e_min = self.min_gram_eigenvalue();
        let bound = if e_min <= E_MIN_FLOOR {
            log::warn!("PP influence bound undefined: smallest Gram eigenvalue {e_min:e}");
            f64::INFINITY
        } else {
            let nearest = nearest_index(&self.inducing, target).expect("m >= 1");
            let m = self.m() as f64;
            m * m.sqrt() * self.params.eta2 / (self.n() as f64 * e_min)
                * cov(&self.inducing[nearest], target, &self.params)
        };
        Ok(Influence::new(values.iter().copied().collect(), bound, Some(e_min)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gp::{gp_sample, GpFit};
    use crate::rng::rng_from_seed;
    use crate::support_points::{support_points, SpConfig};
    use rand::Rng;

    fn uniform(n: usize, seed: u64) -> Vec<Location> {
        let mut rng = rng_from_seed(seed);
        (0..n)
            .map(|_| Location::new(rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0)))
            .collect()
    }

    fn unit() -> KernelParams {
        KernelParams::new(1.0, 0.21, 1.5, 1.0).unwrap()
    }

    #[test]
    fn scalar_case_matches_exact_gp() {
        let s = Location::new(0.4, 0.4);
        let pp = PpModel::fit(&[s], &[2.0], &[s], unit()).unwrap();
        let pt = &pp.predict(&[s]).points[0];
        assert!((pt.mean - 1.0).abs() < 1e-15);
        let gp = GpFit::fit(&[s], &[2.0], unit()).unwrap().predict(&[s]);
        assert!((pt.variance - gp.points[0].variance).abs() < 1e-12);
        let inf = pp.influence(&s).unwrap();
        assert!((inf.values[0] - 0.5).abs() < 1e-15);
        assert_eq!(inf.e_min, Some(1.0));
        assert!((inf.bound - 1.0).abs() < 1e-15);
        assert!(inf.bound_holds);
    }

    #[test]
    fn single_inducing_point_normal_matrix() {
        let locs = uniform(30, 1);
        let p = KernelParams::paper_default();
        let z = Location::new(0.1, -0.3);
        let pp = PpModel::fit(&locs, &vec![1.0; 30], &[z], p).unwrap();
        let expected = p.tau2 * p.eta2 + locs.iter().map(|s| cov(s, &z, &p).powi(2)).sum::<f64>();
        let l = pp.a_factor()[(0, 0)];
        assert!((l * l - expected).abs() < 1e-12 * expected);
    }

    #[test]
    fn full_rank_normal_matrix_factorizes() {
        let locs = uniform(60, 2);
        let p = KernelParams::paper_default();
        let pp = PpModel::fit(&locs, &vec![0.5; 60], &locs, p).unwrap();
        let c = cov_matrix_sym(&locs, &p);
        let a = &c * &c + &c * p.tau2;
        let l = pp.a_factor();
        assert!((&l * l.transpose() - &a).norm() / a.norm() < 1e-10);
    }

    #[test]
    fn coincident_inducing_points() {
        let locs = uniform(40, 3);
        let z = Location::new(0.0, 0.0);
        assert!(PpModel::fit(&locs, &vec![1.0; 40], &[z, z], KernelParams::paper_default()).is_ok());
        let no_nugget = KernelParams::new(1.5, 0.21, 1.5, 0.0).unwrap();
        let err = PpModel::fit(&locs, &vec![1.0; 40], &[z, z], no_nugget).unwrap_err();
        assert!(matches!(err, Error::Singular(_)));
    }

    #[test]
    fn input_errors() {
        let locs = uniform(3, 4);
        let p = KernelParams::paper_default();
        assert!(matches!(PpModel::fit(&locs, &[1.0; 3], &[], p), Err(Error::Input(_))));
        assert!(matches!(PpModel::fit(&locs, &[1.0; 3], &uniform(4, 5), p), Err(Error::Input(_))));
        assert!(matches!(PpModel::fit(&locs, &[1.0; 2], &uniform(2, 5), p), Err(Error::Input(_))));
    }

    #[test]
    fn exact_gp_equivalence_with_full_inducing_set() {
        let p = KernelParams::paper_default();
        for seed in 0..5 {
            let locs = uniform(120, 10 + seed);
            let y = gp_sample(&locs, p, seed).unwrap();
            let targets = uniform(30, 50 + seed);
            let gp = GpFit::fit(&locs, &y, p).unwrap().predict(&targets);
            let pp = PpModel::fit(&locs, &y, &locs, p).unwrap().predict(&targets);
            for (a, b) in gp.points.iter().zip(&pp.points) {
                assert!((a.mean - b.mean).abs() < 1e-8, "{} vs {}", a.mean, b.mean);
                assert!((a.variance - b.variance).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn zero_data_and_variance_floor() {
        let locs = uniform(200, 6);
        let p = KernelParams::paper_default();
        let ind = support_points(&locs, 15, &SpConfig::default()).unwrap();
        let pp = PpModel::fit(&locs, &vec![0.0; 200], &ind, p).unwrap();
        for pt in &pp.predict(&uniform(100, 7)).points {
            assert_eq!(pt.mean, 0.0);
            assert!(pt.variance >= p.tau2);
        }
    }

    #[test]
    fn mean_is_linear() {
        let locs = uniform(150, 8);
        let p = KernelParams::paper_default();
        let ind = support_points(&locs, 20, &SpConfig::default()).unwrap();
        let y1 = gp_sample(&locs, p, 1).unwrap();
        let y2 = gp_sample(&locs, p, 2).unwrap();
        let y12: Vec<f64> = y1.iter().zip(&y2).map(|(a, b)| a + b).collect();
        let targets = uniform(25, 9);
        let pp = PpModel::fit(&locs, &y1, &ind, p).unwrap();
        let m1 = pp.predict(&targets).means();
        let m2 = pp.with_values(&y2).unwrap().predict(&targets).means();
        let m12 = pp.with_values(&y12).unwrap().predict(&targets).means();
        for i in 0..targets.len() {
            assert!((m12[i] - m1[i] - m2[i]).abs() < 1e-9);
        }
    }

    #[test]
    fn influence_matches_finite_differences() {
        let locs = uniform(300, 12);
        let p = KernelParams::paper_default();
        let ind = support_points(&locs, 25, &SpConfig::default()).unwrap();
        let y = gp_sample(&locs, p, 3).unwrap();
        let pp = PpModel::fit(&locs, &y, &ind, p).unwrap();
        let t = Location::new(-0.7, 1.1);
        let inf = pp.influence(&t).unwrap();
        let h = 1e-6;
        for i in (0..300).step_by(11) {
            let mut up = y.clone();
            up[i] += h;
            let mut dn = y.clone();
            dn[i] -= h;
            let fd = (pp.with_values(&up).unwrap().predict(&[t]).points[0].mean
                - pp.with_values(&dn).unwrap().predict(&[t]).points[0].mean)
                / (2.0 * h);
            let scale = inf.values[i].abs().max(1e-2 * inf.max_abs);
            assert!((fd - inf.values[i]).abs() / scale < 1e-4);
        }
        assert!(inf.bound_holds);
    }
}
