//! Exact Gaussian-process prediction, field sampling and the GP influence
//! function.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::kernels::{cov, cov_matrix, cov_matrix_sym, cov_vector, nearest_index, KernelParams, Location};
use crate::linalg::{cholesky_escalating, whitened_col_norms2, Chol};
use crate::mixture::PredictiveMixture;
use crate::rng::{rng_from_seed, StreamRng};

/// Influence of each training observation on the predictive mean at one
/// target, together with its analytic upper bound.
#[derive(Clone, Debug, PartialEq)]
pub struct Influence {
    pub values: Vec<f64>,
    /// Upper bound on `max |values|`; `+inf` when the bound is undefined.
    pub bound: f64,
    pub max_abs: f64,
    pub bound_holds: bool,
    /// Smallest eigenvalue of `n^-1 C_nm' C_nm` (predictive processes only).
    pub e_min: Option<f64>,
}

impl Influence {
    pub(crate) fn new(values: Vec<f64>, bound: f64, e_min: Option<f64>) -> Self {
        let max_abs = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        Self {
            bound_holds: max_abs <= bound,
            values,
            bound,
            max_abs,
            e_min,
        }
    }
}

pub(crate) fn has_duplicates(locations: &[Location]) -> bool {
    let mut keys: Vec<(u64, u64)> = locations
        .iter()
        .map(|l| ((l.x + 0.0).to_bits(), (l.y + 0.0).to_bits()))
        .collect();
    keys.sort_unstable();
    keys.windows(2).any(|w| w[0] == w[1])
}

pub(crate) fn check_values(values: &[f64]) -> Result<()> {
    if let Some(i) = values.iter().position(|v| !v.is_finite()) {
        return Err(Error::Input(format!("observation {i} is not finite")));
    }
    Ok(())
}

pub(crate) fn check_locations(locations: &[Location]) -> Result<()> {
    if let Some(i) = locations.iter().position(|l| !l.is_finite()) {
        return Err(Error::Input(format!("location {i} is not finite")));
    }
    Ok(())
}

/// A full GP conditioned on training data, holding the Cholesky factor of
/// `C_nn + tau2 I`.
#[derive(Clone, Debug)]
pub struct GpFit {
    train_locations: Vec<Location>,
    train_values: DVector<f64>,
    params: KernelParams,
    chol: Chol,
    alpha: DVector<f64>,
}

impl GpFit {
    pub fn fit(locations: &[Location], values: &[f64], params: KernelParams) -> Result<Self> {
        if locations.is_empty() {
            return Err(Error::Input("at least one training location is required".into()));
        }
        if locations.len() != values.len() {
            return Err(Error::Input(format!(
                "{} locations but {} values",
                locations.len(),
                values.len()
            )));
        }
        check_locations(locations)?;
        check_values(values)?;
        if params.tau2 == 0.0 && has_duplicates(locations) {
            return Err(Error::Singular(
                "duplicate training locations with zero nugget".into(),
            ));
        }

        let mut k = cov_matrix_sym(locations, &params);
        let diag = if params.tau2 > 0.0 { params.tau2 } else { params.jitter() };
        for i in 0..k.nrows() {
            k[(i, i)] += diag;
        }
        let chol = k
            .cholesky()
            .ok_or_else(|| Error::Singular("C_nn + tau2 I is not positive definite".into()))?;
        let y = DVector::from_column_slice(values);
        let alpha = chol.solve(&y);
        Ok(Self {
            train_locations: locations.to_vec(),
            train_values: y,
            params,
            chol,
            alpha,
        })
    }

    /// Refits on new observations at the same locations, reusing the
    /// factorization.
    pub fn with_values(&self, values: &[f64]) -> Result<Self> {
        if values.len() != self.n() {
            return Err(Error::Input(format!("expected {} values, got {}", self.n(), values.len())));
        }
        check_values(values)?;
        let y = DVector::from_column_slice(values);
        let alpha = self.chol.solve(&y);
        Ok(Self {
            train_values: y,
            alpha,
            ..self.clone()
        })
    }

    pub fn n(&self) -> usize {
        self.train_locations.len()
    }

    pub fn params(&self) -> &KernelParams {
        &self.params
    }

    pub fn train_locations(&self) -> &[Location] {
        &self.train_locations
    }

    pub fn train_values(&self) -> &[f64] {
        self.train_values.as_slice()
    }

    /// Lower-triangular factor `L` with `L L' = C_nn + tau2 I`.
    pub fn chol_factor(&self) -> DMatrix<f64> {
        self.chol.l()
    }

    /// Predictive mean and new-observation variance at each target.
    pub fn predict(&self, targets: &[Location]) -> PredictiveMixture {
        if targets.is_empty() {
            return PredictiveMixture::default();
        }
        let cross = cov_matrix(&self.train_locations, targets, &self.params);
        let means: Vec<f64> = cross.tr_mul(&self.alpha).iter().copied().collect();
        let explained = whitened_col_norms2(&self.chol, &cross);
        let variances: Vec<f64> = explained
            .iter()
            .map(|q| (self.params.eta2 - q).max(0.0) + self.params.tau2)
            .collect();
        PredictiveMixture::from_moments(&means, &variances)
    }

    /// `I(s*) = (C_nn + tau2 I)^-1 c_n*` with bound
    /// `sqrt(n) / tau2 * c(s_nearest, s*)`.
    pub fn influence(&self, target: &Location) -> Result<Influence> {
        if self.params.tau2 <= 0.0 {
            return Err(Error::Unsupported(
                "GP influence bound requires a positive nugget".into(),
            ));
        }
        let c = cov_vector(&self.train_locations, target, &self.params);
        let values = self.chol.solve(&c);
        let nearest = nearest_index(&self.train_locations, target).expect("fit has n >= 1");
        let bound = (self.n() as f64).sqrt() / self.params.tau2
            * cov(&self.train_locations[nearest], target, &self.params);
        Ok(Influence::new(values.iter().copied().collect(), bound, None))
    }
}

/// Draws `y = w + eps` with `w ~ N(0, C_nn)` and `eps ~ N(0, tau2 I)` from a
/// cached factor of `C_nn`.
#[derive(Clone, Debug)]
pub struct GpSampler {
    lower: DMatrix<f64>,
    params: KernelParams,
}

/// One field draw: latent process and noisy observations.
#[derive(Clone, Debug, PartialEq)]
pub struct FieldSample {
    pub latent: Vec<f64>,
    pub observed: Vec<f64>,
}

impl GpSampler {
    pub fn new(locations: &[Location], params: KernelParams) -> Result<Self> {
        check_locations(locations)?;
        let k = cov_matrix_sym(locations, &params);
        let chol = cholesky_escalating(k, params.jitter(), "C_nn for sampling")?;
        Ok(Self {
            lower: chol.unpack(),
            params,
        })
    }

    pub fn len(&self) -> usize {
        self.lower.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn sample(&self, rng: &mut StreamRng) -> FieldSample {
        let n = self.len();
        let z = DVector::from_iterator(n, (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)));
        let w = &self.lower * z;
        let sd = self.params.tau2.sqrt();
        let observed = w
            .iter()
            .map(|wi| wi + sd * rng.sample::<f64, _>(StandardNormal))
            .collect();
        FieldSample {
            latent: w.iter().copied().collect(),
            observed,
        }
    }
}

/// Seeded observation vector at `locations`.
pub fn gp_sample(locations: &[Location], params: KernelParams, seed: u64) -> Result<Vec<f64>> {
    let sampler = GpSampler::new(locations, params)?;
    Ok(sampler.sample(&mut rng_from_seed(seed)).observed)
}
