//! Per-location Gaussian mixtures produced by every predictor.

use serde::{Deserialize, Serialize};

/// One weighted Gaussian component of a predictive mixture.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Component {
    pub weight: f64,
    pub mean: f64,
    pub variance: f64,
}

/// Predictive distribution at one target location.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MixturePoint {
    pub components: Vec<Component>,
    pub mean: f64,
    pub variance: f64,
}

impl MixturePoint {
    pub fn single(mean: f64, variance: f64) -> Self {
        Self {
            components: vec![Component {
                weight: 1.0,
                mean,
                variance,
            }],
            mean,
            variance,
        }
    }

    /// Builds the aggregate moments from weighted components:
    /// `mean = sum w mu`, `var = sum w (sigma^2 + mu^2) - mean^2`.
    ///
    /// The variance is accumulated in the algebraically equal centered form
    /// `sum w (sigma^2 + (mu - mean)^2)`, which keeps single-component
    /// mixtures exact.
    pub fn from_components(components: Vec<Component>) -> Self {
        let (mean, variance) = mixture_moments(&components);
        Self {
            components,
            mean,
            variance,
        }
    }

    pub fn weight_sum(&self) -> f64 {
        self.components.iter().map(|c| c.weight).sum()
    }
}

pub(crate) fn mixture_moments(components: &[Component]) -> (f64, f64) {
    let mean: f64 = components.iter().map(|c| c.weight * c.mean).sum();
    let variance: f64 = components
        .iter()
        .map(|c| {
            let d = c.mean - mean;
            c.weight * (c.variance + d * d)
        })
        .sum();
    (mean, variance.max(0.0))
}

/// Predictive mixtures at a list of target locations.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PredictiveMixture {
    pub points: Vec<MixturePoint>,
}

impl PredictiveMixture {
    pub fn from_moments(means: &[f64], variances: &[f64]) -> Self {
        debug_assert_eq!(means.len(), variances.len());
        Self {
            points: means
                .iter()
                .zip(variances)
                .map(|(&m, &v)| MixturePoint::single(m, v))
                .collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn means(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.mean).collect()
    }

    pub fn variances(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.variance).collect()
    }
}
