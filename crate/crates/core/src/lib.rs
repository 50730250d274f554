//! Gaussian-process spatial prediction with predictive processes (PP),
//! ensembles of predictive processes over support-point Voronoi partitions
//! (EPP) and multi-resolution ensembles (MREPP).
//!
//! The crate also ships the pieces needed to reproduce desk-scale simulation
//! studies: support-point selection, synthetic scenario generation,
//! influence-function diagnostics, probabilistic scoring and a seeded
//! experiment harness.

pub mod ensemble;
pub mod error;
pub mod gp;
pub mod harness;
pub mod kernels;
mod linalg;
pub mod metrics;
pub mod mixture;
pub mod partition;
pub mod pp;
pub mod rng;
pub mod simgen;
pub mod support_points;

pub use ensemble::{EppModel, LevelConfig, MreppModel};
pub use error::{Error, Result};
pub use gp::{GpFit, Influence};
pub use kernels::{KernelParams, Location, Smoothness};
pub use mixture::{Component, MixturePoint, PredictiveMixture};
pub use partition::Partition;
pub use pp::PpModel;
pub use support_points::SpConfig;
