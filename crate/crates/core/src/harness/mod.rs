//! Seeded experiment harness: configuration, replicated runs, influence
//! audits and convergence-slope diagnostics.

pub mod config;
pub mod influence;
pub mod run;
pub mod slopes;

pub use config::{ExperimentConfig, InfluenceConfig, MethodEntry, MethodSpec, ResolvedMethod, SlopeConfig};
pub use influence::{influence_audit, InfluenceReport, InfluenceRow, InfluenceTrial};
pub use run::{fit_and_predict, run, ResultRow, RunReport, WeightRow};
pub use slopes::{run_slopes, slope_diagnostic, SlopeFit, SlopeReport};
