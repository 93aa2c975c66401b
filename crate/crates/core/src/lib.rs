//! Multi-target tracking on superpositional image sensors with a
//! multi-Bernoulli filter whose update treats interacting targets jointly.
//!
//! The pipeline per frame is [`filter::predict`], then either the clustered
//! joint update [`filter::tcmb_update`] or the independent-target baseline
//! [`filter::mbtbd_update`], then [`rfs::prune`] and [`rfs::extract`].
//! [`scenario`] drives closed-loop Monte Carlo experiments and [`metrics`]
//! scores them.
// `!(x > 0.0)` style checks are how the validators reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod clustering;
pub mod error;
pub mod filter;
pub mod gaussian;
pub mod metrics;
pub mod rfs;
pub mod scenario;
pub mod sensor;

#[cfg(test)]
pub(crate) mod testutil;

pub use clustering::{cluster_targets, Cluster};
pub use error::{Error, Result};
pub use filter::{
    mbtbd_update, partitioned_update, predict, step, tcmb_update, Algorithm, MotionModel, StepOutput, Thresholds,
    UpdateConfig,
};
pub use gaussian::{cholesky, sigma_points, GaussianDensity, SigmaPointSet, StateMatrix, StateVector};
pub use metrics::{cardinality_stats, ospa, OspaParams};
pub use rfs::{extract, prune, BernoulliComponent, BirthComponent, ComponentId, Extraction, MultiBernoulli};
pub use scenario::{run_batch, run_trial, BatchResult, ScenarioConfig, TrialResult};
pub use sensor::{
    cell_log_ratio, illuminated_cells, psf, simulate_measurement, Cell, CellSet, ImageMeasurement, SensorConfig,
};
