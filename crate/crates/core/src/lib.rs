//! Score-based concept-drift monitoring with nested-bootstrap, time-varying
//! MEWMA control limits.
//!
//! A fitted predictive model turns each observation into a score vector (the
//! gradient of its penalized log-likelihood). New observations are smoothed
//! with a multivariate EWMA and compared through a Hotelling `T²` statistic
//! against a control limit `CL_i` calibrated by a nested bootstrap on the
//! training data alone.

pub mod artifact;
pub mod bootstrap;
pub mod data;
pub mod datagen;
pub mod error;
pub mod linmodel;
pub mod mewma;
pub mod model;
pub mod monitor;
pub mod nnmodel;
pub mod rng;
pub mod study;

pub use bootstrap::{
    baseline_split_cl, calibrate, inflation_factor, quantile_upper, BaselineCalibration, BootstrapConfig, Calibration,
};
pub use data::Dataset;
pub use error::{DriftError, Result};
pub use mewma::{estimate_moments, t2, MewmaState, ScoreMoments};
pub use model::{FittedModel, ModelKind, ModelSpec};
pub use monitor::{monitor_stream, MonitorRecord};
