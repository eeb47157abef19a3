//! Least-squares estimators for FCMs and harmonic line admittances.

pub mod admittance;
pub mod batch;
pub mod online;

pub use admittance::{
    estimate_admittance, estimate_admittance_kronecker, AdmittanceEstimate, NetworkMeasurementBatch, Topology,
};
pub use batch::{estimate_fcm_batch, BatchEstimate, GramAccumulator, MeasurementBatch};
pub use online::{online_init, OnlineEstimator, OnlineSettings};
