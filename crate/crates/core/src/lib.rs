//! Frequency coupling matrices for harmonic power networks.
//!
//! Harmonic phasor bookkeeping, exact radial network solves, subtree
//! reduction to a single virtual FCM, and least-squares estimators for FCMs
//! and harmonic line admittances.

pub mod error;
pub mod estimation;
pub mod harmonic;
pub mod io;
pub mod linalg;
pub mod metrics;
pub mod network;
pub mod reduction;
pub mod scenario;

pub use error::{FcmError, Result};
pub use harmonic::{
    apply_fcm, complex_from_real_vector, real_from_complex_matrix, real_from_complex_vector, ComplexHarmonicMatrix,
    ComplexSpectrum, Fcm, HarmonicConfig, LineImpedance, RealHarmonicVector,
};
pub use metrics::{relative_error, ErrorMode};
pub use network::{
    assemble_harmonic_admittance, build_network, solve_harmonic_network, BusLayout, Converter, HarmonicAdmittance,
    HarmonicNetwork, Line, NetworkDocument, NetworkSolution, NetworkSolver,
};
pub use estimation::{
    estimate_admittance, estimate_fcm_batch, online_init, AdmittanceEstimate, BatchEstimate, GramAccumulator,
    MeasurementBatch, NetworkMeasurementBatch, OnlineEstimator, OnlineSettings, Topology,
};
pub use reduction::{
    merge_parallel_converters, reduce_depth_one, reduce_tree, Leaf, ReductionOrder, ReductionReport, ReductionStep,
};
pub use scenario::{run_experiment, ExperimentConfig, ExperimentName, ExperimentResult, SyntheticConverterSpec};
