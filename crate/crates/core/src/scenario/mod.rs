//! Synthetic data generation and experiment orchestration.

pub mod experiments;
pub mod noise;
pub mod synth;
pub mod trees;
pub mod voltage;

pub use noise::{add_measurement_noise, mean_phasor_magnitude, NoiseModel};
pub use synth::{load_fcm, synth_converter_fcm, SyntheticConverterSpec, Switching};
pub use voltage::{sample_bus_voltages, ConverterVoltageSpec, VoltageSamplingSpec};
pub use trees::random_tree_network;
pub use experiments::{
    run_experiment, ExperimentConfig, ExperimentName, ExperimentResult, ReductionMetrics, ResultTable, SweepPoint,
};
