//! Post-hoc analyses over run data: loop spectra, stationarity residuals,
//! rotation self-consistency, phase relations, step patterns, and weight
//! clustering. Everything here is a pure function over immutable inputs.

mod cluster;
mod consistency;
mod phase;
mod spectrum;
mod steps;

pub use cluster::{cluster_weights, Clustering};
pub use consistency::{hebb_residual, rotation_consistency, RotationConsistency};
pub use phase::{circular_distance, phase_relations, wrap_angle, PhaseMatrix};
pub use spectrum::{
    delayed_column_map, loop_matrix, principal_angle, spectrum, spectrum_of, SpectrumSample,
    LEADING_VECTORS, NONZERO_RATIO,
};
pub use steps::{extract_step_pattern, GaitLabel, StepPattern};
