//! Deterministic laboratory for differential extrinsic plasticity.
//!
//! The crate wires a tanh controller with an online-plastic weight matrix
//! into small fixed-timestep plants, runs the closed loop under scripted
//! perturbations, and ships the analysis tools (loop spectra, phase
//! relations, step patterns, weight clustering) needed to characterize the
//! behavior that self-organizes.

pub mod analysis;
pub mod controller;
pub mod error;
pub mod harness;
pub mod hexapod;
pub mod model;
pub mod plants;
pub mod plasticity;

pub use controller::{ControllerState, WeightSnapshot};
pub use error::{Error, Result};
pub use model::{DelayLine, DelayedSensorConfig, ModelMatrix};
pub use plants::{Perturbation, PerturbationKind, Plant};
pub use plasticity::{Normalization, PlasticityParams, Rule};
