//! Experiment orchestration: configs, execution, logging, and sweeps.
//!
//! A run is a pure function of its config file. The runner fixes a strict
//! within-step order (documented in [`runner`](self::runner)), logs sensors
//! and motors every step and full weights plus loop spectra at a coarser
//! cadence, and quantizes every scheduled time to `round(t/dt)`. Finished
//! runs serialize to a directory of CSV/JSON files that reload losslessly,
//! so downstream analysis never needs the live process.

mod config;
mod log;
mod runner;
mod sweep;

pub use config::{
    ExperimentConfig, LearnedModel, ModelSpec, PlantSpec, RecallSequence, RecallStep, WeightCopy,
    CONFIG_SCHEMA, OUTPUT_ENV_VAR,
};
pub use log::{
    load_snapshots, snapshot_at, EventRow, RunLog, RunSummary, SnapshotRow, StepRow, WeightRow,
    SNAPSHOTS_SCHEMA, SUMMARY_SCHEMA,
};
pub use runner::{run_experiment, schedule_recall};
pub use sweep::{sweep, sweep_csv, SweepRow};
