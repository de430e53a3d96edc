//! Experiment descriptions: a single JSON document pins everything a run
//! needs, so a config re-run yields a bit-identical log.
//!
//! Times are in seconds; the control step `dt` lives inside the plasticity
//! parameters and every schedule is quantized to it via `round(time/dt)`.

use std::env;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::controller::WeightSnapshot;
use crate::error::{Error, Result};
use crate::model::{build_guided_model, DelayedSensorConfig, GuidedEntry, ModelMatrix};
use crate::plants::{
    CrankWheel, CrankWheelParams, JointChain, JointChainParams, LinearDelayPlant, Perturbation,
    Plant, RotationPlant, JOINTS_PER_AGENT,
};
use crate::plasticity::PlasticityParams;

pub const CONFIG_SCHEMA: &str = "deplab-config/1";

/// Environment override for the parent of all run directories. Only the
/// output location may come from the environment; everything that affects
/// the numbers stays in the config file.
pub const OUTPUT_ENV_VAR: &str = "DEPLAB_OUTPUT_DIR";

fn default_schema() -> String {
    CONFIG_SCHEMA.to_string()
}

fn default_log_interval() -> f64 {
    0.5
}

/// Which plant closes the loop.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlantSpec {
    /// Pure one-step lag: sensors reproduce the previous command.
    Lag { dims: usize },
    /// Autonomous planar rotator advancing by `theta` per step.
    Rotation { theta: f64 },
    /// Damped torsion-spring chain.
    Chain(JointChainParams),
    /// Inertial crank wheel, one or two agents.
    Wheel(CrankWheelParams),
}

impl PlantSpec {
    /// Independent controllers sharing this plant.
    pub fn agents(&self) -> usize {
        match self {
            PlantSpec::Wheel(p) => p.agents,
            _ => 1,
        }
    }

    pub fn motors_per_agent(&self) -> usize {
        match self {
            PlantSpec::Lag { dims } => *dims,
            PlantSpec::Rotation { .. } => 2,
            PlantSpec::Chain(p) => p.joints,
            PlantSpec::Wheel(_) => JOINTS_PER_AGENT,
        }
    }

    /// Base sensor channels per agent, before delayed copies.
    pub fn base_sensors_per_agent(&self) -> usize {
        self.motors_per_agent()
    }

    pub fn build(&self, dt: f64) -> Result<Box<dyn Plant>> {
        Ok(match self {
            PlantSpec::Lag { dims } => Box::new(LinearDelayPlant::new(*dims)?),
            PlantSpec::Rotation { theta } => Box::new(RotationPlant::new(*theta)?),
            PlantSpec::Chain(p) => Box::new(JointChain::new(p.clone(), dt)?),
            PlantSpec::Wheel(p) => Box::new(CrankWheel::new(p.clone(), dt)?),
        })
    }
}

/// Offline-fitted inverse model, trained on the sensor/motor streams of a
/// finished run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LearnedModel {
    pub source_run: PathBuf,
}

/// Inverse model selection. `"identity"` and preset names are bare strings;
/// explicit sparse entries and offline-learned fits use object form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ModelSpec {
    Named(String),
    Entries { entries: Vec<GuidedEntry> },
    Learned { learned: LearnedModel },
}

impl Default for ModelSpec {
    fn default() -> Self {
        ModelSpec::Named("identity".to_string())
    }
}

impl ModelSpec {
    /// Builds every variant that needs no external data. The learned variant
    /// is resolved by the runner, which can read the source run.
    pub fn build_static(&self, motors: usize, sensors: usize) -> Result<ModelMatrix> {
        match self {
            ModelSpec::Named(name) => ModelMatrix::preset(name, motors, sensors),
            ModelSpec::Entries { entries } => build_guided_model(entries, motors, sensors),
            ModelSpec::Learned { .. } => Err(Error::config(
                "learned model requires the runner to read the source run",
            )),
        }
    }
}

/// One weight-recall switch: load the frozen weights of `snapshot` (an index
/// into the source run's snapshot list) at `time`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RecallStep {
    pub snapshot: usize,
    pub time: f64,
}

/// Scripted recall: the run starts from silent frozen weights and switches
/// through stored snapshots of `source_run` at the given times.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RecallSequence {
    pub source_run: PathBuf,
    pub steps: Vec<RecallStep>,
}

/// Mid-run weight transplant: at `time` (in this run), replace the weights
/// with the snapshot taken at the same `time` in `source_run`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightCopy {
    pub source_run: PathBuf,
    pub time: f64,
}

/// Complete description of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_schema")]
    pub schema: String,
    pub plant: PlantSpec,
    pub plasticity: PlasticityParams,
    #[serde(default)]
    pub model: ModelSpec,
    #[serde(default)]
    pub delayed_sensors: Option<DelayedSensorConfig>,
    /// Simulated seconds.
    pub duration: f64,
    #[serde(default)]
    pub perturbations: Vec<Perturbation>,
    /// Times at which full weight snapshots are stored for later recall.
    #[serde(default)]
    pub snapshot_times: Vec<f64>,
    /// Cadence of full weight/spectrum rows; sensor and motor rows are
    /// logged every step regardless.
    #[serde(default = "default_log_interval")]
    pub log_interval: f64,
    /// Starting weights; least-biased (all zero) when absent.
    #[serde(default)]
    pub initial_weights: Option<WeightSnapshot>,
    #[serde(default)]
    pub weight_copy: Option<WeightCopy>,
    #[serde(default)]
    pub recall: Option<RecallSequence>,
    /// Disables plasticity and threshold dynamics for the whole run.
    #[serde(default)]
    pub frozen: bool,
    /// Run directory; a relative default is derived from the config name.
    #[serde(default)]
    pub output: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        let config: ExperimentConfig = serde_json::from_str(&text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        fs::write(path, text)?;
        Ok(())
    }

    pub fn dt(&self) -> f64 {
        self.plasticity.dt
    }

    /// Total number of control steps.
    pub fn steps(&self) -> usize {
        (self.duration / self.dt()).round() as usize
    }

    /// Steps between full weight/spectrum rows.
    pub fn log_every(&self) -> usize {
        ((self.log_interval / self.dt()).round() as usize).max(1)
    }

    pub fn agents(&self) -> usize {
        self.plant.agents()
    }

    pub fn motors_per_agent(&self) -> usize {
        self.plant.motors_per_agent()
    }

    /// Sensor channels per agent including delayed copies.
    pub fn ext_sensors_per_agent(&self) -> usize {
        let base = self.plant.base_sensors_per_agent();
        base + self
            .delayed_sensors
            .as_ref()
            .map_or(0, |d| d.indices.len())
    }

    fn check_time(&self, t: f64, what: &str) -> Result<()> {
        if !t.is_finite() || t < 0.0 || t > self.duration {
            return Err(Error::config(format!(
                "{what} at t = {t} falls outside the run [0, {}]",
                self.duration
            )));
        }
        // Schedules quantize to round(t/dt); the step must actually occur.
        if (t / self.dt()).round() as usize >= self.steps() {
            return Err(Error::config(format!(
                "{what} at t = {t} quantizes past the final step"
            )));
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if !self.schema.starts_with("deplab-config/") {
            return Err(Error::config(format!(
                "unrecognized config schema {:?}",
                self.schema
            )));
        }
        self.plasticity.validate()?;
        if !(self.duration.is_finite() && self.duration > 0.0) {
            return Err(Error::config(format!(
                "duration must be positive, got {}",
                self.duration
            )));
        }
        if self.steps() == 0 {
            return Err(Error::config(format!(
                "duration {} is shorter than one step of dt = {}",
                self.duration,
                self.dt()
            )));
        }
        if !(self.log_interval.is_finite() && self.log_interval > 0.0) {
            return Err(Error::config(format!(
                "log_interval must be positive, got {}",
                self.log_interval
            )));
        }
        for p in &self.perturbations {
            self.check_time(p.time, "perturbation")?;
            p.kind.validate()?;
        }
        for &t in &self.snapshot_times {
            self.check_time(t, "snapshot")?;
        }
        if let Some(copy) = &self.weight_copy {
            self.check_time(copy.time, "weight copy")?;
        }
        if let Some(recall) = &self.recall {
            if self.weight_copy.is_some() {
                return Err(Error::config(
                    "recall and weight_copy cannot be combined in one run",
                ));
            }
            if recall.steps.is_empty() {
                return Err(Error::config("recall sequence has no steps"));
            }
            let mut prev = f64::NEG_INFINITY;
            for step in &recall.steps {
                self.check_time(step.time, "recall switch")?;
                if step.time <= prev {
                    return Err(Error::config(
                        "recall switch times must be strictly increasing",
                    ));
                }
                prev = step.time;
            }
        }
        if let Some(delayed) = &self.delayed_sensors {
            delayed.validate(self.plant.base_sensors_per_agent(), self.dt())?;
        }
        if let Some(w) = &self.initial_weights {
            let motors = self.motors_per_agent();
            let sensors = self.ext_sensors_per_agent();
            if w.m != motors || w.n != sensors {
                return Err(Error::config(format!(
                    "initial weights are {}x{}, the loop needs {motors}x{sensors}",
                    w.m, w.n
                )));
            }
        }
        Ok(())
    }

    /// Resolves the run directory: `$DEPLAB_OUTPUT_DIR/<name>` when the
    /// variable is set, else the config's `output`, else `runs/<name>`.
    /// `name` comes from `output`, then `config_path`, then `"run"`.
    pub fn resolve_output(&self, config_path: Option<&Path>) -> PathBuf {
        let name = self
            .output
            .as_deref()
            .and_then(Path::file_name)
            .or_else(|| config_path.and_then(Path::file_stem))
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "run".to_string());
        if let Ok(dir) = env::var(OUTPUT_ENV_VAR) {
            return Path::new(&dir).join(name);
        }
        self.output
            .clone()
            .unwrap_or_else(|| Path::new("runs").join(name))
    }
}
