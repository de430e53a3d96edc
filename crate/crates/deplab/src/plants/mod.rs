//! Reduced, fully deterministic plants closing the sensorimotor loop.
//!
//! Every plant advances by exactly one control step per [`Plant::step`] call
//! and honors the lag contract: the effect of the command passed at step `t`
//! is first visible in the sensors read at step `t+1`, never earlier.
//! Sensor readings are clamped to `[-1, 1]`; internal state is not, so the
//! physics stays consistent under hard kicks.

mod chain;
mod linear;
mod wheel;

pub use chain::{ContactConfig, CouplingTopology, JointChain, JointChainParams};
pub use linear::{schedule_steps, LinearDelayPlant, RotationPlant};
pub use wheel::{CrankWheel, CrankWheelParams, JOINTS_PER_AGENT};

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A scripted intervention, scheduled by the harness at a fixed step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PerturbationKind {
    /// Velocity impulse on one joint (on the wheel plant: spins the wheel).
    Kick { joint: usize, magnitude: f64 },
    /// External torque on the wheel axis, held for `duration` seconds.
    Torque {
        wheel: usize,
        magnitude: f64,
        duration: f64,
    },
    /// Freezes a joint at its current angle for `duration` seconds.
    Clamp { joint: usize, duration: f64 },
}

impl PerturbationKind {
    pub fn validate(&self) -> Result<()> {
        let finite = match self {
            PerturbationKind::Kick { magnitude, .. } => magnitude.is_finite(),
            PerturbationKind::Torque {
                magnitude, duration, ..
            } => magnitude.is_finite() && duration.is_finite() && *duration >= 0.0,
            PerturbationKind::Clamp { duration, .. } => duration.is_finite() && *duration >= 0.0,
        };
        if finite {
            Ok(())
        } else {
            Err(Error::invalid(format!("perturbation has non-finite fields: {self:?}")))
        }
    }
}

/// A perturbation with its schedule time in seconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Perturbation {
    pub time: f64,
    #[serde(flatten)]
    pub kind: PerturbationKind,
}

/// Common contract of all plants. One `step` call = one control step of dt.
pub trait Plant {
    /// Number of base sensor channels (before any delayed copies).
    fn sensors(&self) -> usize;
    fn motors(&self) -> usize;

    /// Advances one step under motor command `y`, returning the next sensor
    /// reading.
    fn step(&mut self, y: &DVector<f64>) -> Result<DVector<f64>>;

    /// Injects a perturbation; its effect shows up in the next `step`.
    fn apply_perturbation(&mut self, p: &PerturbationKind) -> Result<()>;

    /// Current contact flags, if the plant models ground contact.
    fn contacts(&self) -> Option<Vec<bool>> {
        None
    }

    /// Angular velocity of the shared wheel, if the plant has one.
    fn wheel_speed(&self) -> Option<f64> {
        None
    }
}

pub(crate) fn clamp_sensors(x: &mut DVector<f64>) {
    for v in x.iter_mut() {
        *v = v.clamp(-1.0, 1.0);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perturbation_serde_round_trip() {
        let p = Perturbation {
            time: 45.0,
            kind: PerturbationKind::Kick {
                joint: 3,
                magnitude: -2.5,
            },
        };
        let json = serde_json::to_string(&p).unwrap();
        assert!(json.contains("kick"));
        let back: Perturbation = serde_json::from_str(&json).unwrap();
        assert_eq!(back, p);
    }

    #[test]
    fn perturbation_validation() {
        assert!(PerturbationKind::Kick {
            joint: 0,
            magnitude: f64::NAN
        }
        .validate()
        .is_err());
        assert!(PerturbationKind::Torque {
            wheel: 0,
            magnitude: 1.0,
            duration: -1.0
        }
        .validate()
        .is_err());
        assert!(PerturbationKind::Clamp {
            joint: 0,
            duration: 0.5
        }
        .validate()
        .is_ok());
    }
}
