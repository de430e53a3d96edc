//! Minimal analytic plants: the pure one-step lag and the autonomous rotator.
//!
//! The lag plant realizes `x_{t+1} = y_t` exactly, so closing the loop around
//! it makes sensor and motor derivatives bitwise equal one step apart. The
//! rotator ignores commands entirely and evolves `x_{t+1} = U(theta) x_t`,
//! providing a source whose derivative statistics have a known rotational
//! structure.

use nalgebra::{DMatrix, DVector};

use crate::error::{ensure_finite, Error, Result};

use super::{clamp_sensors, Perturbation, PerturbationKind, Plant};

/// Pure lag: the sensor at step `t+1` is the command from step `t`.
///
/// Kicks are additive offsets on the next sensor reading only.
#[derive(Debug, Clone)]
pub struct LinearDelayPlant {
    dims: usize,
    last_command: DVector<f64>,
    pending_kick: DVector<f64>,
}

impl LinearDelayPlant {
    pub fn new(dims: usize) -> Result<Self> {
        if dims == 0 {
            return Err(Error::invalid("lag plant needs at least one channel"));
        }
        Ok(Self {
            dims,
            last_command: DVector::zeros(dims),
            pending_kick: DVector::zeros(dims),
        })
    }
}

impl Plant for LinearDelayPlant {
    fn sensors(&self) -> usize {
        self.dims
    }

    fn motors(&self) -> usize {
        self.dims
    }

    fn step(&mut self, y: &DVector<f64>) -> Result<DVector<f64>> {
        if y.len() != self.dims {
            return Err(Error::dim("lag plant command", self.dims, y.len()));
        }
        ensure_finite(y.as_slice(), "lag plant command")?;
        self.last_command.copy_from(y);
        let mut x = &self.last_command + &self.pending_kick;
        self.pending_kick.fill(0.0);
        clamp_sensors(&mut x);
        Ok(x)
    }

    fn apply_perturbation(&mut self, p: &PerturbationKind) -> Result<()> {
        match p {
            PerturbationKind::Kick { joint, magnitude } => {
                if *joint >= self.dims {
                    return Err(Error::dim("kick joint", self.dims, *joint));
                }
                self.pending_kick[*joint] += magnitude;
                Ok(())
            }
            other => Err(Error::invalid(format!(
                "lag plant supports only kick perturbations, got {other:?}"
            ))),
        }
    }
}

/// Autonomous planar rotator: `x_{t+1} = U(theta) x_t`, commands ignored.
///
/// Starts at rest; a kick displaces the state, after which it circles
/// indefinitely. Sensors are the clamped state, so keep kick magnitudes
/// below 1 to observe the exact rotation.
#[derive(Debug, Clone)]
pub struct RotationPlant {
    theta: f64,
    rotation: DMatrix<f64>,
    state: DVector<f64>,
}

impl RotationPlant {
    pub fn new(theta: f64) -> Result<Self> {
        if !theta.is_finite() {
            return Err(Error::invalid("rotation angle must be finite"));
        }
        let (s, c) = theta.sin_cos();
        let rotation = DMatrix::from_row_slice(2, 2, &[c, -s, s, c]);
        Ok(Self {
            theta,
            rotation,
            state: DVector::zeros(2),
        })
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }
}

impl Plant for RotationPlant {
    fn sensors(&self) -> usize {
        2
    }

    fn motors(&self) -> usize {
        2
    }

    fn step(&mut self, y: &DVector<f64>) -> Result<DVector<f64>> {
        if y.len() != 2 {
            return Err(Error::dim("rotator command", 2, y.len()));
        }
        self.state = &self.rotation * &self.state;
        let mut x = self.state.clone();
        clamp_sensors(&mut x);
        Ok(x)
    }

    fn apply_perturbation(&mut self, p: &PerturbationKind) -> Result<()> {
        match p {
            PerturbationKind::Kick { joint, magnitude } => {
                if *joint >= 2 {
                    return Err(Error::dim("kick joint", 2, *joint));
                }
                self.state[*joint] += magnitude;
                Ok(())
            }
            other => Err(Error::invalid(format!(
                "rotator supports only kick perturbations, got {other:?}"
            ))),
        }
    }
}

/// Expands scheduled perturbations into per-step events.
pub fn schedule_steps(perturbations: &[Perturbation], dt: f64) -> Vec<(usize, PerturbationKind)> {
    perturbations
        .iter()
        .map(|p| ((p.time / dt).round() as usize, p.kind.clone()))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(data: &[f64]) -> DVector<f64> {
        DVector::from_row_slice(data)
    }

    #[test]
    fn lag_returns_previous_command_exactly() {
        let mut plant = LinearDelayPlant::new(3).unwrap();
        let y = v(&[0.25, -0.5, 0.75]);
        let x = plant.step(&y).unwrap();
        assert_eq!(x, y);
        let y2 = v(&[0.1, 0.2, 0.3]);
        let x2 = plant.step(&y2).unwrap();
        assert_eq!(x2, y2);
    }

    #[test]
    fn lag_kick_lands_on_next_reading_only() {
        let mut plant = LinearDelayPlant::new(2).unwrap();
        plant
            .apply_perturbation(&PerturbationKind::Kick {
                joint: 1,
                magnitude: 0.5,
            })
            .unwrap();
        let x = plant.step(&v(&[0.0, 0.25])).unwrap();
        assert_eq!(x, v(&[0.0, 0.75]));
        let x2 = plant.step(&v(&[0.0, 0.25])).unwrap();
        assert_eq!(x2, v(&[0.0, 0.25]));
    }

    #[test]
    fn lag_clamps_sensor_range() {
        let mut plant = LinearDelayPlant::new(1).unwrap();
        plant
            .apply_perturbation(&PerturbationKind::Kick {
                joint: 0,
                magnitude: 5.0,
            })
            .unwrap();
        let x = plant.step(&v(&[0.9])).unwrap();
        assert_eq!(x[0], 1.0);
    }

    #[test]
    fn lag_rejects_torque() {
        let mut plant = LinearDelayPlant::new(1).unwrap();
        let err = plant.apply_perturbation(&PerturbationKind::Torque {
            wheel: 0,
            magnitude: 1.0,
            duration: 1.0,
        });
        assert!(err.is_err());
    }

    #[test]
    fn rotator_quarter_turn_moves_unit_x_to_unit_y() {
        let mut plant = RotationPlant::new(std::f64::consts::FRAC_PI_2).unwrap();
        plant
            .apply_perturbation(&PerturbationKind::Kick {
                joint: 0,
                magnitude: 1.0,
            })
            .unwrap();
        let x = plant.step(&v(&[0.0, 0.0])).unwrap();
        assert!((x[0] - 0.0).abs() < 1e-15);
        assert!((x[1] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn rotator_preserves_radius() {
        let mut plant = RotationPlant::new(0.25).unwrap();
        plant
            .apply_perturbation(&PerturbationKind::Kick {
                joint: 0,
                magnitude: 0.6,
            })
            .unwrap();
        let y = v(&[0.3, -0.9]);
        let mut x = DVector::zeros(2);
        for _ in 0..500 {
            x = plant.step(&y).unwrap();
        }
        let radius = x.norm();
        assert!((radius - 0.6).abs() < 1e-12, "radius drifted to {radius}");
    }

    #[test]
    fn rotator_ignores_commands() {
        let mut a = RotationPlant::new(0.25).unwrap();
        let mut b = RotationPlant::new(0.25).unwrap();
        let kick = PerturbationKind::Kick {
            joint: 1,
            magnitude: 0.4,
        };
        a.apply_perturbation(&kick).unwrap();
        b.apply_perturbation(&kick).unwrap();
        for i in 0..100 {
            let xa = a.step(&v(&[0.0, 0.0])).unwrap();
            let xb = b.step(&v(&[(i as f64).sin(), -0.8])).unwrap();
            assert_eq!(xa, xb);
        }
    }

    #[test]
    fn schedule_rounds_times_to_steps() {
        let perts = vec![
            Perturbation {
                time: 45.0,
                kind: PerturbationKind::Kick {
                    joint: 0,
                    magnitude: 1.0,
                },
            },
            Perturbation {
                time: 0.0,
                kind: PerturbationKind::Kick {
                    joint: 1,
                    magnitude: -1.0,
                },
            },
        ];
        let steps = schedule_steps(&perts, 0.02);
        assert_eq!(steps[0].0, 2250);
        assert_eq!(steps[1].0, 0);
    }
}
