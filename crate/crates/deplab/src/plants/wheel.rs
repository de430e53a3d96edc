//! Inertial crank wheel driven by one or two agents through compliant arms.
//!
//! The wheel carries the only dynamical state (angle φ, angular velocity ω).
//! Each agent holds a pair of cranks in quadrature; sensor j of agent a reads
//! the exact projection A·sin(φ + ψ_a + j·π/2) measured from its rest value
//! at φ = 0, so a parked wheel reads exactly zero and the kinematic tie
//! between wheel and joints is exact by construction. Commands are deviation
//! targets through arm springs: each joint contributes tangential torque
//! k_arm·(y_j − x_j)·∂x_j/∂φ, and the wheel integrates
//! J_w·ω̇ = Σ torque − b·ω + τ_ext. At y = 0 the springs pull the cranks back
//! toward the rest posture, giving a pendulum-like potential with minima at
//! whole revolutions; sustained rotation has to win against it on every
//! upswing and is paid back on the downswing.
//!
//! With two agents the crank sets sit π apart, so the agents interact only
//! through the shared wheel state.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, Error, Result};

use super::{clamp_sensors, PerturbationKind, Plant};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CrankWheelParams {
    /// Moment of inertia J_w of the wheel.
    pub inertia: f64,
    #[serde(default = "default_friction")]
    pub friction: f64,
    #[serde(default = "default_agents")]
    pub agents: usize,
    #[serde(default = "default_arm_stiffness")]
    pub arm_stiffness: f64,
    /// Crank radius in sensor units; rest-centered readings swing over
    /// [−2A, 2A], so keep it at or below 0.5 so they never clip.
    #[serde(default = "default_amplitude")]
    pub amplitude: f64,
}

fn default_friction() -> f64 {
    0.3
}
fn default_agents() -> usize {
    1
}
fn default_arm_stiffness() -> f64 {
    30.0
}
fn default_amplitude() -> f64 {
    0.45
}

pub const JOINTS_PER_AGENT: usize = 2;

#[derive(Debug, Clone)]
pub struct CrankWheel {
    params: CrankWheelParams,
    dt: f64,
    phi: f64,
    omega: f64,
    // (magnitude, steps left) for each live external torque
    external: Vec<(f64, usize)>,
}

impl CrankWheel {
    pub fn new(params: CrankWheelParams, dt: f64) -> Result<Self> {
        if !(dt > 0.0) {
            return Err(Error::invalid("dt must be positive"));
        }
        if !(params.inertia.is_finite() && params.inertia > 0.0) {
            return Err(Error::invalid("wheel inertia must be positive"));
        }
        if !(params.friction.is_finite() && params.friction >= 0.0) {
            return Err(Error::invalid("friction must be finite and >= 0"));
        }
        if !(params.arm_stiffness.is_finite() && params.arm_stiffness >= 0.0) {
            return Err(Error::invalid("arm stiffness must be finite and >= 0"));
        }
        if !(params.amplitude.is_finite() && params.amplitude > 0.0 && params.amplitude <= 0.5) {
            return Err(Error::invalid("crank amplitude must be in (0, 0.5]"));
        }
        if params.agents == 0 || params.agents > 2 {
            return Err(Error::invalid("crank wheel supports 1 or 2 agents"));
        }
        if params.friction * dt / params.inertia >= 2.0 {
            return Err(Error::invalid(format!(
                "unstable integration: friction*dt/inertia = {} >= 2",
                params.friction * dt / params.inertia
            )));
        }
        Ok(Self {
            params,
            dt,
            phi: 0.0,
            omega: 0.0,
            external: Vec::new(),
        })
    }

    pub fn params(&self) -> &CrankWheelParams {
        &self.params
    }

    pub fn angle(&self) -> f64 {
        self.phi
    }

    pub fn angular_velocity(&self) -> f64 {
        self.omega
    }

    /// Wheel kinetic energy plus the arm-spring potential at zero command.
    pub fn mechanical_energy(&self) -> f64 {
        let mut e = 0.5 * self.params.inertia * self.omega * self.omega;
        for a in 0..self.params.agents {
            let ((du, dv), _) = self.deviation_pair(a);
            e += 0.5 * self.params.arm_stiffness * (du * du + dv * dv);
        }
        e
    }

    /// Exact crank projections and their φ-derivatives at angle `phi`:
    /// agent a uses base phase φ + a·π, joints sit in quadrature, so the
    /// pair is (A·sin, A·cos) with derivatives (A·cos, -A·sin).
    fn crank_pair(&self, agent: usize) -> ((f64, f64), (f64, f64)) {
        let base = self.phi + agent as f64 * std::f64::consts::PI;
        let (s, c) = base.sin_cos();
        let u = self.params.amplitude * s;
        let v = self.params.amplitude * c;
        ((u, v), (v, -u))
    }

    /// Crank values at the rest angle φ = 0; subtracting them centers the
    /// sensors so the parked wheel reads exactly zero.
    fn rest_pair(&self, agent: usize) -> (f64, f64) {
        let base = agent as f64 * std::f64::consts::PI;
        let (s, c) = base.sin_cos();
        (self.params.amplitude * s, self.params.amplitude * c)
    }

    /// Rest-centered projections and their φ-derivatives.
    fn deviation_pair(&self, agent: usize) -> ((f64, f64), (f64, f64)) {
        let ((u, v), d) = self.crank_pair(agent);
        let (u0, v0) = self.rest_pair(agent);
        ((u - u0, v - v0), d)
    }

    pub fn sensor_values(&self) -> DVector<f64> {
        let mut x = DVector::zeros(self.params.agents * JOINTS_PER_AGENT);
        for a in 0..self.params.agents {
            let ((du, dv), _) = self.deviation_pair(a);
            x[a * JOINTS_PER_AGENT] = du;
            x[a * JOINTS_PER_AGENT + 1] = dv;
        }
        clamp_sensors(&mut x);
        x
    }
}

impl Plant for CrankWheel {
    fn sensors(&self) -> usize {
        self.params.agents * JOINTS_PER_AGENT
    }

    fn motors(&self) -> usize {
        self.params.agents * JOINTS_PER_AGENT
    }

    fn step(&mut self, y: &DVector<f64>) -> Result<DVector<f64>> {
        let m = self.motors();
        if y.len() != m {
            return Err(Error::dim("crank wheel command", m, y.len()));
        }
        ensure_finite(y.as_slice(), "crank wheel command")?;
        let mut torque = 0.0;
        for a in 0..self.params.agents {
            let ((u, v), (gu, gv)) = self.deviation_pair(a);
            let y0 = y[a * JOINTS_PER_AGENT];
            let y1 = y[a * JOINTS_PER_AGENT + 1];
            // At the exact rest state u = v = 0 bitwise, so y = 0 leaves the
            // wheel untouched.
            let deflection_work = (y0 - u) * gu + (y1 - v) * gv;
            torque += self.params.arm_stiffness * deflection_work;
        }
        torque -= self.params.friction * self.omega;
        for (magnitude, steps_left) in self.external.iter_mut() {
            torque += *magnitude;
            *steps_left -= 1;
        }
        self.external.retain(|&(_, steps_left)| steps_left > 0);
        self.omega += self.dt * torque / self.params.inertia;
        self.phi += self.dt * self.omega;
        Ok(self.sensor_values())
    }

    fn apply_perturbation(&mut self, p: &PerturbationKind) -> Result<()> {
        match p {
            PerturbationKind::Torque {
                wheel,
                magnitude,
                duration,
            } => {
                if *wheel != 0 {
                    return Err(Error::dim("torque wheel index", 1, *wheel));
                }
                let steps = ((duration / self.dt).round() as usize).max(1);
                self.external.push((*magnitude, steps));
                Ok(())
            }
            // A kick spins the wheel directly; the joint index is ignored
            // because the cranks have no independent state.
            PerturbationKind::Kick { magnitude, .. } => {
                self.omega += magnitude;
                Ok(())
            }
            other => Err(Error::invalid(format!(
                "crank wheel supports kick and torque perturbations, got {other:?}"
            ))),
        }
    }

    fn wheel_speed(&self) -> Option<f64> {
        Some(self.omega)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn wheel(inertia: f64, agents: usize) -> CrankWheel {
        CrankWheel::new(
            CrankWheelParams {
                inertia,
                friction: 0.3,
                agents,
                arm_stiffness: 30.0,
                amplitude: 0.45,
            },
            0.02,
        )
        .unwrap()
    }

    #[test]
    fn parked_wheel_is_bitwise_stationary() {
        let mut w = wheel(2.0, 2);
        let y = DVector::zeros(4);
        for _ in 0..200 {
            let x = w.step(&y).unwrap();
            assert_eq!(w.angular_velocity(), 0.0);
            assert_eq!(w.angle(), 0.0);
            assert!(x.iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn kicked_wheel_parks_at_a_whole_revolution() {
        let mut w = wheel(1.0, 1);
        w.apply_perturbation(&PerturbationKind::Kick {
            joint: 0,
            magnitude: 2.0,
        })
        .unwrap();
        let y = DVector::zeros(2);
        let e0 = w.mechanical_energy();
        let mut max_e = e0;
        for _ in 0..8000 {
            w.step(&y).unwrap();
            max_e = max_e.max(w.mechanical_energy());
        }
        assert!(max_e <= e0 * 1.05, "energy grew: {max_e} from {e0}");
        assert!(w.angular_velocity().abs() < 1e-6);
        let revs = w.angle() / std::f64::consts::TAU;
        assert!(
            (revs - revs.round()).abs() < 1e-3,
            "parked off the rest posture: {revs} revolutions"
        );
    }

    #[test]
    fn sensors_are_rest_centered_crank_projections() {
        let mut w = wheel(1.0, 2);
        let y = DVector::from_row_slice(&[0.45, -0.2, 0.1, 0.45]);
        for _ in 0..137 {
            w.step(&y).unwrap();
        }
        let phi = w.angle();
        let x = w.sensor_values();
        let (s0, c0) = phi.sin_cos();
        assert_eq!(x[0], 0.45 * s0 - 0.45 * 0.0);
        assert_eq!(x[1], 0.45 * c0 - 0.45 * 1.0);
        let (s1, c1) = (phi + std::f64::consts::PI).sin_cos();
        let (rs, rc) = std::f64::consts::PI.sin_cos();
        assert_eq!(x[2], 0.45 * s1 - 0.45 * rs);
        assert_eq!(x[3], 0.45 * c1 - 0.45 * rc);
    }

    #[test]
    fn two_agent_sensors_are_opposed() {
        let mut w = wheel(1.0, 2);
        w.apply_perturbation(&PerturbationKind::Kick {
            joint: 0,
            magnitude: 0.7,
        })
        .unwrap();
        let y = DVector::zeros(4);
        for _ in 0..500 {
            let x = w.step(&y).unwrap();
            assert!((x[0] + x[2]).abs() < 1e-12);
            assert!((x[1] + x[3]).abs() < 1e-12);
        }
    }

    #[test]
    fn torque_pulse_spins_wheel_then_friction_wins() {
        let mut w = wheel(1.0, 1);
        w.apply_perturbation(&PerturbationKind::Torque {
            wheel: 0,
            magnitude: 4.0,
            duration: 1.0,
        })
        .unwrap();
        let y = DVector::zeros(2);
        for _ in 0..50 {
            w.step(&y).unwrap();
        }
        assert!(w.angular_velocity() > 1.0);
        for _ in 0..5000 {
            w.step(&y).unwrap();
        }
        assert!(w.angular_velocity().abs() < 1e-6);
    }

    #[test]
    fn negative_torque_spins_backwards() {
        let mut w = wheel(1.0, 1);
        w.apply_perturbation(&PerturbationKind::Torque {
            wheel: 0,
            magnitude: -4.0,
            duration: 0.5,
        })
        .unwrap();
        let y = DVector::zeros(2);
        for _ in 0..25 {
            w.step(&y).unwrap();
        }
        assert!(w.angular_velocity() < -0.5);
    }

    #[test]
    fn commands_following_the_crank_add_energy() {
        // Drive each joint toward where it will be: push in the direction of
        // motion and the arm springs feed the wheel.
        let mut w = wheel(1.0, 1);
        w.apply_perturbation(&PerturbationKind::Kick {
            joint: 0,
            magnitude: 0.5,
        })
        .unwrap();
        let mut speed_before = w.angular_velocity();
        let mut gained = false;
        for _ in 0..200 {
            let phi = w.angle();
            // Lead the crank: command the deviation a small phase ahead.
            let (s, c) = (phi + 0.3).sin_cos();
            let y = DVector::from_row_slice(&[0.45 * s, 0.45 * c - 0.45]);
            w.step(&y).unwrap();
            if w.angular_velocity() > speed_before {
                gained = true;
            }
            speed_before = w.angular_velocity();
        }
        assert!(gained, "leading commands never added energy");
        assert!(w.angular_velocity() > 0.0);
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(CrankWheel::new(
            CrankWheelParams {
                inertia: 0.0,
                friction: 0.3,
                agents: 1,
                arm_stiffness: 30.0,
                amplitude: 0.45,
            },
            0.02,
        )
        .is_err());
        assert!(CrankWheel::new(
            CrankWheelParams {
                inertia: 1.0,
                friction: 0.3,
                agents: 3,
                arm_stiffness: 30.0,
                amplitude: 0.45,
            },
            0.02,
        )
        .is_err());
        assert!(CrankWheel::new(
            CrankWheelParams {
                inertia: 1.0,
                friction: 0.3,
                agents: 1,
                arm_stiffness: 30.0,
                amplitude: 0.8,
            },
            0.02,
        )
        .is_err());
        let mut w = wheel(1.0, 1);
        assert!(w
            .apply_perturbation(&PerturbationKind::Clamp {
                joint: 0,
                duration: 1.0
            })
            .is_err());
    }

    #[test]
    fn params_parse_with_defaults() {
        let p: CrankWheelParams = serde_json::from_str(r#"{"inertia": 5.0}"#).unwrap();
        assert_eq!(p.inertia, 5.0);
        assert_eq!(p.agents, 1);
        assert_eq!(p.amplitude, 0.45);
    }
}
