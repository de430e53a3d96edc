//! Compliant joint chain: n damped torsion springs driven toward the motor
//! command, with elastic coupling between neighboring joints.
//!
//! Per joint, J·θ̈_i = k·(y_i − θ_i) − c·θ̇_i + Σ_j κ·(θ_j − θ_i), integrated
//! by semi-implicit Euler (velocity first, then position). Sensors read the
//! clamped angles; ground contact is a pure threshold on θ.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, Error, Result};

use super::{clamp_sensors, PerturbationKind, Plant};

/// Which joints are elastically coupled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum CouplingTopology {
    /// Nearest neighbors along the full chain: (0,1), (1,2), ...
    #[default]
    Chain,
    /// Nearest neighbors within consecutive groups of three; groups are
    /// mechanically independent of each other.
    Legs,
}

/// Threshold contact model: joint `j` is "down" while θ_j < threshold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContactConfig {
    pub joints: Vec<usize>,
    pub threshold: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JointChainParams {
    #[serde(default = "default_joints")]
    pub joints: usize,
    #[serde(default = "default_stiffness")]
    pub stiffness: f64,
    #[serde(default = "default_damping")]
    pub damping: f64,
    #[serde(default = "default_inertia")]
    pub inertia: f64,
    #[serde(default = "default_coupling")]
    pub coupling: f64,
    #[serde(default)]
    pub topology: CouplingTopology,
    #[serde(default)]
    pub contact: Option<ContactConfig>,
}

fn default_joints() -> usize {
    18
}
fn default_stiffness() -> f64 {
    20.0
}
fn default_damping() -> f64 {
    2.0
}
fn default_inertia() -> f64 {
    1.0
}
fn default_coupling() -> f64 {
    1.0
}

impl Default for JointChainParams {
    fn default() -> Self {
        Self {
            joints: default_joints(),
            stiffness: default_stiffness(),
            damping: default_damping(),
            inertia: default_inertia(),
            coupling: default_coupling(),
            topology: CouplingTopology::Chain,
            contact: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct JointChain {
    params: JointChainParams,
    dt: f64,
    neighbors: Vec<Vec<usize>>,
    angle: DVector<f64>,
    velocity: DVector<f64>,
    // clamp[j] = Some((held angle, steps left))
    clamps: Vec<Option<(f64, usize)>>,
}

impl JointChain {
    pub fn new(params: JointChainParams, dt: f64) -> Result<Self> {
        let n = params.joints;
        if n == 0 {
            return Err(Error::invalid("joint chain needs at least one joint"));
        }
        if !(dt > 0.0) {
            return Err(Error::invalid("dt must be positive"));
        }
        for (name, v) in [
            ("stiffness", params.stiffness),
            ("damping", params.damping),
            ("inertia", params.inertia),
            ("coupling", params.coupling),
        ] {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::invalid(format!("{name} must be finite and >= 0, got {v}")));
            }
        }
        if params.inertia == 0.0 {
            return Err(Error::invalid("inertia must be positive"));
        }
        // Semi-implicit Euler on a spring of effective stiffness k_eff is a
        // stable area-preserving map only while k_eff*dt^2/J < 4; a joint in
        // the chain interior sees k + 2*coupling.
        let k_eff = params.stiffness + 2.0 * params.coupling;
        if k_eff * dt * dt / params.inertia >= 4.0 {
            return Err(Error::invalid(format!(
                "unstable integration: (stiffness + 2*coupling)*dt^2/inertia = {} >= 4",
                k_eff * dt * dt / params.inertia
            )));
        }
        if params.damping * dt / params.inertia >= 2.0 {
            return Err(Error::invalid(format!(
                "unstable integration: damping*dt/inertia = {} >= 2",
                params.damping * dt / params.inertia
            )));
        }
        if let Some(contact) = &params.contact {
            if !contact.threshold.is_finite() {
                return Err(Error::invalid("contact threshold must be finite"));
            }
            if let Some(&bad) = contact.joints.iter().find(|&&j| j >= n) {
                return Err(Error::dim("contact joint", n, bad));
            }
        }
        if params.topology == CouplingTopology::Legs && n % 3 != 0 {
            return Err(Error::invalid(format!(
                "legs topology needs a multiple of 3 joints, got {n}"
            )));
        }
        let mut neighbors = vec![Vec::new(); n];
        for i in 0..n.saturating_sub(1) {
            let linked = match params.topology {
                CouplingTopology::Chain => true,
                CouplingTopology::Legs => i % 3 != 2,
            };
            if linked {
                neighbors[i].push(i + 1);
                neighbors[i + 1].push(i);
            }
        }
        Ok(Self {
            params,
            dt,
            neighbors,
            angle: DVector::zeros(n),
            velocity: DVector::zeros(n),
            clamps: vec![None; n],
        })
    }

    pub fn params(&self) -> &JointChainParams {
        &self.params
    }

    pub fn angles(&self) -> &DVector<f64> {
        &self.angle
    }

    pub fn velocities(&self) -> &DVector<f64> {
        &self.velocity
    }

    /// Kinetic + elastic energy at zero command; bounded and decaying while
    /// the command stays zero.
    pub fn mechanical_energy(&self) -> f64 {
        let p = &self.params;
        let mut e = 0.0;
        for i in 0..p.joints {
            e += 0.5 * p.inertia * self.velocity[i] * self.velocity[i];
            e += 0.5 * p.stiffness * self.angle[i] * self.angle[i];
            for &j in &self.neighbors[i] {
                if j > i {
                    let d = self.angle[j] - self.angle[i];
                    e += 0.5 * p.coupling * d * d;
                }
            }
        }
        e
    }
}

impl Plant for JointChain {
    fn sensors(&self) -> usize {
        self.params.joints
    }

    fn motors(&self) -> usize {
        self.params.joints
    }

    fn step(&mut self, y: &DVector<f64>) -> Result<DVector<f64>> {
        let n = self.params.joints;
        if y.len() != n {
            return Err(Error::dim("joint chain command", n, y.len()));
        }
        ensure_finite(y.as_slice(), "joint chain command")?;
        let p = &self.params;
        let mut acc = DVector::zeros(n);
        for i in 0..n {
            let mut torque = p.stiffness * (y[i] - self.angle[i]) - p.damping * self.velocity[i];
            for &j in &self.neighbors[i] {
                torque += p.coupling * (self.angle[j] - self.angle[i]);
            }
            acc[i] = torque / p.inertia;
        }
        for i in 0..n {
            match &mut self.clamps[i] {
                Some((held, steps_left)) => {
                    self.angle[i] = *held;
                    self.velocity[i] = 0.0;
                    *steps_left -= 1;
                    if *steps_left == 0 {
                        self.clamps[i] = None;
                    }
                }
                None => {
                    self.velocity[i] += self.dt * acc[i];
                    self.angle[i] += self.dt * self.velocity[i];
                }
            }
        }
        let mut x = self.angle.clone();
        clamp_sensors(&mut x);
        Ok(x)
    }

    fn apply_perturbation(&mut self, p: &PerturbationKind) -> Result<()> {
        let n = self.params.joints;
        match p {
            PerturbationKind::Kick { joint, magnitude } => {
                if *joint >= n {
                    return Err(Error::dim("kick joint", n, *joint));
                }
                self.velocity[*joint] += magnitude;
                Ok(())
            }
            PerturbationKind::Clamp { joint, duration } => {
                if *joint >= n {
                    return Err(Error::dim("clamp joint", n, *joint));
                }
                let steps = ((duration / self.dt).round() as usize).max(1);
                self.clamps[*joint] = Some((self.angle[*joint], steps));
                Ok(())
            }
            other => Err(Error::invalid(format!(
                "joint chain supports kick and clamp perturbations, got {other:?}"
            ))),
        }
    }

    fn contacts(&self) -> Option<Vec<bool>> {
        self.params.contact.as_ref().map(|cc| {
            cc.joints
                .iter()
                .map(|&j| self.angle[j] < cc.threshold)
                .collect()
        })
    }
}
