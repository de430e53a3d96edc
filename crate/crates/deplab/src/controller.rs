//! One-layer rate-coded controller: `y = tanh(C·x + h)`.
//!
//! The controller owns the synaptic matrix `C` (m motors × n sensors) and the
//! threshold vector `h`. It is a pure function of its state: stepping never
//! mutates weights. Plasticity lives in [`crate::plasticity`] and is driven by
//! the harness loop, which skips all weight updates while `frozen` is set.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, Error, Result};

/// Controller state: weights, thresholds, and the recall (frozen) flag.
///
/// Invariants: `c` is m×n, `h` has length m, all entries finite. While
/// `frozen` is true the harness leaves `c` and `h` bit-identical across steps.
#[derive(Debug, Clone, PartialEq)]
pub struct ControllerState {
    c: DMatrix<f64>,
    h: DVector<f64>,
    frozen: bool,
}

impl ControllerState {
    /// Least-biased start: C = 0, h = 0, the maximally symmetric state.
    /// From here the loop is exactly stationary until an external kick.
    pub fn least_biased(sensors: usize, motors: usize) -> Result<Self> {
        if sensors == 0 || motors == 0 {
            return Err(Error::invalid(format!(
                "controller needs nonzero dimensions, got {motors} motors x {sensors} sensors"
            )));
        }
        Ok(ControllerState {
            c: DMatrix::zeros(motors, sensors),
            h: DVector::zeros(motors),
            frozen: false,
        })
    }

    /// Installs explicit weights, replacing the current state.
    pub fn load_weights(c: DMatrix<f64>, h: DVector<f64>, frozen: bool) -> Result<Self> {
        if c.nrows() != h.len() {
            return Err(Error::dim("load_weights h length", c.nrows(), h.len()));
        }
        if c.is_empty() {
            return Err(Error::invalid("load_weights: empty weight matrix"));
        }
        ensure_finite(c.as_slice(), "load_weights C")?;
        ensure_finite(h.as_slice(), "load_weights h")?;
        Ok(ControllerState { c, h, frozen })
    }

    /// `y_i = tanh(Σ_j C_ij x_j + h_i)`. Read-only; bit-deterministic.
    pub fn step(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        if x.len() != self.c.ncols() {
            return Err(Error::dim("controller input", self.c.ncols(), x.len()));
        }
        let mut z = &self.c * x + &self.h;
        z.apply(|v| *v = v.tanh());
        Ok(z)
    }

    pub fn sensors(&self) -> usize {
        self.c.ncols()
    }

    pub fn motors(&self) -> usize {
        self.c.nrows()
    }

    pub fn weights(&self) -> &DMatrix<f64> {
        &self.c
    }

    pub fn thresholds(&self) -> &DVector<f64> {
        &self.h
    }

    pub fn frozen(&self) -> bool {
        self.frozen
    }

    pub fn set_frozen(&mut self, frozen: bool) {
        self.frozen = frozen;
    }

    /// Mutable access for the plasticity step. Callers must uphold the
    /// finiteness invariant; the harness re-checks state each step.
    pub(crate) fn weights_mut(&mut self) -> &mut DMatrix<f64> {
        &mut self.c
    }

    pub(crate) fn thresholds_mut(&mut self) -> &mut DVector<f64> {
        &mut self.h
    }

    pub fn snapshot(&self) -> WeightSnapshot {
        WeightSnapshot::from_state(self)
    }
}

/// Flat serialized form of a weight set: row-major `C` plus `h`.
///
/// The on-disk layout is `{"m":…, "n":…, "C":[…], "h":[…]}` so snapshots can
/// be diffed and replayed across hosts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightSnapshot {
    pub m: usize,
    pub n: usize,
    #[serde(rename = "C")]
    pub c: Vec<f64>,
    pub h: Vec<f64>,
}

impl WeightSnapshot {
    pub fn from_state(state: &ControllerState) -> Self {
        let m = state.motors();
        let n = state.sensors();
        let mut c = Vec::with_capacity(m * n);
        for i in 0..m {
            for j in 0..n {
                c.push(state.c[(i, j)]);
            }
        }
        WeightSnapshot {
            m,
            n,
            c,
            h: state.h.as_slice().to_vec(),
        }
    }

    /// Rebuilds a controller from the snapshot.
    pub fn into_state(&self, frozen: bool) -> Result<ControllerState> {
        if self.c.len() != self.m * self.n {
            return Err(Error::dim("snapshot C length", self.m * self.n, self.c.len()));
        }
        if self.h.len() != self.m {
            return Err(Error::dim("snapshot h length", self.m, self.h.len()));
        }
        let c = DMatrix::from_row_slice(self.m, self.n, &self.c);
        let h = DVector::from_column_slice(&self.h);
        ControllerState::load_weights(c, h, frozen)
    }
}
