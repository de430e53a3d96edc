//! Linear inverse models `ỹ̇ = M·ẋ′` and delayed sensor channels.
//!
//! The model maps sensor derivatives back to the motor derivatives that
//! plausibly caused them. It is static for the duration of a run and comes in
//! three flavors: identity (one-to-one sensor/motor pairing), offline-learned
//! from babbling data, and hand-structured "guided" matrices of ±1 entries
//! that bias which correlations the loop can discover.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, Error, Result};
use crate::hexapod;

/// A fixed m×n inverse model. Applied to derivative vectors only.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelMatrix {
    m: DMatrix<f64>,
}

impl ModelMatrix {
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        if m.is_empty() {
            return Err(Error::invalid("model matrix must be nonempty"));
        }
        ensure_finite(m.as_slice(), "model matrix")?;
        Ok(ModelMatrix { m })
    }

    /// Identity pairing of sensors to motors. Sensor channels beyond the
    /// motor count (delayed copies) get zero columns.
    pub fn identity(motors: usize, sensors: usize) -> Result<Self> {
        if motors == 0 || sensors < motors {
            return Err(Error::invalid(format!(
                "identity model needs sensors >= motors >= 1, got {motors}x{sensors}"
            )));
        }
        let mut m = DMatrix::zeros(motors, sensors);
        for i in 0..motors {
            m[(i, i)] = 1.0;
        }
        Ok(ModelMatrix { m })
    }

    /// Named presets: `"identity"`, `"hexapod-m1"`, `"hexapod-m2"`.
    pub fn preset(name: &str, motors: usize, sensors: usize) -> Result<Self> {
        match name {
            "identity" => ModelMatrix::identity(motors, sensors),
            "hexapod-m1" => {
                require_hexapod_dims(name, motors, sensors)?;
                build_guided_model(&hexapod_m1_entries(), motors, sensors)
            }
            "hexapod-m2" => {
                require_hexapod_dims(name, motors, sensors)?;
                build_guided_model(&hexapod_m2_entries(), motors, sensors)
            }
            other => Err(Error::invalid(format!("unknown model preset '{other}'"))),
        }
    }

    /// `ỹ̇ = M·ẋ′`.
    pub fn apply(&self, x_prime_dot: &DVector<f64>) -> Result<DVector<f64>> {
        if x_prime_dot.len() != self.m.ncols() {
            return Err(Error::dim("apply_model", self.m.ncols(), x_prime_dot.len()));
        }
        Ok(&self.m * x_prime_dot)
    }

    pub fn motors(&self) -> usize {
        self.m.nrows()
    }

    pub fn sensors(&self) -> usize {
        self.m.ncols()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.m
    }
}

fn require_hexapod_dims(name: &str, motors: usize, sensors: usize) -> Result<()> {
    if motors != hexapod::JOINTS || sensors != hexapod::SENSORS_WITH_DELAY {
        return Err(Error::invalid(format!(
            "preset '{name}' is {}x{}, requested {motors}x{sensors}",
            hexapod::JOINTS,
            hexapod::SENSORS_WITH_DELAY
        )));
    }
    Ok(())
}

/// One nonzero entry of a guided model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GuidedEntry {
    pub row: usize,
    pub col: usize,
    pub sign: i8,
}

/// Builds an m×n matrix of 0/±1 entries from (motor-row, sensor-col, sign)
/// triples. Duplicate coordinates are rejected; a pair of opposite signs at
/// one coordinate is contradictory, and a repeated sign is almost certainly a
/// config slip.
pub fn build_guided_model(entries: &[GuidedEntry], motors: usize, sensors: usize) -> Result<ModelMatrix> {
    if motors == 0 || sensors == 0 {
        return Err(Error::invalid("guided model needs nonzero dimensions"));
    }
    let mut m = DMatrix::zeros(motors, sensors);
    let mut seen = std::collections::BTreeSet::new();
    for e in entries {
        if e.row >= motors {
            return Err(Error::dim("guided entry row", motors, e.row));
        }
        if e.col >= sensors {
            return Err(Error::dim("guided entry col", sensors, e.col));
        }
        if e.sign != 1 && e.sign != -1 {
            return Err(Error::invalid(format!(
                "guided entry sign must be +1 or -1, got {} at ({}, {})",
                e.sign, e.row, e.col
            )));
        }
        if !seen.insert((e.row, e.col)) {
            return Err(Error::invalid(format!(
                "duplicate guided entry at ({}, {})",
                e.row, e.col
            )));
        }
        m[(e.row, e.col)] = e.sign as f64;
    }
    ModelMatrix::new(m)
}

fn entry(row: usize, col: usize, sign: i8) -> GuidedEntry {
    GuidedEntry { row, col, sign }
}

/// Walker model 1: per-leg circular stepping plus an anti-phase chain along
/// each side.
///
/// * every motor keeps its one-to-one sensor link (+1 diagonal);
/// * the delayed fore/aft sensor of each leg drives that leg's lift motor
///   (+1), turning a swing into a circular step;
/// * the delayed fore/aft sensor of each leg drives the fore/aft motor of
///   the next leg on the same side with −1, pushing subsequent legs toward
///   anti-phase. Exactly these 4 entries are negative, and no entry couples
///   a left leg with a right leg.
pub fn hexapod_m1_entries() -> Vec<GuidedEntry> {
    let mut entries = Vec::new();
    for j in 0..hexapod::JOINTS {
        entries.push(entry(j, j, 1));
    }
    for leg in 0..hexapod::LEGS {
        entries.push(entry(hexapod::ud(leg), hexapod::delayed_ap_col(leg), 1));
    }
    for (front, back) in hexapod::subsequent_pairs() {
        entries.push(entry(hexapod::ap(back), hexapod::delayed_ap_col(front), -1));
    }
    entries
}

/// Walker model 2: same circular stepping, but subsequent legs on a side are
/// tied in-phase through the delay (+1) while mirror legs across the body are
/// tied anti-phase (−1 both ways).
pub fn hexapod_m2_entries() -> Vec<GuidedEntry> {
    let mut entries = Vec::new();
    for j in 0..hexapod::JOINTS {
        entries.push(entry(j, j, 1));
    }
    for leg in 0..hexapod::LEGS {
        entries.push(entry(hexapod::ud(leg), hexapod::delayed_ap_col(leg), 1));
    }
    for (front, back) in hexapod::subsequent_pairs() {
        entries.push(entry(hexapod::ap(back), hexapod::delayed_ap_col(front), 1));
    }
    for (left, right) in hexapod::opposite_pairs() {
        entries.push(entry(hexapod::ap(right), hexapod::delayed_ap_col(left), -1));
        entries.push(entry(hexapod::ap(left), hexapod::delayed_ap_col(right), -1));
    }
    entries
}

/// `δẏ = ỹ̇ − ẏ`: the part of the reconstructed motor derivative that the
/// efference copy cannot account for, i.e. the environment's contribution.
pub fn extrinsic_signal(y_tilde_dot: &DVector<f64>, y_dot: &DVector<f64>) -> Result<DVector<f64>> {
    if y_tilde_dot.len() != y_dot.len() {
        return Err(Error::dim("extrinsic_signal", y_tilde_dot.len(), y_dot.len()));
    }
    Ok(y_tilde_dot - y_dot)
}

/// Result of offline model fitting.
#[derive(Debug, Clone)]
pub struct ModelFit {
    pub model: ModelMatrix,
    /// Per-sample RMS of the residual `‖Mẋ′ − ẏ‖` over the training set.
    pub residual: f64,
    /// True when the sample set was rank-deficient and the ridge fallback
    /// (λ = 1e−6) produced the fit.
    pub ridge_used: bool,
}

/// Least-squares fit of M from (ẋ′, ẏ) sample pairs.
///
/// Solves `min_M Σ ‖Mẋ′ − ẏ‖²` through an SVD of the sample matrix. A
/// rank-deficient sample set falls back to ridge regression with λ = 1e−6
/// and sets the warning flag instead of failing.
pub fn learn_model_offline(samples: &[(DVector<f64>, DVector<f64>)]) -> Result<ModelFit> {
    let Some((x0, y0)) = samples.first() else {
        return Err(Error::invalid("learn_model_offline: empty sample set"));
    };
    let n = x0.len();
    let m = y0.len();
    if n == 0 || m == 0 {
        return Err(Error::invalid("learn_model_offline: zero-dimensional samples"));
    }
    let k = samples.len();
    let mut xt = DMatrix::zeros(k, n);
    let mut yt = DMatrix::zeros(k, m);
    for (row, (x, y)) in samples.iter().enumerate() {
        if x.len() != n {
            return Err(Error::dim("learn_model_offline sensor sample", n, x.len()));
        }
        if y.len() != m {
            return Err(Error::dim("learn_model_offline motor sample", m, y.len()));
        }
        xt.row_mut(row).copy_from(&x.transpose());
        yt.row_mut(row).copy_from(&y.transpose());
    }

    let svd = xt.clone().svd(true, true);
    let sigma_max = svd.singular_values.max();
    let tol = sigma_max * (k.max(n) as f64) * f64::EPSILON;
    let rank = svd.singular_values.iter().filter(|s| **s > tol).count();

    let (m_t, ridge_used) = if rank == n && k >= n {
        let solved = svd
            .solve(&yt, tol)
            .map_err(|e| Error::invalid(format!("svd solve failed: {e}")))?;
        (solved, false)
    } else {
        // X^T X + λI is symmetric positive definite for λ > 0.
        let lambda = 1e-6;
        let gram = xt.transpose() * &xt + DMatrix::identity(n, n) * lambda;
        let rhs = xt.transpose() * &yt;
        let chol = gram
            .cholesky()
            .ok_or_else(|| Error::invalid("ridge system not positive definite"))?;
        (chol.solve(&rhs), true)
    };

    let residual_mat = &xt * &m_t - &yt;
    let residual = residual_mat.norm() / (k as f64).sqrt();
    Ok(ModelFit {
        model: ModelMatrix::new(m_t.transpose())?,
        residual,
        ridge_used,
    })
}

/// Delayed sensor channels: selected base channels repeated with a fixed
/// integer-step delay, appended after the base channels in the order given.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DelayedSensorConfig {
    pub indices: Vec<usize>,
    /// Delay in seconds; must be a non-negative integer multiple of dt.
    pub delay: f64,
}

impl DelayedSensorConfig {
    pub fn delay_steps(&self, dt: f64) -> Result<usize> {
        if self.delay < 0.0 || !self.delay.is_finite() {
            return Err(Error::invalid(format!("delay must be >= 0, got {}", self.delay)));
        }
        let steps = (self.delay / dt).round();
        if (self.delay - steps * dt).abs() > 1e-9 {
            return Err(Error::invalid(format!(
                "delay {} is not an integer multiple of dt {}",
                self.delay, dt
            )));
        }
        Ok(steps as usize)
    }

    pub fn validate(&self, base_sensors: usize, dt: f64) -> Result<()> {
        self.delay_steps(dt)?;
        for &idx in &self.indices {
            if idx >= base_sensors {
                return Err(Error::dim("delayed sensor index", base_sensors, idx));
            }
        }
        Ok(())
    }
}

/// Ring buffer realizing [`DelayedSensorConfig`]: stores the selected raw
/// channels and serves the value from `delay` steps ago. Steps before any
/// history exists read as zero, matching plants that start at rest.
#[derive(Debug, Clone)]
pub struct DelayLine {
    indices: Vec<usize>,
    delay_steps: usize,
    history: std::collections::VecDeque<Vec<f64>>,
}

impl DelayLine {
    pub fn new(config: &DelayedSensorConfig, base_sensors: usize, dt: f64) -> Result<Self> {
        config.validate(base_sensors, dt)?;
        Ok(DelayLine {
            indices: config.indices.clone(),
            delay_steps: config.delay_steps(dt)?,
            history: std::collections::VecDeque::with_capacity(config.delay_steps(dt)? + 1),
        })
    }

    pub fn extra_channels(&self) -> usize {
        self.indices.len()
    }

    /// Pushes the current base sensors and returns `[base, delayed]`.
    pub fn compose(&mut self, base: &DVector<f64>) -> DVector<f64> {
        let selected: Vec<f64> = self.indices.iter().map(|&i| base[i]).collect();
        self.history.push_back(selected);
        if self.history.len() > self.delay_steps + 1 {
            self.history.pop_front();
        }
        let mut full = DVector::zeros(base.len() + self.indices.len());
        full.rows_mut(0, base.len()).copy_from(base);
        if self.history.len() > self.delay_steps {
            let back = self.history.len() - 1 - self.delay_steps;
            for (k, v) in self.history[back].iter().enumerate() {
                full[base.len() + k] = *v;
            }
        }
        full
    }
}
