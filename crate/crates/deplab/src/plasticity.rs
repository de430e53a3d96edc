//! Synaptic update family and its supporting machinery.
//!
//! All three rules share one Euler core over the weight matrix,
//!
//! ```text
//! τ Ċ_ij = s_i · v_j − C_ij
//! ```
//!
//! and differ only in what the learning signal `s` and input trace `v` are:
//!
//! * Hebb — `s = y`, `v = x` (raw activities),
//! * DHL  — `s = ẏ`, `v = ẋ` (own motor derivative),
//! * DEP  — `s = ỹ̇`, `v = ẋ` (motor derivative reconstructed from sensor
//!   derivatives through the inverse model, so environment-caused sensor
//!   change feeds back into learning).
//!
//! The discrete step is computed in the fused form
//! `C ← (1 − dt/τ)·C + (dt/τ)·s·vᵀ`, which makes the zero-signal case an
//! exact per-step scaling by `(1 − dt/τ)`.
//!
//! After every update the matrix is renormalized to the gain `κ`, either as a
//! whole (global) or row by row (individual). `κ` is the bifurcation
//! parameter of the loop: small values pull the system into rest, values
//! above the activity threshold sustain motion.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Rule {
    Hebb,
    Dhl,
    Dep,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Normalization {
    Global,
    Individual,
}

/// Parameters of the update family. `tau_h = None` disables threshold
/// dynamics and pins `h` at its current value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlasticityParams {
    pub rule: Rule,
    pub tau: f64,
    #[serde(default)]
    pub tau_h: Option<f64>,
    pub kappa: f64,
    #[serde(default = "default_rho")]
    pub rho: f64,
    pub normalization: Normalization,
    #[serde(default = "default_dt")]
    pub dt: f64,
}

fn default_rho() -> f64 {
    1e-12
}

fn default_dt() -> f64 {
    0.02
}

impl PlasticityParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::invalid(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.tau >= self.dt && self.tau.is_finite()) {
            return Err(Error::invalid(format!(
                "tau must be >= dt ({}), got {}",
                self.dt, self.tau
            )));
        }
        if let Some(tau_h) = self.tau_h {
            if !(tau_h >= self.dt && tau_h.is_finite()) {
                return Err(Error::invalid(format!(
                    "tau_h must be >= dt ({}), got {tau_h}",
                    self.dt
                )));
            }
        }
        if !(self.kappa > 0.0 && self.kappa.is_finite()) {
            return Err(Error::invalid(format!("kappa must be positive, got {}", self.kappa)));
        }
        if !(self.rho > 0.0 && self.rho.is_finite()) {
            return Err(Error::invalid(format!("rho must be positive, got {}", self.rho)));
        }
        Ok(())
    }
}

fn euler_outer_step(
    c: &mut DMatrix<f64>,
    signal: &DVector<f64>,
    input: &DVector<f64>,
    params: &PlasticityParams,
    context: &'static str,
) -> Result<()> {
    if signal.len() != c.nrows() {
        return Err(Error::dim(context, c.nrows(), signal.len()));
    }
    if input.len() != c.ncols() {
        return Err(Error::dim(context, c.ncols(), input.len()));
    }
    let k = params.dt / params.tau;
    let keep = 1.0 - k;
    for j in 0..c.ncols() {
        let v = input[j];
        for i in 0..c.nrows() {
            c[(i, j)] = keep * c[(i, j)] + k * (signal[i] * v);
        }
    }
    Ok(())
}

/// DEP step: `C ← (1−dt/τ)·C + (dt/τ)·ỹ̇·ẋᵀ` (pre-normalization).
pub fn dep_update(
    c: &mut DMatrix<f64>,
    y_tilde_dot: &DVector<f64>,
    x_dot: &DVector<f64>,
    params: &PlasticityParams,
) -> Result<()> {
    euler_outer_step(c, y_tilde_dot, x_dot, params, "dep_update")
}

/// DHL step: same core with the controller's own motor derivative. Without a
/// reconstruction path the rule cannot leave `C = 0` on its own.
pub fn dhl_update(
    c: &mut DMatrix<f64>,
    y_dot: &DVector<f64>,
    x_dot: &DVector<f64>,
    params: &PlasticityParams,
) -> Result<()> {
    euler_outer_step(c, y_dot, x_dot, params, "dhl_update")
}

/// Plain Hebb step on raw activities. Its closed-loop fixed point is the
/// Hebb state `C ∝ xxᵀ` with the loop gain balancing `‖x‖²`.
pub fn hebb_update(
    c: &mut DMatrix<f64>,
    y: &DVector<f64>,
    x: &DVector<f64>,
    params: &PlasticityParams,
) -> Result<()> {
    euler_outer_step(c, y, x, params, "hebb_update")
}

/// Threshold dynamics `h_i ← h_i − (dt/τ_h)·y_i`; a slow drift that works
/// against persistent one-sided output. Disabled `tau_h` leaves `h` pinned.
pub fn threshold_update(
    h: &mut DVector<f64>,
    y: &DVector<f64>,
    params: &PlasticityParams,
) -> Result<()> {
    let Some(tau_h) = params.tau_h else {
        return Ok(());
    };
    if y.len() != h.len() {
        return Err(Error::dim("threshold_update", h.len(), y.len()));
    }
    let k = params.dt / tau_h;
    for i in 0..h.len() {
        h[i] -= k * y[i];
    }
    Ok(())
}

/// Whole-matrix normalization `C ← κ·C / (‖C‖_F + ρ)`.
/// The result norm is strictly below κ for every finite input; ρ only
/// becomes noticeable near C = 0, where it keeps the map well defined.
pub fn normalize_global(c: &mut DMatrix<f64>, kappa: f64, rho: f64) {
    let norm = c.norm();
    let f = kappa / (norm + rho);
    *c *= f;
}

/// Row-wise normalization: every motor row is scaled to norm ≈ κ on its own.
/// Zero rows stay zero.
pub fn normalize_individual(c: &mut DMatrix<f64>, kappa: f64, rho: f64) {
    for i in 0..c.nrows() {
        let norm = c.row(i).norm();
        let f = kappa / (norm + rho);
        for j in 0..c.ncols() {
            c[(i, j)] *= f;
        }
    }
}

pub fn normalize(c: &mut DMatrix<f64>, params: &PlasticityParams) {
    match params.normalization {
        Normalization::Global => normalize_global(c, params.kappa, params.rho),
        Normalization::Individual => normalize_individual(c, params.kappa, params.rho),
    }
}

/// Backward-difference derivative estimator.
///
/// The first call after construction has no history and returns an exact
/// zero vector, so an undisturbed least-biased loop stays exactly at rest.
#[derive(Debug, Clone, Default)]
pub struct DerivativeBuffer {
    previous: Option<DVector<f64>>,
}

impl DerivativeBuffer {
    pub fn new() -> Self {
        Self::default()
    }

    /// `(sample − previous)/dt`; advances the buffer.
    pub fn estimate(&mut self, sample: &DVector<f64>, dt: f64) -> Result<DVector<f64>> {
        let derivative = match &self.previous {
            None => DVector::zeros(sample.len()),
            Some(prev) => {
                if prev.len() != sample.len() {
                    return Err(Error::dim("estimate_derivative", prev.len(), sample.len()));
                }
                (sample - prev) / dt
            }
        };
        self.previous = Some(sample.clone());
        Ok(derivative)
    }

    pub fn reset(&mut self) {
        self.previous = None;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(rule: Rule) -> PlasticityParams {
        PlasticityParams {
            rule,
            tau: 1.0,
            tau_h: None,
            kappa: 1.0,
            rho: 1e-12,
            normalization: Normalization::Global,
            dt: 0.02,
        }
    }

    #[test]
    fn dep_scalar_euler_step() {
        let mut c = DMatrix::zeros(1, 1);
        let p = params(Rule::Dep);
        dep_update(
            &mut c,
            &DVector::from_column_slice(&[2.0]),
            &DVector::from_column_slice(&[3.0]),
            &p,
        )
        .unwrap();
        // (dt/tau) * 2 * 3 = 0.02 * 6
        assert!((c[(0, 0)] - 0.12).abs() < 1e-15);
    }

    #[test]
    fn zero_matrix_yields_exact_outer_product() {
        let mut c = DMatrix::zeros(2, 3);
        let a = DVector::from_column_slice(&[1.7, -0.3]);
        let b = DVector::from_column_slice(&[0.11, 2.2, -5.0]);
        let p = params(Rule::Dep);
        dep_update(&mut c, &a, &b, &p).unwrap();
        let k = p.dt / p.tau;
        for i in 0..2 {
            for j in 0..3 {
                assert_eq!(c[(i, j)], k * (a[i] * b[j]));
            }
        }
    }

    #[test]
    fn zero_signal_decays_exactly() {
        let mut c = DMatrix::from_row_slice(2, 2, &[1.0, -0.5, 0.25, 2.0]);
        let c0 = c.clone();
        let p = params(Rule::Dep);
        let zero_m = DVector::zeros(2);
        let steps = 40;
        for _ in 0..steps {
            dep_update(&mut c, &zero_m, &zero_m, &p).unwrap();
        }
        let q = 1.0 - p.dt / p.tau;
        let mut expect = c0;
        for _ in 0..steps {
            expect *= q;
        }
        assert_eq!(c, expect);
    }

    #[test]
    fn dep_with_zero_extrinsic_signal_equals_dhl() {
        // delta_y_dot = 0 means the reconstruction equals the efference copy.
        let y_dot = DVector::from_column_slice(&[0.4, -1.1]);
        let x_dot = DVector::from_column_slice(&[0.9, 0.3]);
        let p = params(Rule::Dep);
        let mut c_dep = DMatrix::from_row_slice(2, 2, &[0.1, 0.2, 0.3, 0.4]);
        let mut c_dhl = c_dep.clone();
        dep_update(&mut c_dep, &y_dot, &x_dot, &p).unwrap();
        dhl_update(&mut c_dhl, &y_dot, &x_dot, &p).unwrap();
        assert_eq!(c_dep, c_dhl);
    }

    #[test]
    fn dhl_on_static_signal_is_pure_decay() {
        let mut c = DMatrix::from_row_slice(1, 2, &[0.8, -0.6]);
        let mut hebb_decay = c.clone();
        let p = params(Rule::Dhl);
        let zero1 = DVector::zeros(1);
        let zero2 = DVector::zeros(2);
        dhl_update(&mut c, &zero1, &zero2, &p).unwrap();
        hebb_update(&mut hebb_decay, &zero1, &zero2, &p).unwrap();
        assert_eq!(c, hebb_decay);
        assert_eq!(c[(0, 0)], 0.8 * (1.0 - 0.02));
    }

    #[test]
    fn threshold_scalar_step() {
        let mut h = DVector::zeros(1);
        let mut p = params(Rule::Dep);
        p.tau_h = Some(0.4);
        threshold_update(&mut h, &DVector::from_column_slice(&[1.0]), &p).unwrap();
        assert!((h[0] + 0.05).abs() < 1e-15);
    }

    #[test]
    fn threshold_disabled_pins_h() {
        let mut h = DVector::from_column_slice(&[0.3, -0.2]);
        let before = h.clone();
        let p = params(Rule::Dep);
        threshold_update(&mut h, &DVector::from_column_slice(&[1.0, 1.0]), &p).unwrap();
        assert_eq!(h, before);
    }

    #[test]
    fn threshold_zero_output_leaves_h() {
        let mut h = DVector::from_column_slice(&[0.3, -0.2]);
        let before = h.clone();
        let mut p = params(Rule::Dep);
        p.tau_h = Some(0.4);
        threshold_update(&mut h, &DVector::zeros(2), &p).unwrap();
        assert_eq!(h, before);
    }

    #[test]
    fn global_normalization_arithmetic() {
        // ||C||_F = 2, kappa = 1.4 -> new norm = 2.8/(2 + 1e-12)
        let mut c = DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 0.0]);
        normalize_global(&mut c, 1.4, 1e-12);
        let expect = 2.8 / (2.0 + 1e-12);
        assert!((c.norm() - expect).abs() < 1e-14);
        assert!(c.norm() < 1.4);
    }

    #[test]
    fn global_normalization_keeps_zero() {
        let mut c = DMatrix::zeros(3, 3);
        normalize_global(&mut c, 2.2, 1e-12);
        assert!(c.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn individual_normalization_rows() {
        let mut c = DMatrix::from_row_slice(3, 2, &[3.0, 4.0, 0.0, 0.0, 0.0, -2.0]);
        normalize_individual(&mut c, 1.5, 1e-12);
        // row norms 5 and 2 -> 1.5*r/(r+rho); zero row preserved
        assert!((c.row(0).norm() - 1.5 * 5.0 / (5.0 + 1e-12)).abs() < 1e-13);
        assert_eq!(c[(1, 0)], 0.0);
        assert_eq!(c[(1, 1)], 0.0);
        assert!((c.row(2).norm() - 1.5 * 2.0 / (2.0 + 1e-12)).abs() < 1e-13);
        for i in 0..3 {
            assert!(c.row(i).norm() < 1.5);
        }
    }

    #[test]
    fn norm_caps_are_strict() {
        // Strict as long as rho still registers in fl(norm + rho), which
        // covers every norm the loop can produce (the previous step already
        // capped it near kappa).
        for scale in [1e-9, 1e-3, 1.0, 1e2] {
            let mut g = DMatrix::from_fn(4, 4, |i, j| scale * ((i + 2 * j) as f64 - 3.0));
            normalize_global(&mut g, 2.2, 1e-12);
            assert!(g.norm() < 2.2);

            let mut r = DMatrix::from_fn(4, 4, |i, j| scale * ((i + 2 * j) as f64 - 3.0));
            normalize_individual(&mut r, 2.2, 1e-12);
            for i in 0..4 {
                assert!(r.row(i).norm() < 2.2);
            }
        }
        // Past norm ~ rho/epsilon the regularizer is below the denominator's
        // ulp and the cap closes to equality; it still never overshoots.
        let mut g = DMatrix::from_fn(4, 4, |i, j| 1e12 * ((i + 2 * j) as f64 - 3.0));
        normalize_global(&mut g, 2.2, 1e-12);
        assert!(g.norm() <= 2.2 * (1.0 + 4.0 * f64::EPSILON));
    }

    #[test]
    fn derivative_first_step_is_zero() {
        let mut buf = DerivativeBuffer::new();
        let d = buf
            .estimate(&DVector::from_column_slice(&[0.7, -0.1]), 0.02)
            .unwrap();
        assert!(d.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn derivative_constant_signal_is_zero() {
        let mut buf = DerivativeBuffer::new();
        let s = DVector::from_column_slice(&[0.4]);
        buf.estimate(&s, 0.02).unwrap();
        let d = buf.estimate(&s, 0.02).unwrap();
        assert_eq!(d[0], 0.0);
    }

    #[test]
    fn derivative_scalar_arithmetic() {
        let mut buf = DerivativeBuffer::new();
        buf.estimate(&DVector::from_column_slice(&[0.1]), 0.02).unwrap();
        let d = buf.estimate(&DVector::from_column_slice(&[0.3]), 0.02).unwrap();
        assert!((d[0] - 10.0).abs() < 1e-13);
    }

    #[test]
    fn derivative_error_bound_on_sinusoids() {
        let dt = 0.02;
        for omega in [0.5, 1.0, 2.0, 3.7, 5.0] {
            let mut buf = DerivativeBuffer::new();
            let mut max_err: f64 = 0.0;
            for step in 0..2000 {
                let t = step as f64 * dt;
                let sample = DVector::from_column_slice(&[(omega * t).sin()]);
                let d = buf.estimate(&sample, dt).unwrap();
                if step > 0 {
                    let truth = omega * (omega * t).cos();
                    max_err = max_err.max((d[0] - truth).abs());
                }
            }
            // Taylor remainder of the backward difference: (dt/2)·max|f''|.
            let bound = omega * omega * dt / 2.0;
            assert!(
                max_err <= bound * (1.0 + 1e-9) + 1e-12,
                "omega={omega}: err {max_err} > bound {bound}"
            );
        }
    }

    #[test]
    fn params_validation() {
        let mut p = params(Rule::Dep);
        assert!(p.validate().is_ok());
        p.tau = 0.01;
        assert!(p.validate().is_err());
        p.tau = 1.0;
        p.kappa = 0.0;
        assert!(p.validate().is_err());
        p.kappa = 1.0;
        p.rho = 0.0;
        assert!(p.validate().is_err());
        p.rho = 1e-12;
        p.tau_h = Some(0.001);
        assert!(p.validate().is_err());
    }

    #[test]
    fn params_parse_from_json() {
        let json = r#"{
            "rule": "dep",
            "tau": 0.7,
            "kappa": 2.2,
            "normalization": "global"
        }"#;
        let p: PlasticityParams = serde_json::from_str(json).unwrap();
        assert_eq!(p.rule, Rule::Dep);
        assert_eq!(p.rho, 1e-12);
        assert_eq!(p.dt, 0.02);
        assert_eq!(p.tau_h, None);
        assert_eq!(p.normalization, Normalization::Global);
    }

    #[test]
    fn update_dimension_mismatch_rejected() {
        let mut c = DMatrix::zeros(2, 3);
        let p = params(Rule::Dep);
        assert!(dep_update(&mut c, &DVector::zeros(3), &DVector::zeros(3), &p).is_err());
        assert!(dep_update(&mut c, &DVector::zeros(2), &DVector::zeros(2), &p).is_err());
    }
}
