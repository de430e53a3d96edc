//! Stationarity and self-consistency diagnostics.
//!
//! `hebb_residual` measures how far a weight matrix and sensor vector sit
//! from the stationary family x = α·C·x with ‖x‖² = 1/α. `rotation_consistency`
//! checks the signature of steady rotational motion: over full periods the
//! derivative second moment ⟨ẋẋᵀ⟩ approaches a scaled identity, and in the
//! planar case C approaches a scaled rotation composed with the model.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::model::ModelMatrix;

/// Stationarity defect ‖x − α·C·x‖ + |‖x‖² − 1/α|.
pub fn hebb_residual(c: &DMatrix<f64>, x: &DVector<f64>, alpha: f64) -> Result<f64> {
    if !(alpha > 0.0) || !alpha.is_finite() {
        return Err(Error::invalid(format!("alpha must be positive, got {alpha}")));
    }
    if c.nrows() != c.ncols() {
        return Err(Error::dim("hebb_residual matrix", c.nrows(), c.ncols()));
    }
    if c.nrows() != x.len() {
        return Err(Error::dim("hebb_residual vector", c.nrows(), x.len()));
    }
    let fixed_point = (x - alpha * (c * x)).norm();
    let shell = (x.norm_squared() - 1.0 / alpha).abs();
    Ok(fixed_point + shell)
}

/// Outcome of the rotation self-consistency check.
#[derive(Debug, Clone)]
pub struct RotationConsistency {
    /// Whether the autocorrelation found a credible period inside the window.
    pub periodic: bool,
    pub period_seconds: Option<f64>,
    /// ‖A − (tr A / n)·I‖_F / ‖A‖_F with A = ⟨ẋẋᵀ⟩ over whole periods.
    pub identity_defect: Option<f64>,
    /// Distance of C from the nearest a·M + b·(M·J) plane (planar loops only).
    pub fit_defect: Option<f64>,
}

fn derivative_series(xs: &[DVector<f64>], dt: f64) -> Vec<DVector<f64>> {
    xs.windows(2).map(|w| (&w[1] - &w[0]) / dt).collect()
}

/// Multichannel autocorrelation period search over lags in
/// `[window.0, window.1]` seconds. Returns (lag steps, confidence).
fn detect_period(dxs: &[DVector<f64>], dt: f64, window: (f64, f64)) -> Option<(usize, f64)> {
    let lo = ((window.0 / dt).round() as usize).max(1);
    let hi = ((window.1 / dt).round() as usize).min(dxs.len().saturating_sub(2));
    if lo > hi {
        return None;
    }
    let energy: f64 = dxs.iter().map(|d| d.norm_squared()).sum();
    if energy == 0.0 {
        return None;
    }
    let mut best = (lo, f64::MIN);
    for lag in lo..=hi {
        let mut score = 0.0;
        for t in 0..dxs.len() - lag {
            score += dxs[t].dot(&dxs[t + lag]);
        }
        // Normalized by the overlapping energy so long lags are comparable.
        let norm = energy * (dxs.len() - lag) as f64 / dxs.len() as f64;
        let score = score / norm;
        if score > best.1 {
            best = (lag, score);
        }
    }
    Some(best)
}

fn identity_defect(dxs: &[DVector<f64>]) -> Option<f64> {
    let n = dxs.first()?.len();
    let mut a = DMatrix::zeros(n, n);
    for d in dxs {
        a += d * d.transpose();
    }
    let norm = a.norm();
    if norm == 0.0 {
        return None;
    }
    let trace_scale = a.trace() / n as f64;
    let defect = (&a - DMatrix::identity(n, n) * trace_scale).norm() / norm;
    Some(defect)
}

/// Least-squares distance of C from span{M, M·J} relative to ‖C‖, where
/// J is the quarter-turn generator. Planar (2x2) only.
fn planar_rotation_fit(c: &DMatrix<f64>, model: &ModelMatrix) -> Option<f64> {
    if c.nrows() != 2 || c.ncols() != 2 || model.motors() != 2 || model.sensors() != 2 {
        return None;
    }
    let j = DMatrix::from_row_slice(2, 2, &[0.0, -1.0, 1.0, 0.0]);
    let b1 = model.matrix().clone();
    let b2 = model.matrix() * j;
    let g11 = b1.dot(&b1);
    let g12 = b1.dot(&b2);
    let g22 = b2.dot(&b2);
    let r1 = b1.dot(c);
    let r2 = b2.dot(c);
    let det = g11 * g22 - g12 * g12;
    if det.abs() < 1e-30 {
        return None;
    }
    let a = (r1 * g22 - r2 * g12) / det;
    let b = (r2 * g11 - r1 * g12) / det;
    let c_norm = c.norm();
    if c_norm == 0.0 {
        return None;
    }
    Some((c - (b1 * a + b2 * b)).norm() / c_norm)
}

/// Periodicity confidence below which the window is flagged non-periodic.
pub const PERIODIC_CONFIDENCE: f64 = 0.25;

/// Checks a sensor trajectory for the rotational steady-state signature.
///
/// `period_window` bounds the period search in seconds. When no credible
/// period exists the defects are still computed over the whole series, with
/// `periodic` false and `period_seconds` empty.
pub fn rotation_consistency(
    xs: &[DVector<f64>],
    dt: f64,
    period_window: (f64, f64),
    fit: Option<(&DMatrix<f64>, &ModelMatrix)>,
) -> Result<RotationConsistency> {
    if xs.len() < 4 {
        return Err(Error::invalid("rotation_consistency needs at least 4 samples"));
    }
    if !(dt > 0.0) {
        return Err(Error::invalid("dt must be positive"));
    }
    let dxs = derivative_series(xs, dt);
    let detected = detect_period(&dxs, dt, period_window);
    let (periodic, period_seconds, span) = match detected {
        Some((lag, confidence)) if confidence >= PERIODIC_CONFIDENCE => {
            let whole = (dxs.len() / lag) * lag;
            (true, Some(lag as f64 * dt), whole)
        }
        _ => (false, None, dxs.len()),
    };
    let defect = identity_defect(&dxs[..span]);
    let fit_defect = fit.and_then(|(c, model)| planar_rotation_fit(c, model));
    Ok(RotationConsistency {
        periodic,
        period_seconds,
        identity_defect: defect,
        fit_defect,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn exact_hebb_state_has_zero_residual() {
        let x = DVector::from_row_slice(&[0.6, -0.8, 0.0]);
        // ||x||^2 = 1, so alpha = 1 and C = x x^T reproduces x exactly.
        let c = &x * x.transpose();
        let r = hebb_residual(&c, &x, 1.0).unwrap();
        assert!(r < 1e-14, "residual {r}");
    }

    #[test]
    fn scaled_hebb_state_with_matching_alpha() {
        // ||x||^2 = 1/alpha makes C = x x^T stationary: alpha*C*x = x.
        let alpha = 0.5f64;
        let dir = DVector::from_row_slice(&[1.0, 2.0, -1.0, 0.5]).normalize();
        let x = dir * (1.0 / alpha).sqrt();
        let c = &x * x.transpose();
        let r = hebb_residual(&c, &x, alpha).unwrap();
        assert!(r < 1e-12, "residual {r}");
    }

    #[test]
    fn generic_matrix_has_positive_residual() {
        let c = DMatrix::from_row_slice(2, 2, &[0.3, -1.0, 0.7, 0.2]);
        let x = DVector::from_row_slice(&[1.0, 1.0]);
        let r = hebb_residual(&c, &x, 1.0).unwrap();
        assert!(r > 0.1);
    }

    #[test]
    fn hebb_residual_rejects_bad_alpha() {
        let c = DMatrix::zeros(2, 2);
        let x = DVector::zeros(2);
        assert!(hebb_residual(&c, &x, 0.0).is_err());
        assert!(hebb_residual(&c, &x, -1.0).is_err());
        assert!(hebb_residual(&c, &x, f64::NAN).is_err());
    }

    fn circle(samples: usize, steps_per_turn: usize) -> Vec<DVector<f64>> {
        (0..samples)
            .map(|t| {
                let a = 2.0 * std::f64::consts::PI * (t % steps_per_turn) as f64
                    / steps_per_turn as f64;
                DVector::from_row_slice(&[a.cos(), a.sin()])
            })
            .collect()
    }

    #[test]
    fn exact_circle_has_tiny_identity_defect() {
        let xs = circle(512, 64);
        let r = rotation_consistency(&xs, 0.02, (0.5, 3.0), None).unwrap();
        assert!(r.periodic);
        assert!((r.period_seconds.unwrap() - 64.0 * 0.02).abs() < 1e-12);
        let defect = r.identity_defect.unwrap();
        assert!(defect < 1e-6, "defect {defect}");
    }

    #[test]
    fn anisotropic_white_noise_fails_the_check() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let xs: Vec<DVector<f64>> = (0..600)
            .map(|_| {
                DVector::from_row_slice(&[
                    rng.gen_range(-1.0..1.0),
                    0.25 * rng.gen_range(-1.0f64..1.0),
                ])
            })
            .collect();
        let r = rotation_consistency(&xs, 0.02, (0.5, 3.0), None).unwrap();
        assert!(!r.periodic, "white noise classified periodic");
        let defect = r.identity_defect.unwrap();
        assert!(defect > 0.3, "defect {defect} not order 1");
    }

    #[test]
    fn planar_fit_accepts_scaled_rotation() {
        let theta = 0.25f64;
        let c = DMatrix::from_row_slice(
            2,
            2,
            &[theta.cos(), -theta.sin(), theta.sin(), theta.cos()],
        ) * 0.99;
        let model = ModelMatrix::identity(2, 2).unwrap();
        let xs = circle(256, 64);
        let r = rotation_consistency(&xs, 0.02, (0.5, 3.0), Some((&c, &model))).unwrap();
        let fit = r.fit_defect.unwrap();
        assert!(fit < 1e-12, "fit defect {fit}");
    }

    #[test]
    fn planar_fit_rejects_generic_matrix() {
        let c = DMatrix::from_row_slice(2, 2, &[1.0, 0.4, 0.4, -0.3]);
        let model = ModelMatrix::identity(2, 2).unwrap();
        let xs = circle(256, 64);
        let r = rotation_consistency(&xs, 0.02, (0.5, 3.0), Some((&c, &model))).unwrap();
        let fit = r.fit_defect.unwrap();
        assert!(fit > 0.2, "fit defect {fit}");
    }

    #[test]
    fn zero_signal_yields_undefined_defect() {
        let xs = vec![DVector::zeros(2); 100];
        let r = rotation_consistency(&xs, 0.02, (0.5, 3.0), None).unwrap();
        assert!(!r.periodic);
        assert!(r.identity_defect.is_none());
    }
}
