//! Pairwise phase relations between joint signals.
//!
//! The dominant common frequency is the peak of the summed Hann-windowed
//! magnitude spectra (DC excluded), refined by parabolic interpolation of
//! the peak bin. Each pair's phase difference comes from the lag of the
//! cross-correlation maximum, again parabolically refined, converted to an
//! angle at the dominant frequency. On clean sinusoids the result is
//! accurate to well under 0.05 rad.

use rustfft::{num_complex::Complex, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Pairwise phase differences at the dominant common frequency.
///
/// `phase[i][j]` is the phase of signal `j` minus the phase of signal `i`,
/// wrapped to (−π, π]; entries are absent when either signal shows no power
/// at the dominant frequency. Antisymmetric up to the 2π wrap; the diagonal
/// is zero.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PhaseMatrix {
    pub frequency_hz: f64,
    pub phase: Vec<Vec<Option<f64>>>,
}

impl PhaseMatrix {
    pub fn len(&self) -> usize {
        self.phase.len()
    }

    pub fn is_empty(&self) -> bool {
        self.phase.is_empty()
    }

    /// Largest wrap-aware distance to another matrix over entries defined in
    /// both; `None` when `other` lacks an entry defined here.
    pub fn max_deviation(&self, other: &PhaseMatrix) -> Option<f64> {
        if self.len() != other.len() {
            return None;
        }
        let mut worst = 0.0f64;
        for i in 0..self.len() {
            for j in 0..self.len() {
                match (self.phase[i][j], other.phase[i][j]) {
                    (Some(a), Some(b)) => worst = worst.max(circular_distance(a, b)),
                    (Some(_), None) => return None,
                    _ => {}
                }
            }
        }
        Some(worst)
    }
}

/// Wraps an angle to (−π, π].
pub fn wrap_angle(mut a: f64) -> f64 {
    use std::f64::consts::PI;
    a = a.rem_euclid(2.0 * PI);
    if a > PI {
        a -= 2.0 * PI;
    }
    a
}

/// Distance between two angles on the circle, in [0, π].
pub fn circular_distance(a: f64, b: f64) -> f64 {
    wrap_angle(a - b).abs()
}

fn parabolic_offset(left: f64, center: f64, right: f64) -> f64 {
    let denom = left - 2.0 * center + right;
    if denom.abs() < 1e-300 {
        0.0
    } else {
        (0.5 * (left - right) / denom).clamp(-0.5, 0.5)
    }
}

/// Summed Hann-windowed magnitude spectra; returns (bin magnitudes, len).
fn summed_spectrum(signals: &[Vec<f64>]) -> Vec<f64> {
    let len = signals[0].len();
    let mut planner = FftPlanner::new();
    let fft = planner.plan_fft_forward(len);
    let mut total = vec![0.0f64; len / 2 + 1];
    for signal in signals {
        let mean = signal.iter().sum::<f64>() / len as f64;
        let mut buf: Vec<Complex<f64>> = signal
            .iter()
            .enumerate()
            .map(|(i, &v)| {
                let w = 0.5
                    - 0.5
                        * (2.0 * std::f64::consts::PI * i as f64 / (len - 1) as f64).cos();
                Complex::new((v - mean) * w, 0.0)
            })
            .collect();
        fft.process(&mut buf);
        for (k, slot) in total.iter_mut().enumerate() {
            *slot += buf[k].norm();
        }
    }
    total
}

/// Power of one signal near bin `k`, as a fraction of its total power.
fn band_fraction(signal: &[f64], k: usize) -> f64 {
    let len = signal.len();
    let mut planner = FftPlanner::new();
    let fft = planner.plan_fft_forward(len);
    let mean = signal.iter().sum::<f64>() / len as f64;
    let mut buf: Vec<Complex<f64>> = signal
        .iter()
        .map(|&v| Complex::new(v - mean, 0.0))
        .collect();
    fft.process(&mut buf);
    let total: f64 = buf[1..len / 2 + 1].iter().map(|z| z.norm_sqr()).sum();
    if total == 0.0 {
        return 0.0;
    }
    let lo = k.saturating_sub(2).max(1);
    let hi = (k + 2).min(len / 2);
    let band: f64 = (lo..=hi).map(|b| buf[b].norm_sqr()).sum();
    band / total
}

/// Cross-correlation phase of `b` relative to `a` at angular frequency
/// `omega` (rad per sample), searched over ±half a period.
fn pair_phase(a: &[f64], b: &[f64], omega: f64) -> f64 {
    let len = a.len();
    let half = ((std::f64::consts::PI / omega).round() as i64).max(1);
    let mean_a = a.iter().sum::<f64>() / len as f64;
    let mean_b = b.iter().sum::<f64>() / len as f64;
    let corr = |lag: i64| -> f64 {
        let mut s = 0.0;
        let mut count = 0usize;
        for t in 0..len as i64 {
            let u = t + lag;
            if u >= 0 && u < len as i64 {
                s += (a[t as usize] - mean_a) * (b[u as usize] - mean_b);
                count += 1;
            }
        }
        if count == 0 {
            f64::MIN
        } else {
            s / count as f64
        }
    };
    let mut best_lag = -half;
    let mut best = f64::MIN;
    for lag in -half..=half {
        let v = corr(lag);
        if v > best {
            best = v;
            best_lag = lag;
        }
    }
    let refined = best_lag as f64
        + parabolic_offset(corr(best_lag - 1), corr(best_lag), corr(best_lag + 1));
    // b(t + lag) aligned with a(t) means phase_b + omega*lag = phase_a.
    wrap_angle(-omega * refined)
}

/// Fraction of a signal's power that must sit near the dominant bin for its
/// phase to count as defined.
pub const DEFINED_BAND_FRACTION: f64 = 0.2;

/// Extracts the phase matrix of a set of equally-long signals sampled at
/// `sample_rate` Hz.
pub fn phase_relations(signals: &[Vec<f64>], sample_rate: f64) -> Result<PhaseMatrix> {
    let n = signals.len();
    if n == 0 {
        return Err(Error::invalid("phase_relations: no signals"));
    }
    let len = signals[0].len();
    if len < 16 {
        return Err(Error::invalid("phase_relations: need at least 16 samples"));
    }
    if signals.iter().any(|s| s.len() != len) {
        return Err(Error::invalid("phase_relations: signals differ in length"));
    }
    if !(sample_rate > 0.0) {
        return Err(Error::invalid("sample rate must be positive"));
    }
    let spectrum = summed_spectrum(signals);
    let mut k_star = 1usize;
    let mut best = 0.0;
    for (k, &v) in spectrum.iter().enumerate().skip(1) {
        if v > best {
            best = v;
            k_star = k;
        }
    }
    let mut phase = vec![vec![None; n]; n];
    for (i, row) in phase.iter_mut().enumerate() {
        row[i] = Some(0.0);
    }
    if best == 0.0 {
        return Ok(PhaseMatrix {
            frequency_hz: 0.0,
            phase,
        });
    }
    let left = if k_star > 1 { spectrum[k_star - 1] } else { 0.0 };
    let right = if k_star + 1 < spectrum.len() {
        spectrum[k_star + 1]
    } else {
        0.0
    };
    let k_refined = k_star as f64 + parabolic_offset(left, spectrum[k_star], right);
    let frequency_hz = k_refined * sample_rate / len as f64;
    let omega = 2.0 * std::f64::consts::PI * k_refined / len as f64;

    let defined: Vec<bool> = signals
        .iter()
        .map(|s| band_fraction(s, k_star) >= DEFINED_BAND_FRACTION)
        .collect();
    for i in 0..n {
        for j in (i + 1)..n {
            if defined[i] && defined[j] {
                let p = pair_phase(&signals[i], &signals[j], omega);
                phase[i][j] = Some(p);
                phase[j][i] = Some(wrap_angle(-p));
            }
        }
    }
    Ok(PhaseMatrix {
        frequency_hz,
        phase,
    })
}
