//! Step patterns: per-leg ground-contact intervals and gait labeling.
//!
//! Contact booleans sampled over time become closed intervals; when six legs
//! produce a regular pattern, the onset phases are matched against the two
//! canonical templates: tripod (two alternating groups of three, half a
//! period apart) and wave (three groups of two, a third of a period apart).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::phase::wrap_angle;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GaitLabel {
    Tripod,
    Wave,
}

/// Per-leg contact intervals in seconds, time-ordered and non-overlapping.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StepPattern {
    pub legs: Vec<Vec<(f64, f64)>>,
    pub gait: Option<GaitLabel>,
}

/// Converts sampled contact flags into intervals and labels the gait.
///
/// `rows` are `(time, flags)` samples in increasing time order; a contact
/// still active at the last sample closes there.
pub fn extract_step_pattern(rows: &[(f64, Vec<bool>)]) -> Result<StepPattern> {
    let Some(first) = rows.first() else {
        return Ok(StepPattern {
            legs: Vec::new(),
            gait: None,
        });
    };
    let n = first.1.len();
    if rows.iter().any(|(_, flags)| flags.len() != n) {
        return Err(Error::invalid("contact rows differ in width"));
    }
    if rows.windows(2).any(|w| w[1].0 <= w[0].0) {
        return Err(Error::invalid("contact rows must be strictly time-ordered"));
    }
    let mut legs: Vec<Vec<(f64, f64)>> = vec![Vec::new(); n];
    let mut open: Vec<Option<f64>> = vec![None; n];
    for (t, flags) in rows {
        for (leg, &down) in flags.iter().enumerate() {
            match (down, open[leg]) {
                (true, None) => open[leg] = Some(*t),
                (false, Some(start)) => {
                    legs[leg].push((start, *t));
                    open[leg] = None;
                }
                _ => {}
            }
        }
    }
    let end = rows.last().unwrap().0;
    for (leg, started) in open.into_iter().enumerate() {
        if let Some(start) = started {
            legs[leg].push((start, end));
        }
    }
    let gait = label_gait(&legs);
    Ok(StepPattern { legs, gait })
}

fn circular_mean(phases: &[f64]) -> f64 {
    let s: f64 = phases.iter().map(|p| p.sin()).sum();
    let c: f64 = phases.iter().map(|p| p.cos()).sum();
    s.atan2(c)
}

fn circular_distance(a: f64, b: f64) -> f64 {
    wrap_angle(a - b).abs()
}

/// Onset phase of each leg on the common period circle, or `None` when the
/// legs lack a shared regular rhythm.
fn onset_phases(legs: &[Vec<(f64, f64)>]) -> Option<Vec<f64>> {
    let mut periods = Vec::new();
    for intervals in legs {
        if intervals.len() < 2 {
            return None;
        }
        for pair in intervals.windows(2) {
            periods.push(pair[1].0 - pair[0].0);
        }
    }
    let period = periods.iter().sum::<f64>() / periods.len() as f64;
    if !(period > 0.0) {
        return None;
    }
    // Reject irregular rhythms: all onset gaps near the common period.
    if periods
        .iter()
        .any(|p| (p - period).abs() > 0.25 * period)
    {
        return None;
    }
    let two_pi = 2.0 * std::f64::consts::PI;
    Some(
        legs.iter()
            .map(|intervals| {
                let phases: Vec<f64> = intervals
                    .iter()
                    .map(|(start, _)| two_pi * (start / period).fract())
                    .collect();
                wrap_angle(circular_mean(&phases))
            })
            .collect(),
    )
}

const GROUP_SPREAD: f64 = 0.45;
const GROUP_OFFSET_TOL: f64 = 0.6;

fn is_tripod(phases: &[f64]) -> bool {
    let reference = phases[0];
    let (mut near, mut far) = (Vec::new(), Vec::new());
    for &p in phases {
        if circular_distance(p, reference) < std::f64::consts::FRAC_PI_2 {
            near.push(p);
        } else {
            far.push(p);
        }
    }
    if near.len() != 3 || far.len() != 3 {
        return false;
    }
    let mean_near = circular_mean(&near);
    let mean_far = circular_mean(&far);
    let spread_ok = near
        .iter()
        .all(|&p| circular_distance(p, mean_near) < GROUP_SPREAD)
        && far
            .iter()
            .all(|&p| circular_distance(p, mean_far) < GROUP_SPREAD);
    let offset = circular_distance(mean_near, mean_far);
    spread_ok && (offset - std::f64::consts::PI).abs() < GROUP_OFFSET_TOL
}

fn is_wave(phases: &[f64]) -> bool {
    // Sort on the circle and cut at the three largest gaps.
    let mut sorted: Vec<f64> = phases.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = sorted.len();
    let mut gaps: Vec<(f64, usize)> = (0..n)
        .map(|i| {
            let next = sorted[(i + 1) % n] + if i + 1 == n { 2.0 * std::f64::consts::PI } else { 0.0 };
            (next - sorted[i], i)
        })
        .collect();
    gaps.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap());
    let mut cuts: Vec<usize> = gaps.iter().take(3).map(|&(_, i)| i).collect();
    cuts.sort_unstable();
    if cuts.len() != 3 {
        return false;
    }
    let mut clusters: Vec<Vec<f64>> = Vec::new();
    let mut start = cuts[2] + 1;
    for &cut in &cuts {
        let mut members = Vec::new();
        let mut i = start % n;
        loop {
            members.push(sorted[i]);
            if i == cut {
                break;
            }
            i = (i + 1) % n;
        }
        clusters.push(members);
        start = cut + 1;
    }
    if clusters.iter().any(|c| c.len() != 2) {
        return false;
    }
    let means: Vec<f64> = clusters.iter().map(|c| circular_mean(c)).collect();
    let spread_ok = clusters
        .iter()
        .zip(&means)
        .all(|(c, &m)| c.iter().all(|&p| circular_distance(p, m) < GROUP_SPREAD));
    if !spread_ok {
        return false;
    }
    let third = 2.0 * std::f64::consts::PI / 3.0;
    let mut spacings = Vec::new();
    for i in 0..3 {
        for j in (i + 1)..3 {
            spacings.push(circular_distance(means[i], means[j]));
        }
    }
    // Three clusters a third of a turn apart are pairwise 2π/3 apart.
    spacings.iter().all(|&s| (s - third).abs() < GROUP_OFFSET_TOL)
}

fn label_gait(legs: &[Vec<(f64, f64)>]) -> Option<GaitLabel> {
    if legs.len() != 6 {
        return None;
    }
    let phases = onset_phases(legs)?;
    if is_tripod(&phases) {
        Some(GaitLabel::Tripod)
    } else if is_wave(&phases) {
        Some(GaitLabel::Wave)
    } else {
        None
    }
}
