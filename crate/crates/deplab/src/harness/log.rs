//! Run logs: everything a finished run leaves behind, in memory and on disk.
//!
//! A run directory holds `config.json` (exact echo of the input),
//! `steps.csv` (per-step sensors, motors, prediction norms, contacts),
//! `weights.csv` and `spectra.csv` (full weights and loop eigenvalues at the
//! logging cadence), `events.csv`, `snapshots.json`, and `summary.json`.
//! Floats are written in shortest round-trip form, so a reloaded log is
//! bit-identical to the one written and two runs of the same config produce
//! byte-identical files.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use nalgebra::{Complex, DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::analysis::SpectrumSample;
use crate::controller::WeightSnapshot;
use crate::error::{Error, Result};
use crate::harness::config::ExperimentConfig;

pub const SUMMARY_SCHEMA: &str = "deplab-summary/1";
pub const SNAPSHOTS_SCHEMA: &str = "deplab-snapshots/1";

/// One control step: full extended sensors, motor commands, and the norms of
/// the predicted motor derivative and its departure from the actual one.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRow {
    pub t: f64,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub ytilde_norm: f64,
    pub delta_norm: f64,
    pub contacts: Option<Vec<bool>>,
}

/// Full weight state of one agent at a logging instant.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightRow {
    pub t: f64,
    pub agent: usize,
    pub c: DMatrix<f64>,
    pub h: DVector<f64>,
}

/// Scheduled occurrence worth an audit line: perturbations landing, weight
/// snapshots, recalls, weight copies.
#[derive(Debug, Clone, PartialEq)]
pub struct EventRow {
    pub t: f64,
    pub kind: String,
    pub detail: String,
}

/// Stored weight state, addressable by index for later recall.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnapshotRow {
    pub time: f64,
    pub agent: usize,
    pub weights: WeightSnapshot,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct SnapshotFile {
    schema: String,
    snapshots: Vec<SnapshotRow>,
}

/// Scalar digest of a run, written as `summary.json` and collated by sweeps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub schema: String,
    pub steps: usize,
    pub dt: f64,
    pub duration: f64,
    pub agents: usize,
    pub motors: usize,
    pub sensors: usize,
    /// Mean over motor channels of the temporal variance of `y` over the
    /// second half of the run.
    pub activity_variance: f64,
    /// Mean wheel angular velocity over the run, for wheel plants.
    pub mean_wheel_speed: Option<f64>,
    /// Loop eigenvalues above the relative modulus floor in the final
    /// spectrum sample, one count per agent.
    pub eigen_nonzero: Vec<usize>,
}

/// In-memory form of a run directory.
#[derive(Debug, Clone)]
pub struct RunLog {
    pub config: ExperimentConfig,
    pub steps: Vec<StepRow>,
    pub weights: Vec<WeightRow>,
    /// `(agent, sample)` at the logging cadence. Samples loaded from disk
    /// carry eigenvalues only; eigenvectors are recomputed from `weights`.
    pub spectra: Vec<(usize, SpectrumSample)>,
    pub events: Vec<EventRow>,
    pub snapshots: Vec<SnapshotRow>,
    pub summary: RunSummary,
}

fn push_f64(line: &mut String, v: f64) {
    let _ = write!(line, ",{v}");
}

fn parse_f64(field: &str, context: &'static str) -> Result<f64> {
    field
        .parse::<f64>()
        .map_err(|_| Error::config(format!("{context}: unparseable number {field:?}")))
}

fn sanitize_detail(detail: &str) -> String {
    detail.replace([',', '\n', '\r'], ";")
}

impl RunLog {
    /// Internal consistency: strictly increasing step times, matching row
    /// widths, and (for plastic runs) logged weights inside the norm cap.
    pub fn validate(&self) -> Result<()> {
        let sensors = self.config.agents() * self.config.ext_sensors_per_agent();
        let motors = self.config.agents() * self.config.motors_per_agent();
        let mut prev = f64::NEG_INFINITY;
        for row in &self.steps {
            if row.t <= prev {
                return Err(Error::config(format!(
                    "step times must increase strictly, got {} after {prev}",
                    row.t
                )));
            }
            prev = row.t;
            if row.x.len() != sensors {
                return Err(Error::dim("logged sensor row", sensors, row.x.len()));
            }
            if row.y.len() != motors {
                return Err(Error::dim("logged motor row", motors, row.y.len()));
            }
        }
        let plastic = !self.config.frozen && self.config.recall.is_none();
        if plastic {
            let kappa = self.config.plasticity.kappa;
            let cap = kappa * (1.0 + 1e-9);
            for row in &self.weights {
                if row.t == 0.0 {
                    continue;
                }
                let worst = match self.config.plasticity.normalization {
                    crate::plasticity::Normalization::Global => row.c.norm(),
                    crate::plasticity::Normalization::Individual => (0..row.c.nrows())
                        .map(|i| row.c.row(i).norm())
                        .fold(0.0, f64::max),
                };
                if worst > cap {
                    return Err(Error::config(format!(
                        "logged weight norm {worst} exceeds the cap {kappa} at t = {}",
                        row.t
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        self.validate()?;
        fs::create_dir_all(dir)?;
        self.config.save(&dir.join("config.json"))?;
        fs::write(dir.join("steps.csv"), self.steps_csv())?;
        fs::write(dir.join("weights.csv"), self.weights_csv())?;
        fs::write(dir.join("spectra.csv"), self.spectra_csv())?;
        fs::write(dir.join("events.csv"), self.events_csv())?;
        let snapshot_file = SnapshotFile {
            schema: SNAPSHOTS_SCHEMA.to_string(),
            snapshots: self.snapshots.clone(),
        };
        let mut text = serde_json::to_string_pretty(&snapshot_file)?;
        text.push('\n');
        fs::write(dir.join("snapshots.json"), text)?;
        let mut text = serde_json::to_string_pretty(&self.summary)?;
        text.push('\n');
        fs::write(dir.join("summary.json"), text)?;
        Ok(())
    }

    fn steps_csv(&self) -> String {
        let sensors = self.config.agents() * self.config.ext_sensors_per_agent();
        let motors = self.config.agents() * self.config.motors_per_agent();
        let contact_cols = self
            .steps
            .first()
            .and_then(|r| r.contacts.as_ref())
            .map_or(0, Vec::len);
        let mut out = String::from("t");
        for j in 0..sensors {
            let _ = write!(out, ",x{j}");
        }
        for j in 0..motors {
            let _ = write!(out, ",y{j}");
        }
        out.push_str(",ytilde_norm,delta_norm");
        for j in 0..contact_cols {
            let _ = write!(out, ",contact{j}");
        }
        out.push('\n');
        for row in &self.steps {
            let mut line = format!("{}", row.t);
            for v in &row.x {
                push_f64(&mut line, *v);
            }
            for v in &row.y {
                push_f64(&mut line, *v);
            }
            push_f64(&mut line, row.ytilde_norm);
            push_f64(&mut line, row.delta_norm);
            if let Some(contacts) = &row.contacts {
                for c in contacts {
                    let _ = write!(line, ",{}", u8::from(*c));
                }
            }
            line.push('\n');
            out.push_str(&line);
        }
        out
    }

    fn weights_csv(&self) -> String {
        let m = self.config.motors_per_agent();
        let n = self.config.ext_sensors_per_agent();
        let mut out = String::from("t,agent");
        for k in 0..m * n {
            let _ = write!(out, ",c{k}");
        }
        for i in 0..m {
            let _ = write!(out, ",h{i}");
        }
        out.push('\n');
        for row in &self.weights {
            let mut line = format!("{},{}", row.t, row.agent);
            for i in 0..m {
                for j in 0..n {
                    push_f64(&mut line, row.c[(i, j)]);
                }
            }
            for i in 0..m {
                push_f64(&mut line, row.h[i]);
            }
            line.push('\n');
            out.push_str(&line);
        }
        out
    }

    fn spectra_csv(&self) -> String {
        let m = self.config.motors_per_agent();
        let mut out = String::from("t,agent,nonzero,max_modulus");
        for k in 0..m {
            let _ = write!(out, ",re{k},im{k}");
        }
        out.push('\n');
        for (agent, sample) in &self.spectra {
            let mut line = format!("{},{agent}", sample.time);
            let _ = write!(line, ",{}", sample.nonzero_count());
            push_f64(&mut line, sample.max_modulus());
            for k in 0..m {
                let ev = sample
                    .eigenvalues
                    .get(k)
                    .copied()
                    .unwrap_or_else(|| Complex::new(0.0, 0.0));
                push_f64(&mut line, ev.re);
                push_f64(&mut line, ev.im);
            }
            line.push('\n');
            out.push_str(&line);
        }
        out
    }

    fn events_csv(&self) -> String {
        let mut out = String::from("t,kind,detail\n");
        for e in &self.events {
            let _ = writeln!(
                out,
                "{},{},{}",
                e.t,
                sanitize_detail(&e.kind),
                sanitize_detail(&e.detail)
            );
        }
        out
    }

    pub fn load(dir: &Path) -> Result<RunLog> {
        let config = ExperimentConfig::load(&dir.join("config.json"))?;
        let steps = load_steps_csv(&fs::read_to_string(dir.join("steps.csv"))?, &config)?;
        let weights = load_weights_csv(&fs::read_to_string(dir.join("weights.csv"))?, &config)?;
        let spectra = load_spectra_csv(&fs::read_to_string(dir.join("spectra.csv"))?, &config)?;
        let events = load_events_csv(&fs::read_to_string(dir.join("events.csv"))?)?;
        let snapshots = load_snapshots(dir)?;
        let summary: RunSummary =
            serde_json::from_str(&fs::read_to_string(dir.join("summary.json"))?)?;
        let log = RunLog {
            config,
            steps,
            weights,
            spectra,
            events,
            snapshots,
            summary,
        };
        log.validate()?;
        Ok(log)
    }

    /// Base (undelayed) sensor channels as one series per channel, agents
    /// concatenated. These are the signals phase analysis runs on.
    pub fn base_sensor_series(&self) -> Vec<Vec<f64>> {
        let agents = self.config.agents();
        let ext = self.config.ext_sensors_per_agent();
        let base = self.config.plant.base_sensors_per_agent();
        let mut series = vec![Vec::with_capacity(self.steps.len()); agents * base];
        for row in &self.steps {
            for a in 0..agents {
                for ch in 0..base {
                    series[a * base + ch].push(row.x[a * ext + ch]);
                }
            }
        }
        series
    }

    /// Motor command channels, one series per channel.
    pub fn motor_series(&self) -> Vec<Vec<f64>> {
        let motors = self.config.agents() * self.config.motors_per_agent();
        let mut series = vec![Vec::with_capacity(self.steps.len()); motors];
        for row in &self.steps {
            for (ch, v) in row.y.iter().enumerate() {
                series[ch].push(*v);
            }
        }
        series
    }

    /// `(t, contact flags)` rows, when the plant logs contacts.
    pub fn contact_rows(&self) -> Option<Vec<(f64, Vec<bool>)>> {
        if self.steps.first()?.contacts.is_none() {
            return None;
        }
        Some(
            self.steps
                .iter()
                .map(|r| (r.t, r.contacts.clone().unwrap_or_default()))
                .collect(),
        )
    }

    /// Weight matrices of one agent's stored snapshots, in snapshot order.
    pub fn snapshot_matrices(&self, agent: usize) -> Vec<DMatrix<f64>> {
        self.snapshots
            .iter()
            .filter(|s| s.agent == agent)
            .map(|s| DMatrix::from_row_slice(s.weights.m, s.weights.n, &s.weights.c))
            .collect()
    }
}

/// Loads just the snapshot list of a run directory.
pub fn load_snapshots(dir: &Path) -> Result<Vec<SnapshotRow>> {
    let text = fs::read_to_string(dir.join("snapshots.json"))?;
    let file: SnapshotFile = serde_json::from_str(&text)?;
    if !file.schema.starts_with("deplab-snapshots/") {
        return Err(Error::config(format!(
            "unrecognized snapshot schema {:?}",
            file.schema
        )));
    }
    Ok(file.snapshots)
}

/// Finds the snapshot taken at `time` (within half a step) for `agent`.
pub fn snapshot_at(
    snapshots: &[SnapshotRow],
    agent: usize,
    time: f64,
    dt: f64,
) -> Result<&SnapshotRow> {
    snapshots
        .iter()
        .find(|s| s.agent == agent && (s.time - time).abs() < 0.5 * dt)
        .ok_or(Error::SnapshotNotFound(time))
}

fn split_header(text: &str) -> Result<(Vec<&str>, Vec<&str>)> {
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::config("empty csv file"))?;
    Ok((header.split(',').collect(), lines.collect()))
}

fn load_steps_csv(text: &str, config: &ExperimentConfig) -> Result<Vec<StepRow>> {
    let sensors = config.agents() * config.ext_sensors_per_agent();
    let motors = config.agents() * config.motors_per_agent();
    let (header, lines) = split_header(text)?;
    let contact_cols = header
        .iter()
        .filter(|h| h.starts_with("contact"))
        .count();
    let expected = 1 + sensors + motors + 2 + contact_cols;
    if header.len() != expected {
        return Err(Error::dim("steps.csv columns", expected, header.len()));
    }
    let mut rows = Vec::with_capacity(lines.len());
    for line in lines {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != expected {
            return Err(Error::dim("steps.csv row", expected, fields.len()));
        }
        let mut it = fields.into_iter();
        let t = parse_f64(it.next().unwrap(), "steps.csv t")?;
        let mut x = Vec::with_capacity(sensors);
        for _ in 0..sensors {
            x.push(parse_f64(it.next().unwrap(), "steps.csv x")?);
        }
        let mut y = Vec::with_capacity(motors);
        for _ in 0..motors {
            y.push(parse_f64(it.next().unwrap(), "steps.csv y")?);
        }
        let ytilde_norm = parse_f64(it.next().unwrap(), "steps.csv ytilde_norm")?;
        let delta_norm = parse_f64(it.next().unwrap(), "steps.csv delta_norm")?;
        let contacts = if contact_cols > 0 {
            let mut flags = Vec::with_capacity(contact_cols);
            for _ in 0..contact_cols {
                flags.push(it.next().unwrap() == "1");
            }
            Some(flags)
        } else {
            None
        };
        rows.push(StepRow {
            t,
            x,
            y,
            ytilde_norm,
            delta_norm,
            contacts,
        });
    }
    Ok(rows)
}

fn load_weights_csv(text: &str, config: &ExperimentConfig) -> Result<Vec<WeightRow>> {
    let m = config.motors_per_agent();
    let n = config.ext_sensors_per_agent();
    let (header, lines) = split_header(text)?;
    let expected = 2 + m * n + m;
    if header.len() != expected {
        return Err(Error::dim("weights.csv columns", expected, header.len()));
    }
    let mut rows = Vec::with_capacity(lines.len());
    for line in lines {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != expected {
            return Err(Error::dim("weights.csv row", expected, fields.len()));
        }
        let t = parse_f64(fields[0], "weights.csv t")?;
        let agent: usize = fields[1]
            .parse()
            .map_err(|_| Error::config(format!("weights.csv: bad agent {:?}", fields[1])))?;
        let mut c = DMatrix::zeros(m, n);
        for k in 0..m * n {
            c[(k / n, k % n)] = parse_f64(fields[2 + k], "weights.csv c")?;
        }
        let mut h = DVector::zeros(m);
        for i in 0..m {
            h[i] = parse_f64(fields[2 + m * n + i], "weights.csv h")?;
        }
        rows.push(WeightRow { t, agent, c, h });
    }
    Ok(rows)
}

fn load_spectra_csv(
    text: &str,
    config: &ExperimentConfig,
) -> Result<Vec<(usize, SpectrumSample)>> {
    let m = config.motors_per_agent();
    let (header, lines) = split_header(text)?;
    let expected = 4 + 2 * m;
    if header.len() != expected {
        return Err(Error::dim("spectra.csv columns", expected, header.len()));
    }
    let mut rows = Vec::with_capacity(lines.len());
    for line in lines {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != expected {
            return Err(Error::dim("spectra.csv row", expected, fields.len()));
        }
        let t = parse_f64(fields[0], "spectra.csv t")?;
        let agent: usize = fields[1]
            .parse()
            .map_err(|_| Error::config(format!("spectra.csv: bad agent {:?}", fields[1])))?;
        let mut eigenvalues = Vec::with_capacity(m);
        for k in 0..m {
            let re = parse_f64(fields[4 + 2 * k], "spectra.csv re")?;
            let im = parse_f64(fields[5 + 2 * k], "spectra.csv im")?;
            eigenvalues.push(Complex::new(re, im));
        }
        rows.push((
            agent,
            SpectrumSample {
                time: t,
                eigenvalues,
                eigenvectors: Vec::new(),
            },
        ));
    }
    Ok(rows)
}

fn load_events_csv(text: &str) -> Result<Vec<EventRow>> {
    let (header, lines) = split_header(text)?;
    if header != ["t", "kind", "detail"] {
        return Err(Error::config("events.csv: unexpected header"));
    }
    let mut rows = Vec::with_capacity(lines.len());
    for line in lines {
        let mut fields = line.splitn(3, ',');
        let t = parse_f64(
            fields.next().ok_or_else(|| Error::config("events.csv: empty row"))?,
            "events.csv t",
        )?;
        let kind = fields
            .next()
            .ok_or_else(|| Error::config("events.csv: missing kind"))?
            .to_string();
        let detail = fields.next().unwrap_or("").to_string();
        rows.push(EventRow { t, kind, detail });
    }
    Ok(rows)
}
