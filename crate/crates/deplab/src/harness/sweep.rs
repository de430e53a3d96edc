//! Config sweeps: independent runs collated into one metrics table.
//!
//! Each config is loaded, run, and written to its own directory under the
//! sweep output; a failing run is recorded in its row and the sweep moves
//! on. The table always lands in `sweep.csv` with one row per config in
//! argument order.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::Result;
use crate::harness::config::ExperimentConfig;
use crate::harness::runner::run_experiment;

/// One sweep row: scalar metrics of a finished run, or its failure.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub config: String,
    /// `"ok"` or the error message with commas stripped.
    pub status: String,
    pub steps: Option<usize>,
    pub activity_variance: Option<f64>,
    pub mean_wheel_speed: Option<f64>,
    pub eigen_nonzero: Option<usize>,
}

fn opt<T: std::fmt::Display>(v: &Option<T>) -> String {
    v.as_ref().map(|v| v.to_string()).unwrap_or_default()
}

/// Renders rows as `sweep.csv` content.
pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out =
        String::from("config,status,steps,activity_variance,mean_wheel_speed,eigen_nonzero\n");
    for row in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            row.config.replace([',', '\n'], ";"),
            row.status.replace([',', '\n'], ";"),
            opt(&row.steps),
            opt(&row.activity_variance),
            opt(&row.mean_wheel_speed),
            opt(&row.eigen_nonzero),
        );
    }
    out
}

fn run_one(config_path: &Path, out_parent: &Path) -> Result<SweepRow> {
    let config = ExperimentConfig::load(config_path)?;
    let log = run_experiment(&config)?;
    let name = config_path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "run".to_string());
    log.write(&out_parent.join(&name))?;
    Ok(SweepRow {
        config: config_path.display().to_string(),
        status: "ok".to_string(),
        steps: Some(log.summary.steps),
        activity_variance: Some(log.summary.activity_variance),
        mean_wheel_speed: log.summary.mean_wheel_speed,
        eigen_nonzero: log.summary.eigen_nonzero.first().copied(),
    })
}

/// Runs every config, writes each run directory plus `sweep.csv` under
/// `out_parent`, and returns the rows. Individual failures become rows, not
/// sweep aborts.
pub fn sweep(config_paths: &[PathBuf], out_parent: &Path) -> Result<Vec<SweepRow>> {
    fs::create_dir_all(out_parent)?;
    let mut rows = Vec::with_capacity(config_paths.len());
    for path in config_paths {
        let row = match run_one(path, out_parent) {
            Ok(row) => row,
            Err(e) => SweepRow {
                config: path.display().to_string(),
                status: e.to_string(),
                steps: None,
                activity_variance: None,
                mean_wheel_speed: None,
                eigen_nonzero: None,
            },
        };
        rows.push(row);
    }
    fs::write(out_parent.join("sweep.csv"), sweep_csv(&rows))?;
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::config::{ModelSpec, PlantSpec, CONFIG_SCHEMA};
    use crate::plasticity::{Normalization, PlasticityParams, Rule};
    use tempfile::tempdir;

    fn write_config(dir: &Path, name: &str, dims: usize) -> PathBuf {
        let config = ExperimentConfig {
            schema: CONFIG_SCHEMA.to_string(),
            plant: PlantSpec::Lag { dims },
            plasticity: PlasticityParams {
                rule: Rule::Dep,
                tau: 0.7,
                tau_h: None,
                kappa: 1.0,
                rho: 1e-12,
                normalization: Normalization::Global,
                dt: 0.02,
            },
            model: ModelSpec::default(),
            delayed_sensors: None,
            duration: 1.0,
            perturbations: vec![],
            snapshot_times: vec![],
            log_interval: 0.5,
            initial_weights: None,
            weight_copy: None,
            recall: None,
            frozen: false,
            output: None,
        };
        let path = dir.join(name);
        config.save(&path).unwrap();
        path
    }

    #[test]
    fn sweep_continues_past_failures() {
        let dir = tempdir().unwrap();
        let good = write_config(dir.path(), "good.json", 2);
        let missing = dir.path().join("missing.json");
        let out = dir.path().join("out");
        let rows = sweep(&[good, missing], &out).unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0].status, "ok");
        assert_ne!(rows[1].status, "ok");
        assert!(out.join("sweep.csv").exists());
        assert!(out.join("good").join("steps.csv").exists());
    }

    #[test]
    fn sweep_rows_carry_metrics() {
        let dir = tempdir().unwrap();
        let a = write_config(dir.path(), "a.json", 2);
        let b = write_config(dir.path(), "b.json", 3);
        let out = dir.path().join("out");
        let rows = sweep(&[a, b], &out).unwrap();
        assert!(rows.iter().all(|r| r.status == "ok"));
        assert_eq!(rows[0].steps, Some(50));
        assert!(rows[0].activity_variance.is_some());
        let csv = fs::read_to_string(out.join("sweep.csv")).unwrap();
        assert!(csv.starts_with("config,status"));
        assert_eq!(csv.lines().count(), 3);
    }
}
