//! Experiment execution: one validated config in, one complete run log out.
//!
//! The loop keeps a strict within-step order so that replays are bit-exact:
//! weight transplants land first, then sensing, derivative estimation, the
//! inverse-model reconstruction, the plasticity update (always on the
//! previous step's signals), threshold drift, the motor command, and finally
//! scheduled perturbations ahead of the plant step, whose effect shows up in
//! the next reading. Rows are logged before the plant advances, so every row
//! describes the state that produced its motor command.

use std::collections::BTreeMap;
use std::path::Path;

use nalgebra::DVector;

use crate::analysis::{delayed_column_map, spectrum};
use crate::controller::ControllerState;
use crate::error::{Error, Result};
use crate::harness::config::{ExperimentConfig, ModelSpec, RecallSequence, RecallStep};
use crate::harness::log::{
    load_snapshots, snapshot_at, EventRow, RunLog, RunSummary, SnapshotRow, StepRow, WeightRow,
    SUMMARY_SCHEMA,
};
use crate::model::{learn_model_offline, DelayLine, ModelMatrix};
use crate::plants::{schedule_steps, Perturbation, PerturbationKind};
use crate::plasticity::{
    dep_update, dhl_update, hebb_update, normalize, threshold_update, DerivativeBuffer, Rule,
};

struct Agent {
    controller: ControllerState,
    model: ModelMatrix,
    delay: Option<DelayLine>,
    dx_buf: DerivativeBuffer,
    dy_buf: DerivativeBuffer,
    /// Extended sensor vector of the previous step; `None` before step 1.
    x_full_prev: Option<DVector<f64>>,
    dx_prev: DVector<f64>,
    y_prev: DVector<f64>,
    y_dot_prev: DVector<f64>,
}

fn perturbation_detail(kind: &PerturbationKind) -> (String, String) {
    match kind {
        PerturbationKind::Kick { joint, magnitude } => (
            "kick".to_string(),
            format!("joint={joint};magnitude={magnitude}"),
        ),
        PerturbationKind::Torque {
            wheel,
            magnitude,
            duration,
        } => (
            "torque".to_string(),
            format!("wheel={wheel};magnitude={magnitude};duration={duration}"),
        ),
        PerturbationKind::Clamp { joint, duration } => (
            "clamp".to_string(),
            format!("joint={joint};duration={duration}"),
        ),
    }
}

/// Escalates non-finite failures to an abort that names the offending step.
fn at_step(step: usize, e: Error) -> Error {
    match e {
        Error::NonFinite(context) => Error::Unstable { step, context },
        other => other,
    }
}

/// Resolves the model for one agent, reading the source run for learned fits.
fn resolve_model(config: &ExperimentConfig) -> Result<(ModelMatrix, Option<EventRow>)> {
    let motors = config.motors_per_agent();
    let sensors = config.ext_sensors_per_agent();
    match &config.model {
        ModelSpec::Learned { learned } => {
            if config.agents() != 1 {
                return Err(Error::config(
                    "learned models are only supported for single-agent runs",
                ));
            }
            let source = RunLog::load(&learned.source_run)?;
            let dt = source.config.dt();
            let rows = &source.steps;
            if rows.len() < 3 {
                return Err(Error::config(
                    "learned model needs a source run with at least 3 steps",
                ));
            }
            // The fit maps the sensor derivative one step after a command to
            // the motor derivative at the command: pairs (ẋ(t+1), ẏ(t)).
            let mut samples = Vec::with_capacity(rows.len() - 2);
            for t in 1..rows.len() - 1 {
                let x_next = DVector::from_column_slice(&rows[t + 1].x);
                let x_now = DVector::from_column_slice(&rows[t].x);
                let y_now = DVector::from_column_slice(&rows[t].y);
                let y_before = DVector::from_column_slice(&rows[t - 1].y);
                samples.push(((x_next - x_now) / dt, (y_now - y_before) / dt));
            }
            let fit = learn_model_offline(&samples)?;
            if fit.model.motors() != motors || fit.model.sensors() != sensors {
                return Err(Error::config(format!(
                    "learned model is {}x{}, the loop needs {motors}x{sensors}",
                    fit.model.motors(),
                    fit.model.sensors()
                )));
            }
            let event = EventRow {
                t: 0.0,
                kind: "model".to_string(),
                detail: format!(
                    "learned;residual={};ridge={}",
                    fit.residual, fit.ridge_used
                ),
            };
            Ok((fit.model, Some(event)))
        }
        other => Ok((other.build_static(motors, sensors)?, None)),
    }
}

/// Weight state loaded from a snapshot, shape-checked against the loop.
fn controller_from_snapshot(
    config: &ExperimentConfig,
    row: &SnapshotRow,
    frozen: bool,
) -> Result<ControllerState> {
    let motors = config.motors_per_agent();
    let sensors = config.ext_sensors_per_agent();
    if row.weights.m != motors || row.weights.n != sensors {
        return Err(Error::config(format!(
            "snapshot weights are {}x{}, the loop needs {motors}x{sensors}",
            row.weights.m, row.weights.n
        )));
    }
    row.weights.into_state(frozen)
}

/// Executes one experiment and returns the complete in-memory log.
///
/// Identical configs produce bit-identical logs. Any non-finite value aborts
/// with the offending step index instead of propagating.
pub fn run_experiment(config: &ExperimentConfig) -> Result<RunLog> {
    config.validate()?;

    let dt = config.dt();
    let total_steps = config.steps();
    let log_every = config.log_every();
    let agents_n = config.agents();
    let motors = config.motors_per_agent();
    let base = config.plant.base_sensors_per_agent();
    let ext = config.ext_sensors_per_agent();

    let mut plant = config.plant.build(dt)?;
    debug_assert_eq!(plant.sensors(), agents_n * base);
    debug_assert_eq!(plant.motors(), agents_n * motors);

    let mut events: Vec<EventRow> = Vec::new();
    let (model, model_event) = resolve_model(config)?;
    if let Some(e) = model_event {
        events.push(e);
    }

    let column_map = config
        .delayed_sensors
        .as_ref()
        .map(|cfg| delayed_column_map(cfg, base))
        .unwrap_or_default();

    // Recall runs hold weights frozen throughout; plain frozen runs likewise.
    let recall_mode = config.recall.is_some();
    let frozen = config.frozen || recall_mode;

    let mut agents: Vec<Agent> = Vec::with_capacity(agents_n);
    for _ in 0..agents_n {
        let controller = match &config.initial_weights {
            Some(w) => {
                let mut state = w.into_state(frozen)?;
                state.set_frozen(frozen);
                state
            }
            None => {
                let mut state = ControllerState::least_biased(ext, motors)?;
                state.set_frozen(frozen);
                state
            }
        };
        let delay = match &config.delayed_sensors {
            Some(cfg) => Some(DelayLine::new(cfg, base, dt)?),
            None => None,
        };
        agents.push(Agent {
            controller,
            model: model.clone(),
            delay,
            dx_buf: DerivativeBuffer::new(),
            dy_buf: DerivativeBuffer::new(),
            x_full_prev: None,
            dx_prev: DVector::zeros(ext),
            y_prev: DVector::zeros(motors),
            y_dot_prev: DVector::zeros(motors),
        });
    }

    // Schedule quantization: every timed directive lands at round(t/dt).
    let mut perturb_by_step: BTreeMap<usize, Vec<PerturbationKind>> = BTreeMap::new();
    for (step, kind) in schedule_steps(&config.perturbations, dt) {
        perturb_by_step.entry(step).or_default().push(kind);
    }
    let mut snapshot_by_step: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
    for &t in &config.snapshot_times {
        snapshot_by_step
            .entry((t / dt).round() as usize)
            .or_default()
            .push(t);
    }
    let copy_directive = match &config.weight_copy {
        Some(copy) => {
            let snapshots = load_snapshots(&copy.source_run)?;
            let step = (copy.time / dt).round() as usize;
            let mut rows = Vec::with_capacity(agents_n);
            for a in 0..agents_n {
                rows.push(snapshot_at(&snapshots, a, copy.time, dt)?.clone());
            }
            Some((step, rows, copy.source_run.display().to_string()))
        }
        None => None,
    };
    let recall_directive: Vec<(usize, RecallStep, SnapshotRow)> = match &config.recall {
        Some(RecallSequence { source_run, steps }) => {
            let snapshots = load_snapshots(source_run)?;
            let mut switches = Vec::with_capacity(steps.len());
            for step in steps {
                let row = snapshots.get(step.snapshot).ok_or_else(|| {
                    Error::config(format!(
                        "recall references snapshot {} but the source run stores {}",
                        step.snapshot,
                        snapshots.len()
                    ))
                })?;
                switches.push(((step.time / dt).round() as usize, *step, row.clone()));
            }
            switches
        }
        None => Vec::new(),
    };

    let mut steps_log: Vec<StepRow> = Vec::with_capacity(total_steps);
    let mut weights_log: Vec<WeightRow> = Vec::new();
    let mut spectra_log = Vec::new();
    let mut snapshots_log: Vec<SnapshotRow> = Vec::new();

    let mut x_base = DVector::<f64>::zeros(agents_n * base);
    let mut wheel_speed_sum = 0.0;
    let mut wheel_speed_samples = 0usize;

    for s in 0..total_steps {
        let t = s as f64 * dt;

        // Weight transplants land before anything else in the step, so the
        // incoming weights produce this step's motor command.
        if let Some((copy_step, rows, source)) = &copy_directive {
            if s == *copy_step {
                for (a, row) in rows.iter().enumerate() {
                    agents[a].controller = controller_from_snapshot(config, row, frozen)?;
                }
                events.push(EventRow {
                    t,
                    kind: "weight_copy".to_string(),
                    detail: format!("source={source};time={}", rows[0].time),
                });
            }
        }
        for (switch_step, step, row) in &recall_directive {
            if s == *switch_step {
                let a = row.agent;
                agents[a].controller = controller_from_snapshot(config, row, true)?;
                events.push(EventRow {
                    t,
                    kind: "recall".to_string(),
                    detail: format!("snapshot={};source_time={}", step.snapshot, row.time),
                });
            }
        }

        let mut x_row = Vec::with_capacity(agents_n * ext);
        let mut y_row = Vec::with_capacity(agents_n * motors);
        let mut ytilde_sq = 0.0;
        let mut delta_sq = 0.0;
        let mut y_all = DVector::<f64>::zeros(agents_n * motors);

        for (a, agent) in agents.iter_mut().enumerate() {
            let x_slice = DVector::from_column_slice(&x_base.as_slice()[a * base..(a + 1) * base]);
            let x_full = match &mut agent.delay {
                Some(line) => line.compose(&x_slice),
                None => x_slice,
            };
            let dx = agent.dx_buf.estimate(&x_full, dt).map_err(|e| at_step(s, e))?;

            // Reconstruction: the model predicts the motor derivative from
            // the fresh sensor derivative; the departure from the previous
            // actual derivative is the share not caused by the loop itself.
            let ytilde_raw = agent.model.apply(&dx).map_err(|e| at_step(s, e))?;
            let delta = &ytilde_raw - &agent.y_dot_prev;
            let ytilde = &agent.y_dot_prev + &delta;

            if !agent.controller.frozen() {
                if let Some(x_prev) = &agent.x_full_prev {
                    let params = &config.plasticity;
                    {
                        let c = agent.controller.weights_mut();
                        match params.rule {
                            Rule::Dep => dep_update(c, &ytilde, &agent.dx_prev, params)?,
                            Rule::Dhl => dhl_update(c, &agent.y_dot_prev, &agent.dx_prev, params)?,
                            Rule::Hebb => hebb_update(c, &agent.y_prev, x_prev, params)?,
                        }
                        normalize(c, params);
                    }
                    let h = agent.controller.thresholds_mut();
                    threshold_update(h, &agent.y_prev, params)?;
                }
            }

            let y = agent.controller.step(&x_full).map_err(|e| at_step(s, e))?;
            let y_dot = agent.dy_buf.estimate(&y, dt).map_err(|e| at_step(s, e))?;

            x_row.extend_from_slice(x_full.as_slice());
            y_row.extend_from_slice(y.as_slice());
            ytilde_sq += ytilde.norm_squared();
            delta_sq += delta.norm_squared();
            y_all
                .rows_mut(a * motors, motors)
                .copy_from(&y);

            agent.x_full_prev = Some(x_full);
            agent.dx_prev = dx;
            agent.y_prev = y;
            agent.y_dot_prev = y_dot;
        }

        steps_log.push(StepRow {
            t,
            x: x_row,
            y: y_row,
            ytilde_norm: ytilde_sq.sqrt(),
            delta_norm: delta_sq.sqrt(),
            contacts: plant.contacts(),
        });

        if s % log_every == 0 {
            for (a, agent) in agents.iter().enumerate() {
                weights_log.push(WeightRow {
                    t,
                    agent: a,
                    c: agent.controller.weights().clone(),
                    h: agent.controller.thresholds().clone(),
                });
                let sample = spectrum(&agent.model, agent.controller.weights(), base, &column_map, t)
                    .map_err(|e| at_step(s, e))?;
                spectra_log.push((a, sample));
            }
        }

        if let Some(times) = snapshot_by_step.get(&s) {
            for _ in times {
                for (a, agent) in agents.iter().enumerate() {
                    snapshots_log.push(SnapshotRow {
                        time: t,
                        agent: a,
                        weights: agent.controller.snapshot(),
                    });
                }
                events.push(EventRow {
                    t,
                    kind: "snapshot".to_string(),
                    detail: format!("index={}", snapshots_log.len() / agents_n - 1),
                });
            }
        }

        if let Some(kinds) = perturb_by_step.get(&s) {
            for kind in kinds {
                plant.apply_perturbation(kind).map_err(|e| at_step(s, e))?;
                let (kind_name, detail) = perturbation_detail(kind);
                events.push(EventRow {
                    t,
                    kind: kind_name,
                    detail,
                });
            }
        }

        x_base = plant.step(&y_all).map_err(|e| at_step(s, e))?;
        if let Some(omega) = plant.wheel_speed() {
            wheel_speed_sum += omega;
            wheel_speed_samples += 1;
        }
    }

    let activity_variance = mean_motor_variance(&steps_log, total_steps / 2);
    let mean_wheel_speed = if wheel_speed_samples > 0 {
        Some(wheel_speed_sum / wheel_speed_samples as f64)
    } else {
        None
    };
    let mut eigen_nonzero = vec![0usize; agents_n];
    let mut seen = vec![false; agents_n];
    for (a, sample) in spectra_log.iter().rev() {
        if !seen[*a] {
            seen[*a] = true;
            eigen_nonzero[*a] = sample.nonzero_count();
        }
    }

    let summary = RunSummary {
        schema: SUMMARY_SCHEMA.to_string(),
        steps: total_steps,
        dt,
        duration: config.duration,
        agents: agents_n,
        motors: agents_n * motors,
        sensors: agents_n * ext,
        activity_variance,
        mean_wheel_speed,
        eigen_nonzero,
    };

    let log = RunLog {
        config: config.clone(),
        steps: steps_log,
        weights: weights_log,
        spectra: spectra_log,
        events,
        snapshots: snapshots_log,
        summary,
    };
    log.validate()?;
    Ok(log)
}

/// Mean over motor channels of the temporal variance of `y` from `from_step`.
fn mean_motor_variance(steps: &[StepRow], from_step: usize) -> f64 {
    let rows: Vec<&StepRow> = steps.iter().skip(from_step).collect();
    if rows.is_empty() {
        return 0.0;
    }
    let channels = rows[0].y.len();
    if channels == 0 {
        return 0.0;
    }
    let count = rows.len() as f64;
    let mut total = 0.0;
    for ch in 0..channels {
        let mean: f64 = rows.iter().map(|r| r.y[ch]).sum::<f64>() / count;
        let var: f64 = rows.iter().map(|r| (r.y[ch] - mean).powi(2)).sum::<f64>() / count;
        total += var;
    }
    total / channels as f64
}

/// Builds the config for a scripted weight-recall run on top of `base`:
/// same plant and loop shape, frozen weights, switching through stored
/// snapshots of `source_run` at the given times.
///
/// A single switch at `t = 0` makes the run identical to a frozen run that
/// started from that snapshot.
pub fn schedule_recall(
    base: &ExperimentConfig,
    source_run: &Path,
    steps: Vec<RecallStep>,
    perturbations: Vec<Perturbation>,
) -> Result<ExperimentConfig> {
    let mut config = base.clone();
    config.recall = Some(RecallSequence {
        source_run: source_run.to_path_buf(),
        steps,
    });
    config.frozen = true;
    config.weight_copy = None;
    config.initial_weights = None;
    config.snapshot_times = Vec::new();
    config.perturbations = perturbations;
    config.validate()?;
    Ok(config)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::config::{ModelSpec, PlantSpec, WeightCopy, CONFIG_SCHEMA};
    use crate::plasticity::{Normalization, PlasticityParams};
    use tempfile::tempdir;

    fn lag_config(rule: Rule, duration: f64) -> ExperimentConfig {
        ExperimentConfig {
            schema: CONFIG_SCHEMA.to_string(),
            plant: PlantSpec::Lag { dims: 2 },
            plasticity: PlasticityParams {
                rule,
                tau: 0.7,
                tau_h: None,
                kappa: 1.5,
                rho: 1e-12,
                normalization: Normalization::Global,
                dt: 0.02,
            },
            model: ModelSpec::default(),
            delayed_sensors: None,
            duration,
            perturbations: vec![],
            snapshot_times: vec![],
            log_interval: 0.5,
            initial_weights: None,
            weight_copy: None,
            recall: None,
            frozen: false,
            output: None,
        }
    }

    fn kick(time: f64, joint: usize, magnitude: f64) -> Perturbation {
        Perturbation {
            time,
            kind: PerturbationKind::Kick { joint, magnitude },
        }
    }

    #[test]
    fn least_biased_run_stays_exactly_silent() {
        let config = lag_config(Rule::Dep, 2.0);
        let log = run_experiment(&config).unwrap();
        assert_eq!(log.steps.len(), 100);
        for row in &log.steps {
            assert!(row.x.iter().all(|v| *v == 0.0));
            assert!(row.y.iter().all(|v| *v == 0.0));
            assert_eq!(row.ytilde_norm, 0.0);
            assert_eq!(row.delta_norm, 0.0);
        }
    }

    #[test]
    fn replay_is_bit_identical() {
        let mut config = lag_config(Rule::Dep, 3.0);
        config.perturbations = vec![kick(0.5, 0, 0.8), kick(1.0, 1, -0.3)];
        let a = run_experiment(&config).unwrap();
        let b = run_experiment(&config).unwrap();
        assert_eq!(a.steps, b.steps);
        assert_eq!(a.weights, b.weights);
        assert_eq!(a.events, b.events);
    }

    #[test]
    fn dep_and_dhl_agree_bitwise_on_the_undisturbed_lag_plant() {
        // On x_{t+1} = y_t with M = I and no outside interference the
        // predicted and actual motor derivatives coincide bitwise, so from
        // identical starting weights the two rules are the same trajectory
        // step for step. (A perturbation is exactly what separates them.)
        let seed = crate::controller::WeightSnapshot {
            m: 2,
            n: 2,
            c: vec![0.9, 0.2, -0.3, 0.8],
            h: vec![0.4, -0.25],
        };
        let mut dep = lag_config(Rule::Dep, 5.0);
        dep.initial_weights = Some(seed.clone());
        let mut dhl = dep.clone();
        dhl.plasticity.rule = Rule::Dhl;
        let a = run_experiment(&dep).unwrap();
        let b = run_experiment(&dhl).unwrap();
        assert!(a.steps.iter().any(|r| r.y.iter().any(|v| v.abs() > 0.1)));
        assert_eq!(a.steps, b.steps);
        assert_eq!(a.weights, b.weights);
    }

    #[test]
    fn a_kick_separates_dep_from_dhl() {
        // From silent least-biased weights DHL has no reconstruction path:
        // its own motor derivative stays zero, so C stays pinned at zero.
        // DEP reads the kick through the model and departs.
        let mut dep = lag_config(Rule::Dep, 5.0);
        dep.perturbations = vec![kick(0.5, 0, 0.9)];
        let mut dhl = dep.clone();
        dhl.plasticity.rule = Rule::Dhl;
        let a = run_experiment(&dep).unwrap();
        let b = run_experiment(&dhl).unwrap();
        let final_dep = a.weights.last().unwrap().c.norm();
        let final_dhl = b.weights.last().unwrap().c.norm();
        assert!(final_dep > 1.0, "DEP should depart from zero, got {final_dep}");
        assert_eq!(final_dhl, 0.0, "DHL cannot leave the zero state");
    }

    #[test]
    fn exafference_is_zero_on_the_pure_lag_plant() {
        let mut config = lag_config(Rule::Dep, 5.0);
        config.perturbations = vec![kick(0.5, 0, 0.9)];
        let log = run_experiment(&config).unwrap();
        // The kick lands in the sensor reading one step after t = 0.5 and
        // shows up as exafference exactly once, two steps later in the
        // derivative; every other step closes the loop exactly.
        let spikes: Vec<f64> = log
            .steps
            .iter()
            .filter(|r| r.delta_norm != 0.0)
            .map(|r| r.t)
            .collect();
        assert!(!spikes.is_empty());
        for t in &spikes {
            assert!((*t - 0.54).abs() < 0.09, "unexpected exafference at t = {t}");
        }
    }

    #[test]
    fn frozen_run_keeps_weights_pinned() {
        let mut config = lag_config(Rule::Dep, 2.0);
        config.frozen = true;
        config.perturbations = vec![kick(0.2, 0, 1.0)];
        let log = run_experiment(&config).unwrap();
        for row in &log.weights {
            assert_eq!(row.c.norm(), 0.0);
            assert_eq!(row.h.norm(), 0.0);
        }
    }

    #[test]
    fn perturbation_schedule_is_exact_and_logged() {
        let mut config = lag_config(Rule::Dep, 2.0);
        config.perturbations = vec![kick(0.5, 0, 1.0)];
        let log = run_experiment(&config).unwrap();
        let event = log.events.iter().find(|e| e.kind == "kick").unwrap();
        assert_eq!(event.t, 0.5);
        // Lag contract: the kick applied at 0.5 is first visible at 0.52.
        let row_at = |t: f64| {
            log.steps
                .iter()
                .find(|r| (r.t - t).abs() < 1e-9)
                .unwrap()
                .clone()
        };
        assert_eq!(row_at(0.5).x[0], 0.0);
        assert!(row_at(0.52).x[0] > 0.0);
    }

    #[test]
    fn snapshots_and_weight_copy_round_trip() {
        let dir = tempdir().unwrap();
        let source_dir = dir.path().join("source");

        let mut source = lag_config(Rule::Dep, 2.0);
        source.perturbations = vec![kick(0.1, 0, 1.0)];
        source.snapshot_times = vec![1.0];
        let source_log = run_experiment(&source).unwrap();
        source_log.write(&source_dir).unwrap();
        assert_eq!(source_log.snapshots.len(), 1);

        let mut copy = lag_config(Rule::Dep, 2.0);
        copy.weight_copy = Some(WeightCopy {
            source_run: source_dir.clone(),
            time: 1.0,
        });
        let copy_log = run_experiment(&copy).unwrap();

        // At the copy step the run adopts the stored weights exactly.
        let row = copy_log
            .weights
            .iter()
            .find(|r| (r.t - 1.0).abs() < 1e-9)
            .unwrap();
        let stored = &source_log.snapshots[0].weights;
        let expected =
            nalgebra::DMatrix::from_row_slice(stored.m, stored.n, &stored.c);
        assert_eq!(row.c, expected);
        assert!(copy_log.events.iter().any(|e| e.kind == "weight_copy"));
    }

    #[test]
    fn recall_at_zero_equals_frozen_run_from_snapshot() {
        let dir = tempdir().unwrap();
        let source_dir = dir.path().join("source");

        let mut source = lag_config(Rule::Dep, 2.0);
        source.perturbations = vec![kick(0.1, 0, 1.0)];
        source.snapshot_times = vec![1.5];
        run_experiment(&source).unwrap().write(&source_dir).unwrap();

        let base = lag_config(Rule::Dep, 2.0);
        let recall_config = schedule_recall(
            &base,
            &source_dir,
            vec![RecallStep {
                snapshot: 0,
                time: 0.0,
            }],
            vec![kick(0.3, 0, 0.5)],
        )
        .unwrap();
        let recall_log = run_experiment(&recall_config).unwrap();

        let snapshots = load_snapshots(&source_dir).unwrap();
        let mut frozen = lag_config(Rule::Dep, 2.0);
        frozen.frozen = true;
        frozen.initial_weights = Some(snapshots[0].weights.clone());
        frozen.perturbations = vec![kick(0.3, 0, 0.5)];
        let frozen_log = run_experiment(&frozen).unwrap();

        assert_eq!(recall_log.steps, frozen_log.steps);
    }

    #[test]
    fn rest_recall_stays_at_rest_without_perturbation() {
        let dir = tempdir().unwrap();
        let source_dir = dir.path().join("source");
        let mut source = lag_config(Rule::Dep, 2.0);
        source.perturbations = vec![kick(0.1, 0, 1.0)];
        source.snapshot_times = vec![1.0];
        run_experiment(&source).unwrap().write(&source_dir).unwrap();

        let recall_config = schedule_recall(
            &lag_config(Rule::Dep, 2.0),
            &source_dir,
            vec![RecallStep {
                snapshot: 0,
                time: 0.5,
            }],
            vec![],
        )
        .unwrap();
        let log = run_experiment(&recall_config).unwrap();
        for row in &log.steps {
            assert!(row.y.iter().all(|v| *v == 0.0));
        }
    }

    #[test]
    fn unknown_recall_snapshot_is_an_error() {
        let dir = tempdir().unwrap();
        let source_dir = dir.path().join("source");
        let mut source = lag_config(Rule::Dep, 1.0);
        source.snapshot_times = vec![0.5];
        run_experiment(&source).unwrap().write(&source_dir).unwrap();

        let recall_config = schedule_recall(
            &lag_config(Rule::Dep, 1.0),
            &source_dir,
            vec![RecallStep {
                snapshot: 7,
                time: 0.0,
            }],
            vec![],
        )
        .unwrap();
        let err = run_experiment(&recall_config).unwrap_err();
        assert!(err.to_string().contains("snapshot 7"));
    }

    #[test]
    fn learned_model_recovers_identity_from_lag_run() {
        let dir = tempdir().unwrap();
        let source_dir = dir.path().join("probe");
        let mut probe = lag_config(Rule::Dep, 4.0);
        probe.perturbations = vec![
            kick(0.1, 0, 0.7),
            kick(0.3, 1, -0.4),
            kick(0.9, 0, 0.2),
            kick(1.7, 1, 0.5),
        ];
        run_experiment(&probe).unwrap().write(&source_dir).unwrap();

        let mut learned = lag_config(Rule::Dep, 1.0);
        learned.model = ModelSpec::Learned {
            learned: crate::harness::config::LearnedModel {
                source_run: source_dir,
            },
        };
        let log = run_experiment(&learned).unwrap();
        let event = log.events.iter().find(|e| e.kind == "model").unwrap();
        assert!(event.detail.starts_with("learned"));
    }

    #[test]
    fn two_agent_wheel_runs_and_reports_wheel_speed() {
        let mut config = lag_config(Rule::Dep, 2.0);
        config.plant = PlantSpec::Wheel(crate::plants::CrankWheelParams {
            inertia: 1.0,
            friction: 0.3,
            agents: 2,
            arm_stiffness: 30.0,
            amplitude: 0.45,
        });
        config.perturbations = vec![kick(0.1, 0, 2.0)];
        let log = run_experiment(&config).unwrap();
        assert_eq!(log.steps[0].x.len(), 4);
        assert_eq!(log.steps[0].y.len(), 4);
        assert!(log.summary.mean_wheel_speed.is_some());
        assert_ne!(log.summary.mean_wheel_speed.unwrap(), 0.0);
        // Weight rows exist for both agents.
        assert!(log.weights.iter().any(|r| r.agent == 1));
    }

    #[test]
    fn nonfinite_command_aborts_with_step_index() {
        let mut config = lag_config(Rule::Dep, 1.0);
        config.initial_weights = Some(crate::controller::WeightSnapshot {
            m: 2,
            n: 2,
            c: vec![0.0, 0.0, 0.0, 0.0],
            h: vec![f64::NAN, 0.0],
        });
        let err = run_experiment(&config).unwrap_err();
        match err {
            Error::InvalidParameter(_) | Error::NonFinite(_) | Error::Unstable { .. } => {}
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn chain_run_logs_contacts_when_configured() {
        let mut config = lag_config(Rule::Dep, 1.0);
        config.plant = PlantSpec::Chain(crate::plants::JointChainParams {
            joints: 6,
            contact: Some(crate::plants::ContactConfig {
                joints: vec![0, 3],
                threshold: 0.0,
            }),
            ..Default::default()
        });
        let log = run_experiment(&config).unwrap();
        assert_eq!(log.steps[0].contacts.as_ref().unwrap().len(), 2);
    }
}
