//! Command-line front end: run experiments, sweep config families, analyze
//! finished run directories, and replay stored weights.
//!
//! Every command exits 0 only on a clean result; failures print to stderr
//! and exit nonzero.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use deplab::analysis::{
    cluster_weights, extract_step_pattern, phase_relations, spectrum, delayed_column_map,
};
use deplab::harness::{
    run_experiment, schedule_recall, sweep, ExperimentConfig, RecallStep, RunLog,
};
use deplab::model::ModelMatrix;
use deplab::Perturbation;

#[derive(Parser)]
#[command(
    name = "deplab",
    about = "Deterministic closed-loop plasticity laboratory",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Execute one experiment config and write its run directory.
    Run(RunArgs),
    /// Run a family of configs and collate their metrics into sweep.csv.
    Sweep(SweepArgs),
    /// Compute analyses over a finished run directory.
    Analyze(AnalyzeArgs),
    /// Replay stored weight snapshots of a run under frozen dynamics.
    Recall(RecallArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Experiment config (JSON).
    config: PathBuf,
    /// Run directory; defaults to the config's `output` or runs/<name>.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    /// Config files; arguments containing `*` are expanded as globs.
    configs: Vec<String>,
    /// Parent directory for all run directories and sweep.csv.
    #[arg(long, default_value = "sweep")]
    output: PathBuf,
}

#[derive(Args)]
struct AnalyzeArgs {
    /// A finished run directory.
    run: PathBuf,
    /// Recompute the loop spectrum at the final logged weights.
    #[arg(long)]
    spectrum: bool,
    /// Pairwise phase relations of the base sensor channels.
    #[arg(long)]
    phase: bool,
    /// Step pattern and gait label from logged contact flags.
    #[arg(long)]
    steps: bool,
    /// Cluster stored weight snapshots into k groups.
    #[arg(long, value_name = "K")]
    cluster: Option<usize>,
}

#[derive(Args)]
struct RecallArgs {
    /// Source run directory holding the snapshots.
    run: PathBuf,
    /// Switch sequence `id@time[,id@time...]`, e.g. `0@0` or `0@1,1@60`.
    sequence: String,
    /// Run directory for the recall run.
    #[arg(long)]
    output: Option<PathBuf>,
    /// Recall duration in seconds; defaults to the source duration.
    #[arg(long)]
    duration: Option<f64>,
    /// Keep the source run's perturbation schedule instead of dropping it.
    #[arg(long)]
    keep_perturbations: bool,
}

fn main() -> ExitCode {
    match dispatch() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn dispatch() -> Result<()> {
    match Cli::parse().command {
        Command::Run(args) => cmd_run(args),
        Command::Sweep(args) => cmd_sweep(args),
        Command::Analyze(args) => cmd_analyze(args),
        Command::Recall(args) => cmd_recall(args),
    }
}

fn cmd_run(args: RunArgs) -> Result<()> {
    let config = ExperimentConfig::load(&args.config)
        .with_context(|| format!("loading {}", args.config.display()))?;
    let dir = args
        .output
        .unwrap_or_else(|| config.resolve_output(Some(&args.config)));
    let log = run_experiment(&config)?;
    log.write(&dir)?;
    println!(
        "run complete: {} steps, activity variance {:.3e} -> {}",
        log.summary.steps,
        log.summary.activity_variance,
        dir.display()
    );
    Ok(())
}

fn cmd_sweep(args: SweepArgs) -> Result<()> {
    if args.configs.is_empty() {
        bail!("sweep needs at least one config path or glob");
    }
    let mut paths: Vec<PathBuf> = Vec::new();
    for arg in &args.configs {
        if arg.contains('*') || arg.contains('?') || arg.contains('[') {
            let mut matched: Vec<PathBuf> = glob::glob(arg)
                .with_context(|| format!("bad glob {arg}"))?
                .collect::<std::result::Result<_, _>>()?;
            if matched.is_empty() {
                bail!("glob {arg} matched nothing");
            }
            matched.sort();
            paths.extend(matched);
        } else {
            paths.push(PathBuf::from(arg));
        }
    }
    let rows = sweep(&paths, &args.output)?;
    let failures = rows.iter().filter(|r| r.status != "ok").count();
    for row in &rows {
        println!("{}: {}", row.config, row.status);
    }
    println!(
        "sweep complete: {}/{} ok -> {}",
        rows.len() - failures,
        rows.len(),
        args.output.join("sweep.csv").display()
    );
    if failures > 0 {
        bail!("{failures} run(s) failed");
    }
    Ok(())
}

fn cmd_analyze(args: AnalyzeArgs) -> Result<()> {
    let log = RunLog::load(&args.run)
        .with_context(|| format!("loading run {}", args.run.display()))?;
    let any = args.spectrum || args.phase || args.steps || args.cluster.is_some();
    if !any {
        print_overview(&log);
        return Ok(());
    }
    if args.spectrum {
        analyze_spectrum(&log)?;
    }
    if args.phase {
        analyze_phase(&log, &args.run)?;
    }
    if args.steps {
        analyze_steps(&log, &args.run)?;
    }
    if let Some(k) = args.cluster {
        analyze_cluster(&log, &args.run, k)?;
    }
    Ok(())
}

fn print_overview(log: &RunLog) {
    let s = &log.summary;
    println!(
        "{} steps over {} s (dt {}), {} agent(s), {} motors, {} sensors",
        s.steps, s.duration, s.dt, s.agents, s.motors, s.sensors
    );
    println!("activity variance (second half): {:.6e}", s.activity_variance);
    if let Some(omega) = s.mean_wheel_speed {
        println!("mean wheel speed: {omega:.6} rad/s");
    }
    for (agent, count) in s.eigen_nonzero.iter().enumerate() {
        println!("agent {agent}: {count} loop eigenvalue(s) above the floor");
    }
    println!(
        "{} events, {} snapshots, {} weight rows",
        log.events.len(),
        log.snapshots.len(),
        log.weights.len()
    );
}

fn analyze_spectrum(log: &RunLog) -> Result<()> {
    let base = log.config.plant.base_sensors_per_agent();
    let map = log
        .config
        .delayed_sensors
        .as_ref()
        .map(|cfg| delayed_column_map(cfg, base))
        .unwrap_or_default();
    let motors = log.config.motors_per_agent();
    let sensors = log.config.ext_sensors_per_agent();
    // A learned model cannot be rebuilt from the log alone; the loop gain is
    // then reported under the identity model.
    let model = match log.config.model.build_static(motors, sensors) {
        Ok(model) => model,
        Err(_) => {
            println!("note: model not reconstructible, using identity");
            ModelMatrix::identity(motors, sensors)?
        }
    };
    for agent in 0..log.config.agents() {
        let Some(row) = log.weights.iter().rev().find(|r| r.agent == agent) else {
            continue;
        };
        let sample = spectrum(&model, &row.c, base, &map, row.t)?;
        println!(
            "agent {agent} at t = {}: {} eigenvalue(s) above the floor",
            row.t,
            sample.nonzero_count()
        );
        for (k, ev) in sample.eigenvalues.iter().enumerate() {
            println!("  lambda_{k} = {:+.6} {:+.6}i  (|.| = {:.6})", ev.re, ev.im, ev.norm());
        }
    }
    Ok(())
}

fn analyze_phase(log: &RunLog, dir: &Path) -> Result<()> {
    let series = log.base_sensor_series();
    let rate = 1.0 / log.config.dt();
    let matrix = phase_relations(&series, rate)?;
    println!(
        "dominant frequency: {:.4} Hz over {} channels",
        matrix.frequency_hz,
        series.len()
    );
    let defined = matrix
        .phase
        .iter()
        .flatten()
        .filter(|p| p.is_some())
        .count();
    println!("defined phase entries: {defined}/{}", matrix.len() * matrix.len());
    let mut text = serde_json::to_string_pretty(&matrix)?;
    text.push('\n');
    std::fs::write(dir.join("phase.json"), text)?;
    println!("wrote {}", dir.join("phase.json").display());
    Ok(())
}

fn analyze_steps(log: &RunLog, dir: &Path) -> Result<()> {
    let Some(rows) = log.contact_rows() else {
        bail!("run has no contact flags; configure the plant's contact model");
    };
    let pattern = extract_step_pattern(&rows)?;
    match &pattern.gait {
        Some(label) => println!("gait: {label:?}"),
        None => println!("gait: unclassified"),
    }
    for (leg, intervals) in pattern.legs.iter().enumerate() {
        println!("leg {leg}: {} stance interval(s)", intervals.len());
    }
    let mut text = serde_json::to_string_pretty(&pattern)?;
    text.push('\n');
    std::fs::write(dir.join("steps.json"), text)?;
    println!("wrote {}", dir.join("steps.json").display());
    Ok(())
}

fn analyze_cluster(log: &RunLog, dir: &Path, k: usize) -> Result<()> {
    let matrices = log.snapshot_matrices(0);
    if matrices.is_empty() {
        bail!("run stores no weight snapshots to cluster");
    }
    let clustering = cluster_weights(&matrices, k)?;
    println!("clustered {} snapshots into {k} group(s)", matrices.len());
    println!("assignment: {:?}", clustering.assignment);

    #[derive(serde::Serialize)]
    struct ClusterFile {
        schema: &'static str,
        k: usize,
        assignment: Vec<usize>,
        centers: Vec<Vec<f64>>,
    }
    let centers = clustering
        .centers
        .iter()
        .map(|c| {
            let mut flat = Vec::with_capacity(c.len());
            for i in 0..c.nrows() {
                for j in 0..c.ncols() {
                    flat.push(c[(i, j)]);
                }
            }
            flat
        })
        .collect();
    let file = ClusterFile {
        schema: "deplab-clusters/1",
        k,
        assignment: clustering.assignment.clone(),
        centers,
    };
    let mut text = serde_json::to_string_pretty(&file)?;
    text.push('\n');
    std::fs::write(dir.join("clusters.json"), text)?;
    println!("wrote {}", dir.join("clusters.json").display());
    Ok(())
}

fn cmd_recall(args: RecallArgs) -> Result<()> {
    let mut base = ExperimentConfig::load(&args.run.join("config.json"))
        .with_context(|| format!("loading run config in {}", args.run.display()))?;
    if let Some(duration) = args.duration {
        base.duration = duration;
    }
    let perturbations: Vec<Perturbation> = if args.keep_perturbations {
        base.perturbations.clone()
    } else {
        Vec::new()
    };
    let steps = parse_sequence(&args.sequence)?;
    let config = schedule_recall(&base, &args.run, steps, perturbations)?;
    let dir = args.output.unwrap_or_else(|| {
        let name = args
            .run
            .file_name()
            .map(|s| format!("{}-recall", s.to_string_lossy()))
            .unwrap_or_else(|| "recall".to_string());
        args.run.with_file_name(name)
    });
    let log = run_experiment(&config)?;
    log.write(&dir)?;
    println!(
        "recall complete: {} switch(es), {} steps -> {}",
        log.events.iter().filter(|e| e.kind == "recall").count(),
        log.summary.steps,
        dir.display()
    );
    Ok(())
}

/// Parses `id@time[,id@time...]`.
fn parse_sequence(text: &str) -> Result<Vec<RecallStep>> {
    let mut steps = Vec::new();
    for part in text.split(',') {
        let (id, time) = part
            .split_once('@')
            .with_context(|| format!("switch {part:?} is not id@time"))?;
        steps.push(RecallStep {
            snapshot: id
                .trim()
                .parse()
                .with_context(|| format!("bad snapshot id {id:?}"))?,
            time: time
                .trim()
                .parse()
                .with_context(|| format!("bad switch time {time:?}"))?,
        });
    }
    Ok(steps)
}
