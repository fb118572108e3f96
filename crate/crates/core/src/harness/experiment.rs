//! One estimator run end to end: simulate, estimate, summarise, write files.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::Serialize;

use super::config::ExperimentConfig;
use super::sim::StreamSimulator;
use crate::error::{Error, Result};
use crate::estimator::{default_cadence, run, Diagnostics, EstimatorState, Mode, RunOptions, Trajectory};
use crate::lyapunov::Lyapunov;
use crate::meanfield::Census;
use crate::model::UnreliabilityVector;
use crate::numeric::euclidean;

/// `V` is only tracked up to this many agents; beyond it each evaluation
/// enumerates too many verdicts to do at every record.
const DIAGNOSTIC_V_MAX_N: usize = 12;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentSummary {
    pub n: usize,
    pub pi: Vec<f64>,
    pub seed: u64,
    pub horizon: u64,
    pub mode: Mode,
    pub schedule: String,
    pub steps: u64,
    pub final_estimate: Vec<f64>,
    pub final_gamma: u64,
    pub dist_pi: f64,
    pub dist_1mpi: f64,
    pub dist_half: f64,
    /// Distance to `{π, 1-π, ½·1}` plus the boundary equilibria.
    pub census_distance: f64,
    pub reset_count: usize,
    pub last_reset: Option<u64>,
}

#[derive(Debug, Clone)]
pub struct ExperimentOutcome {
    pub trajectory: Trajectory,
    pub summary: ExperimentSummary,
}

/// Runs the experiment in memory.
pub fn execute(config: &ExperimentConfig) -> Result<ExperimentOutcome> {
    config.validate()?;
    let pi = config.pi_vector()?;
    let n = pi.len();
    let reset_point = config.reset_point_vector()?;
    let mut state = EstimatorState::new(config.schedule.build()?, config.family()?, reset_point)?;
    if let Some(init) = &config.init {
        state = state.with_initial_estimate(UnreliabilityVector::new(init.clone())?)?;
    }

    let lyap = if n <= DIAGNOSTIC_V_MAX_N { Some(Lyapunov::new(&pi)?) } else { None };
    let complement = pi.complement();
    let half = vec![0.5; n];
    let probe = |x: &UnreliabilityVector| Diagnostics {
        lyapunov: lyap.as_ref().and_then(|l| l.value(x).ok()),
        dist_pi: Some(euclidean(x.values(), pi.values())),
        dist_complement: Some(euclidean(x.values(), complement.values())),
        dist_half: Some(euclidean(x.values(), &half)),
    };

    let options = RunOptions {
        horizon: config.horizon,
        mode: config.mode,
        cadence: config.cadence.unwrap_or_else(|| default_cadence(config.horizon)),
    };
    let stream = StreamSimulator::new(&pi, config.seed)?.map(|s| s.r);
    let trajectory = run(&mut state, &options, stream, Some(&probe))?;

    let last = state.estimate().values();
    let summary = ExperimentSummary {
        n,
        pi: pi.values().to_vec(),
        seed: config.seed,
        horizon: config.horizon,
        mode: config.mode,
        schedule: config.schedule.to_string(),
        steps: state.t(),
        final_estimate: last.to_vec(),
        final_gamma: state.gamma(),
        dist_pi: euclidean(last, pi.values()),
        dist_1mpi: euclidean(last, complement.values()),
        dist_half: euclidean(last, &half),
        census_distance: Census::new(&pi)?.distance(last),
        reset_count: state.reset_log().len(),
        last_reset: trajectory.last_reset(),
    };
    Ok(ExperimentOutcome { trajectory, summary })
}

/// Writes `trajectory.csv`, `resets.jsonl` and `summary.json` into `dir`.
pub fn write_outputs(outcome: &ExperimentOutcome, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let create = |name: &str| -> Result<(std::path::PathBuf, BufWriter<File>)> {
        let path = dir.join(name);
        let file = File::create(&path).map_err(|e| Error::io(&path, e))?;
        Ok((path, BufWriter::new(file)))
    };

    let (path, mut w) = create("trajectory.csv")?;
    outcome
        .trajectory
        .write_csv(&mut w)
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(&path, e))?;

    let (path, mut w) = create("resets.jsonl")?;
    outcome
        .trajectory
        .write_resets_jsonl(&mut w)
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(&path, e))?;

    let (path, mut w) = create("summary.json")?;
    serde_json::to_writer_pretty(&mut w, &outcome.summary)?;
    writeln!(w)
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(&path, e))?;
    Ok(())
}

/// [`execute`] followed by [`write_outputs`] into `config.out`.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentSummary> {
    let outcome = execute(config)?;
    write_outputs(&outcome, &config.out)?;
    Ok(outcome.summary)
}
