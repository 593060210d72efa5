//! Experiment harness behind the command-line tool: simulation studies,
//! tuning sweeps, bootstrap evaluation on real data and one-shot fits.

use std::fs;
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};

pub mod config;
pub mod methods;
pub mod realdata;
pub mod simulate;

pub use config::{BaselineConfig, Manifest, Mode, PathsConfig, RunConfig, SizeSpec, SubdataConfig, SweepGrid};
pub use methods::{run_method, Method, MethodRun};
pub use realdata::{evaluate_realdata, fit_dataset, run_fit, run_realdata, RealDataSummary};
pub use simulate::{run_simulation, run_sweep, simulate, ExperimentResult, SimulationOutcome, SimulationSummary, SweepSummary};

/// Runs `f` on a pool of `workers` threads (0 = all cores).
fn with_pool<T: Send>(workers: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    Ok(pool.install(f))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

/// Everything a finished run returns, by mode.
#[derive(Debug)]
pub enum RunOutput {
    Simulation(SimulationSummary),
    Sweep(SweepSummary),
    RealData(RealDataSummary),
    Fit(crate::model::FittedModel),
}

/// Dispatches on `cfg.mode`.
pub fn run(cfg: &RunConfig) -> Result<RunOutput> {
    Ok(match cfg.mode {
        Mode::Simulate => RunOutput::Simulation(run_simulation(cfg)?),
        Mode::Sweep => RunOutput::Sweep(run_sweep(cfg)?),
        Mode::Realdata => RunOutput::RealData(run_realdata(cfg)?),
        Mode::Fit => RunOutput::Fit(run_fit(cfg)?),
    })
}
