//! Simulation study and tuning sweep.

use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::save_csv;
use crate::error::Result;
use crate::metrics::{mse_test, power_error};
use crate::rng::StreamKey;
use crate::simgen::gen_dataset;
use crate::timing::StageTimings;

use super::config::{Manifest, RunConfig};
use super::methods::{run_method, Method};
use super::{with_pool, write_json};

/// One (replicate, method) outcome.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub replicate: usize,
    pub method: Method,
    pub power: f64,
    pub error: f64,
    pub mse: f64,
    pub timings: StageTimings,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Failure {
    pub replicate: usize,
    pub method: Method,
    pub message: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: Method,
    pub n_ok: usize,
    pub n_failed: usize,
    /// `None` when every replicate failed.
    pub mean_power: Option<f64>,
    pub mean_error: Option<f64>,
    pub mean_mse: Option<f64>,
    pub mean_timings: StageTimings,
    pub mean_total_seconds: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SimulationOutcome {
    /// Sorted by replicate, then method.
    pub results: Vec<ExperimentResult>,
    pub failures: Vec<Failure>,
}

impl SimulationOutcome {
    pub fn for_method(&self, method: Method) -> impl Iterator<Item = &ExperimentResult> {
        self.results.iter().filter(move |r| r.method == method)
    }

    pub fn summarize(&self, methods: &[Method]) -> Vec<MethodSummary> {
        methods
            .iter()
            .map(|&method| {
                let rows: Vec<&ExperimentResult> = self.for_method(method).collect();
                let n_ok = rows.len();
                let mean = |f: fn(&ExperimentResult) -> f64| {
                    (n_ok > 0).then(|| rows.iter().map(|r| f(r)).sum::<f64>() / n_ok as f64)
                };
                let mut mean_timings = StageTimings::default();
                rows.iter().for_each(|r| mean_timings.add(&r.timings));
                if n_ok > 0 {
                    mean_timings.scale(1.0 / n_ok as f64);
                }
                MethodSummary {
                    method,
                    n_ok,
                    n_failed: self.failures.iter().filter(|f| f.method == method).count(),
                    mean_power: mean(|r| r.power),
                    mean_error: mean(|r| r.error),
                    mean_mse: mean(|r| r.mse),
                    mean_total_seconds: mean_timings.total(),
                    mean_timings,
                }
            })
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimulationSummary {
    pub seed: u64,
    pub replications: usize,
    pub k: usize,
    pub methods: Vec<MethodSummary>,
    pub failures: Vec<Failure>,
}

/// Runs every replication of `cfg` in memory. Replicate `r` draws its
/// training and test sets and every method's randomness from keys derived
/// from `(seed, r)`, so the outcome does not depend on the worker count.
pub fn simulate(cfg: &RunConfig) -> Result<SimulationOutcome> {
    cfg.sim.validate()?;
    cfg.validate(cfg.sim.n, cfg.sim.p)?;
    let k = cfg.resolve_k(cfg.sim.n)?;
    let root = StreamKey::root(cfg.seed);
    let truth = cfg.sim.true_active();
    let beta = cfg.sim.beta_true();
    let dump_dir = cfg.paths.dump_data.then(|| cfg.paths.out.join("data"));
    if let Some(dir) = &dump_dir {
        fs::create_dir_all(dir)?;
    }

    let per_rep: Vec<Vec<std::result::Result<ExperimentResult, Failure>>> = with_pool(cfg.workers, || {
        (0..cfg.replications)
            .into_par_iter()
            .map(|r| {
                let rep = root.derive("replicate", r as u64);
                let fail = |method: Method, e: &dyn std::fmt::Display| Failure {
                    replicate: r,
                    method,
                    message: e.to_string(),
                };
                let data = gen_dataset(&cfg.sim, cfg.sim.n, &rep.derive("train", 0))
                    .and_then(|train| Ok((train, gen_dataset(&cfg.sim, cfg.sim.n_test, &rep.derive("test", 0))?)));
                let (train, test) = match data {
                    Ok(d) => d,
                    Err(e) => return cfg.methods.iter().map(|&m| Err(fail(m, &e))).collect(),
                };
                if let Some(dir) = &dump_dir {
                    let written = save_csv(&train, &dir.join(format!("train_{r}.csv")))
                        .and_then(|_| save_csv(&test, &dir.join(format!("test_{r}.csv"))));
                    if let Err(e) = written {
                        return cfg.methods.iter().map(|&m| Err(fail(m, &e))).collect();
                    }
                }
                cfg.methods
                    .iter()
                    .map(|&method| {
                        let run = run_method(method, &train, cfg, k, &rep.derive(method.label(), 0));
                        let scored = run.and_then(|run| {
                            let score = power_error(&run.active, &truth, cfg.sim.p)?;
                            let mse = mse_test(&beta, &run.model, &test.x)?;
                            Ok(ExperimentResult {
                                replicate: r,
                                method,
                                power: score.power,
                                error: score.error,
                                mse,
                                timings: run.model.meta.timings,
                            })
                        });
                        scored.map_err(|e| fail(method, &e))
                    })
                    .collect()
            })
            .collect()
    })?;

    let mut outcome = SimulationOutcome::default();
    for item in per_rep.into_iter().flatten() {
        match item {
            Ok(res) => outcome.results.push(res),
            Err(f) => outcome.failures.push(f),
        }
    }
    outcome.results.sort_by_key(|r| (r.replicate, r.method));
    outcome.failures.sort_by_key(|f| (f.replicate, f.method));
    Ok(outcome)
}

const RESULT_HEADER: [&str; 7] = ["replicate", "method", "power", "error", "mse", "stage", "seconds"];

fn result_fields(r: &ExperimentResult) -> Vec<[String; 7]> {
    r.timings
        .entries()
        .iter()
        .map(|(stage, secs)| {
            [
                r.replicate.to_string(),
                r.method.to_string(),
                r.power.to_string(),
                r.error.to_string(),
                r.mse.to_string(),
                stage.to_string(),
                secs.to_string(),
            ]
        })
        .collect()
}

/// Long-form result table: one row per (replicate, method, stage).
pub fn write_results(path: &Path, results: &[ExperimentResult]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(RESULT_HEADER)?;
    for r in results {
        for row in result_fields(r) {
            w.write_record(&row)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// `simulate` mode: writes `results.csv`, `summary.json` and
/// `manifest.toml` under `paths.out`.
pub fn run_simulation(cfg: &RunConfig) -> Result<SimulationSummary> {
    let k = cfg.resolve_k(cfg.sim.n)?;
    fs::create_dir_all(&cfg.paths.out)?;
    let outcome = simulate(cfg)?;
    let summary = SimulationSummary {
        seed: cfg.seed,
        replications: cfg.replications,
        k,
        methods: outcome.summarize(&cfg.methods),
        failures: outcome.failures.clone(),
    };
    write_results(&cfg.paths.out.join("results.csv"), &outcome.results)?;
    write_json(&cfg.paths.out.join("summary.json"), &summary)?;
    Manifest::new(cfg, None).write(&cfg.paths.out)?;
    Ok(summary)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub cell: usize,
    pub n1: usize,
    pub p_s: usize,
    pub methods: Vec<MethodSummary>,
    pub failures: Vec<Failure>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepSummary {
    pub seed: u64,
    pub replications: usize,
    pub cells: Vec<SweepCell>,
}

/// Grid cells in row-major order over `(n1, p_s)`. Empty grid lists fall
/// back to the `varsel` values.
pub fn sweep_cells(cfg: &RunConfig) -> Vec<(usize, usize)> {
    let n1s = if cfg.sweep.n1.is_empty() { vec![cfg.varsel.n1] } else { cfg.sweep.n1.clone() };
    let p_ss: Vec<usize> = if cfg.sweep.p_s.is_empty() {
        vec![cfg.varsel.resolved_p_s(cfg.sim.p)]
    } else {
        cfg.sweep.p_s.iter().map(|s| s.resolve(cfg.sim.p)).collect()
    };
    n1s.iter().flat_map(|&n1| p_ss.iter().map(move |&p_s| (n1, p_s))).collect()
}

fn cell_config(cfg: &RunConfig, n1: usize, p_s: usize) -> RunConfig {
    let mut c = cfg.clone();
    c.varsel.n1 = n1;
    c.varsel.p_s = Some(p_s);
    c
}

/// `sweep` mode: one simulation per grid cell with the same seed, so cells
/// share training and test data. `results.csv` carries `cell,n1,p_s` in
/// front of the usual columns.
pub fn run_sweep(cfg: &RunConfig) -> Result<SweepSummary> {
    cfg.sim.validate()?;
    let cells = sweep_cells(cfg);
    for &(n1, p_s) in &cells {
        cell_config(cfg, n1, p_s).validate(cfg.sim.n, cfg.sim.p)?;
    }
    fs::create_dir_all(&cfg.paths.out)?;
    let mut w = csv::Writer::from_path(cfg.paths.out.join("results.csv"))?;
    let header: Vec<&str> = ["cell", "n1", "p_s"].into_iter().chain(RESULT_HEADER).collect();
    w.write_record(&header)?;
    let mut summary = SweepSummary {
        seed: cfg.seed,
        replications: cfg.replications,
        cells: Vec::new(),
    };
    for (cell, &(n1, p_s)) in cells.iter().enumerate() {
        let outcome = simulate(&cell_config(cfg, n1, p_s))?;
        for r in &outcome.results {
            for row in result_fields(r) {
                let prefix = [cell.to_string(), n1.to_string(), p_s.to_string()];
                w.write_record(prefix.iter().chain(row.iter()))?;
            }
        }
        summary.cells.push(SweepCell {
            cell,
            n1,
            p_s,
            methods: outcome.summarize(&cfg.methods),
            failures: outcome.failures,
        });
    }
    w.flush()?;
    write_json(&cfg.paths.out.join("summary.json"), &summary)?;
    Manifest::new(cfg, None).write(&cfg.paths.out)?;
    Ok(summary)
}
