//! Bootstrap evaluation on a user train/test pair, and one-shot fitting.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::{load_csv, Dataset};
use crate::error::{Error, Result};
use crate::metrics::bootstrap_mspe;
use crate::model::FittedModel;
use crate::rng::StreamKey;

use super::config::{Manifest, RunConfig};
use super::methods::{run_method, Method};
use super::{with_pool, write_json};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MspeRow {
    pub method: Method,
    pub k: usize,
    pub bootstrap: usize,
    pub mspe: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BootstrapFailure {
    pub method: Method,
    pub bootstrap: usize,
    pub message: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MspeSummary {
    pub method: Method,
    pub k: usize,
    pub n_ok: usize,
    pub n_failed: usize,
    pub mean_mspe: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RealDataSummary {
    pub seed: u64,
    pub bootstrap_samples: usize,
    pub n_train: usize,
    pub n_test: usize,
    pub columns: usize,
    pub methods: Vec<MspeSummary>,
    pub failures: Vec<BootstrapFailure>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct RealDataOutcome {
    pub rows: Vec<MspeRow>,
    pub failures: Vec<BootstrapFailure>,
}

fn required<'a>(path: &'a Option<PathBuf>, what: &str) -> Result<&'a Path> {
    path.as_deref().ok_or_else(|| Error::Config(format!("paths.{what} is required")))
}

/// Bootstrap MSPE of each requested method. All methods see the same
/// bootstrap resamples.
pub fn evaluate_realdata(cfg: &RunConfig, train: &Dataset, test: &Dataset) -> Result<RealDataOutcome> {
    if train.p() != test.p() {
        return Err(Error::DimensionMismatch(format!(
            "train has {} covariates, test has {}",
            train.p(),
            test.p()
        )));
    }
    cfg.validate(train.n(), train.p())?;
    let k = cfg.resolve_k(train.n())?;
    let key = StreamKey::root(cfg.seed).derive("realdata", 0);
    let mut out = RealDataOutcome::default();
    for &method in &cfg.methods {
        let scores = with_pool(cfg.workers, || {
            bootstrap_mspe(
                train,
                test,
                |d: &Dataset, key: &StreamKey| run_method(method, d, cfg, k, key).map(|r| r.model),
                cfg.replications,
                &key,
            )
        })?;
        let k_used = if method == Method::FulldataLasso { train.n() } else { k };
        for (bootstrap, s) in scores.into_iter().enumerate() {
            match s {
                Ok(mspe) => out.rows.push(MspeRow {
                    method,
                    k: k_used,
                    bootstrap,
                    mspe,
                }),
                Err(e) => out.failures.push(BootstrapFailure {
                    method,
                    bootstrap,
                    message: e.to_string(),
                }),
            }
        }
    }
    Ok(out)
}

/// `realdata` mode: writes `mspe.csv` (`method,k,bootstrap,mspe`),
/// `summary.json` and `manifest.toml` under `paths.out`.
pub fn run_realdata(cfg: &RunConfig) -> Result<RealDataSummary> {
    let train = load_csv(required(&cfg.paths.train, "train")?)?;
    let test = load_csv(required(&cfg.paths.test, "test")?)?;
    let outcome = evaluate_realdata(cfg, &train, &test)?;
    fs::create_dir_all(&cfg.paths.out)?;

    let mut w = csv::Writer::from_path(cfg.paths.out.join("mspe.csv"))?;
    for row in &outcome.rows {
        w.serialize(row)?;
    }
    w.flush()?;

    let methods = cfg
        .methods
        .iter()
        .map(|&method| {
            let rows: Vec<&MspeRow> = outcome.rows.iter().filter(|r| r.method == method).collect();
            let n_ok = rows.len();
            MspeSummary {
                method,
                k: if method == Method::FulldataLasso { train.n() } else { cfg.resolve_k(train.n()).unwrap_or(0) },
                n_ok,
                n_failed: outcome.failures.iter().filter(|f| f.method == method).count(),
                mean_mspe: (n_ok > 0).then(|| rows.iter().map(|r| r.mspe).sum::<f64>() / n_ok as f64),
            }
        })
        .collect();
    let summary = RealDataSummary {
        seed: cfg.seed,
        bootstrap_samples: cfg.replications,
        n_train: train.n(),
        n_test: test.n(),
        columns: train.p() + 1,
        methods,
        failures: outcome.failures,
    };
    write_json(&cfg.paths.out.join("summary.json"), &summary)?;
    Manifest::new(cfg, Some(train.p() + 1)).write(&cfg.paths.out)?;
    Ok(summary)
}

/// Two-phase selection, subdata selection and the final fit on one dataset.
pub fn fit_dataset(cfg: &RunConfig, data: &Dataset) -> Result<FittedModel> {
    let k = cfg.resolve_k(data.n())?;
    cfg.varsel.validate(data.n(), data.p())?;
    let key = StreamKey::root(cfg.seed).derive("fit", 0);
    with_pool(cfg.workers, || run_method(Method::Algorithm1, data, cfg, k, &key))?.map(|r| r.model)
}

/// `fit` mode: writes `model.json` and `manifest.toml` under `paths.out`.
pub fn run_fit(cfg: &RunConfig) -> Result<FittedModel> {
    let data = load_csv(required(&cfg.paths.input, "input")?)?;
    let model = fit_dataset(cfg, &data)?;
    fs::create_dir_all(&cfg.paths.out)?;
    let mut text = model.to_json()?;
    text.push('\n');
    fs::write(cfg.paths.out.join("model.json"), text)?;
    Manifest::new(cfg, Some(data.p() + 1)).write(&cfg.paths.out)?;
    Ok(model)
}
