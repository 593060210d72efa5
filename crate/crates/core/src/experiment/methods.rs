//! The three compared pipelines.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::lasso::cv_lasso;
use crate::linalg::ols_fit;
use crate::model::{fit_final, FittedModel, ModelMeta};
use crate::rng::StreamKey;
use crate::subdata::{select, Selector};
use crate::timing::{timed, StageTimings};
use crate::varselect::{select_variables_onephase_baseline_report, select_variables_report};

use super::config::RunConfig;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Two-phase random LASSO, then the configured subdata selector.
    Algorithm1,
    /// Repeated plain LASSO on subsamples, count split, IBOSS.
    OnephaseBaseline,
    /// Cross-validated LASSO on all rows, then OLS on its support.
    FulldataLasso,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Algorithm1, Method::OnephaseBaseline, Method::FulldataLasso];

    pub fn label(&self) -> &'static str {
        match self {
            Method::Algorithm1 => "algorithm1",
            Method::OnephaseBaseline => "onephase_baseline",
            Method::FulldataLasso => "fulldata_lasso",
        }
    }

    /// Parses a comma-separated list such as `algorithm1,fulldata_lasso`.
    pub fn parse_list(s: &str) -> Result<Vec<Method>> {
        let mut out: Vec<Method> = Vec::new();
        for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let m = part.parse()?;
            if !out.contains(&m) {
                out.push(m);
            }
        }
        if out.is_empty() {
            return Err(Error::Config("empty method list".into()));
        }
        Ok(out)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.label() == s)
            .ok_or_else(|| Error::Config(format!("unknown method {s:?}")))
    }
}

/// A fitted model and the variables its selection step declared active.
#[derive(Clone, Debug, PartialEq)]
pub struct MethodRun {
    pub active: Vec<usize>,
    pub model: FittedModel,
}

fn subdata_fit(data: &Dataset, active: &[usize], selector: Selector, k: usize, timings: &mut StageTimings) -> Result<FittedModel> {
    if active.is_empty() {
        return Ok(FittedModel {
            meta: ModelMeta {
                selector: Some(selector),
                ..Default::default()
            },
            ..FittedModel::intercept_only(data.y_mean())
        });
    }
    let (selection, t) = timed(|| select(selector, &data.x.select_columns(active)?, k));
    timings.subdata = t;
    let (model, t) = timed(|| fit_final(data, active, &selection?));
    timings.final_fit = t;
    model
}

/// Runs `method` on `data` with subdata size `k`. All randomness comes from
/// `key`.
pub fn run_method(method: Method, data: &Dataset, cfg: &RunConfig, k: usize, key: &StreamKey) -> Result<MethodRun> {
    let (active, mut timings, mut model) = match method {
        Method::Algorithm1 => {
            let report = select_variables_report(data, &cfg.varsel, key)?;
            let mut timings = report.timings;
            let active = report.active.indices;
            let model = subdata_fit(data, &active, cfg.subdata.selector, k, &mut timings)?;
            (active, timings, model)
        }
        Method::OnephaseBaseline => {
            let b = &cfg.baseline;
            let report = select_variables_onephase_baseline_report(data, b.nsample, b.ntimes, cfg.varsel.folds, key)?;
            let mut timings = report.timings;
            let active = report.active.indices;
            let model = subdata_fit(data, &active, Selector::Iboss, k, &mut timings)?;
            (active, timings, model)
        }
        Method::FulldataLasso => {
            let mut timings = StageTimings::default();
            let mut rng = key.stream();
            let (cv, t) = timed(|| cv_lasso(&data.x, &data.y, cfg.varsel.folds, &mut rng));
            timings.phase1_lasso = t;
            let active = cv?.1.support();
            let (model, t) = timed(|| full_ols(data, &active));
            timings.final_fit = t;
            (active, timings, model?)
        }
    };
    if !cfg.timings {
        timings = StageTimings::default();
    }
    model.meta.timings = timings;
    model.meta.seed = Some(cfg.seed);
    Ok(MethodRun { active, model })
}

fn full_ols(data: &Dataset, active: &[usize]) -> Result<FittedModel> {
    let meta = ModelMeta {
        k: data.n(),
        ..Default::default()
    };
    if active.is_empty() {
        return Ok(FittedModel {
            meta,
            ..FittedModel::intercept_only(data.y_mean())
        });
    }
    let z = data.x.select_columns(active)?.with_intercept();
    let fit = ols_fit(&z, &data.y, false)?;
    Ok(FittedModel {
        active_indices: active.to_vec(),
        slopes: fit.coefficients[1..].to_vec(),
        intercept: fit.coefficients[0],
        meta,
    })
}
