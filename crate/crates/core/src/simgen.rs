//! Synthetic data for the simulation studies.
//!
//! Covariate rows are `x = L g` with `g ~ N(0, I_p)` and `L L^T = Sigma`,
//! optionally transformed: elementwise `exp` for log-normal rows, division by
//! `sqrt(chi2_df / df)` for multivariate t rows (Sigma acting as the scale
//! matrix), and a per-row uniform choice among N, LN, t2 and t3 for the
//! mixture. The first `p1` columns are the true actives.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::linalg::{cholesky_factor, DenseMatrix};
use crate::rng::{Stream, StreamKey};

/// Rows generated from one derived stream.
const BLOCK_ROWS: usize = 256;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CovarianceSpec {
    /// `I_p`
    Identity,
    /// `0.5 (J_p + I_p)`
    Equicorrelated,
}

impl CovarianceSpec {
    pub fn matrix(&self, p: usize) -> DenseMatrix {
        let mut s = DenseMatrix::identity(p);
        if let CovarianceSpec::Equicorrelated = self {
            for i in 0..p {
                for j in 0..p {
                    if i != j {
                        s.set(i, j, 0.5);
                    }
                }
            }
        }
        s
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum DistributionKind {
    Normal,
    LogNormal,
    T(f64),
    /// Equal-weight row mixture of N, LN, t2 and t3.
    Mixture,
}

impl fmt::Display for DistributionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DistributionKind::Normal => f.write_str("normal"),
            DistributionKind::LogNormal => f.write_str("lognormal"),
            DistributionKind::T(df) => write!(f, "t{df}"),
            DistributionKind::Mixture => f.write_str("mixture"),
        }
    }
}

impl FromStr for DistributionKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.trim().to_ascii_lowercase();
        match lower.as_str() {
            "normal" | "n" => Ok(Self::Normal),
            "lognormal" | "ln" => Ok(Self::LogNormal),
            "mixture" | "mix" => Ok(Self::Mixture),
            t if t.starts_with('t') => {
                let df: f64 = t[1..]
                    .parse()
                    .map_err(|_| Error::InvalidParam(format!("bad t distribution {s:?}")))?;
                if !(df >= 1.0) || !df.is_finite() {
                    return Err(Error::InvalidParam(format!("t degrees of freedom must be >= 1, got {df}")));
                }
                Ok(Self::T(df))
            }
            _ => Err(Error::InvalidParam(format!("unknown distribution {s:?}"))),
        }
    }
}

impl TryFrom<String> for DistributionKind {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<DistributionKind> for String {
    fn from(d: DistributionKind) -> Self {
        d.to_string()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub n: usize,
    pub p: usize,
    /// Number of true actives (the first `p1` columns).
    pub p1: usize,
    pub beta_active: f64,
    pub intercept: f64,
    pub sigma2: f64,
    pub dist: DistributionKind,
    pub cov: CovarianceSpec,
    /// Test rows per replication.
    pub n_test: usize,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            n: 10_000,
            p: 500,
            p1: 10,
            beta_active: 1.0,
            intercept: 1.0,
            sigma2: 9.0,
            dist: DistributionKind::Normal,
            cov: CovarianceSpec::Identity,
            n_test: 1000,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.p == 0 {
            return Err(Error::InvalidParam("n and p must be positive".into()));
        }
        if self.p1 > self.p {
            return Err(Error::InvalidParam(format!("p1 = {} exceeds p = {}", self.p1, self.p)));
        }
        if !(self.sigma2 >= 0.0) || !self.sigma2.is_finite() {
            return Err(Error::InvalidParam(format!("sigma2 must be >= 0, got {}", self.sigma2)));
        }
        Ok(())
    }

    /// `(intercept, beta_1..beta_p)`.
    pub fn beta_true(&self) -> Vec<f64> {
        std::iter::once(self.intercept)
            .chain((0..self.p).map(|j| if j < self.p1 { self.beta_active } else { 0.0 }))
            .collect()
    }

    pub fn true_active(&self) -> Vec<usize> {
        (0..self.p1).collect()
    }
}

#[derive(Clone, Copy)]
enum RowKind {
    Normal,
    LogNormal,
    T(f64),
}

fn draw_row(
    dist: DistributionKind,
    chol: Option<&DenseMatrix>,
    p: usize,
    rng: &mut Stream,
    g: &mut [f64],
    out: &mut [f64],
) -> Result<()> {
    let kind = match dist {
        DistributionKind::Normal => RowKind::Normal,
        DistributionKind::LogNormal => RowKind::LogNormal,
        DistributionKind::T(df) => RowKind::T(df),
        DistributionKind::Mixture => match rng.below(4) {
            0 => RowKind::Normal,
            1 => RowKind::LogNormal,
            2 => RowKind::T(2.0),
            _ => RowKind::T(3.0),
        },
    };
    g.iter_mut().for_each(|v| *v = rng.normal());
    match chol {
        None => out.copy_from_slice(g),
        Some(l) => {
            for i in 0..p {
                out[i] = l.row(i)[..=i].iter().zip(&g[..=i]).map(|(a, b)| a * b).sum();
            }
        }
    }
    match kind {
        RowKind::Normal => {}
        RowKind::LogNormal => out.iter_mut().for_each(|v| *v = v.exp()),
        RowKind::T(df) => {
            let w = (rng.chisquare(df)? / df).sqrt();
            out.iter_mut().for_each(|v| *v /= w);
        }
    }
    Ok(())
}

/// `n x p` covariates drawn in fixed blocks, each from its own stream, so the
/// output does not depend on the thread schedule.
pub fn gen_covariates(cfg: &SimConfig, n: usize, key: &StreamKey) -> Result<DenseMatrix> {
    cfg.validate()?;
    let p = cfg.p;
    let chol = match cfg.cov {
        CovarianceSpec::Identity => None,
        CovarianceSpec::Equicorrelated => Some(cholesky_factor(&cfg.cov.matrix(p))?),
    };
    let blocks = n.div_ceil(BLOCK_ROWS);
    let parts: Vec<Vec<f64>> = (0..blocks)
        .into_par_iter()
        .map(|b| {
            let rows = BLOCK_ROWS.min(n - b * BLOCK_ROWS);
            let mut rng = key.derive("rows", b as u64).stream();
            let mut values = vec![0.0; rows * p];
            let mut g = vec![0.0; p];
            for r in 0..rows {
                draw_row(cfg.dist, chol.as_ref(), p, &mut rng, &mut g, &mut values[r * p..(r + 1) * p])?;
            }
            Ok(values)
        })
        .collect::<Result<_>>()?;
    DenseMatrix::new(n, p, parts.concat())
}

/// `y_i = intercept + beta_active * sum_{j < p1} x_ij + e_i`,
/// `e_i ~ N(0, sigma2)`.
pub fn gen_response(x: &DenseMatrix, cfg: &SimConfig, key: &StreamKey) -> Result<Vec<f64>> {
    cfg.validate()?;
    if x.cols() < cfg.p1 {
        return Err(Error::DimensionMismatch(format!(
            "{} columns but p1 = {}",
            x.cols(),
            cfg.p1
        )));
    }
    let sd = cfg.sigma2.sqrt();
    let mut rng = key.derive("noise", 0).stream();
    Ok((0..x.rows())
        .map(|i| {
            let signal: f64 = x.row(i)[..cfg.p1].iter().sum();
            let e = rng.normal();
            cfg.intercept + cfg.beta_active * signal + sd * e
        })
        .collect())
}

/// Covariates and response of `n` rows.
pub fn gen_dataset(cfg: &SimConfig, n: usize, key: &StreamKey) -> Result<Dataset> {
    let x = gen_covariates(cfg, n, &key.derive("covariates", 0))?;
    let y = gen_response(&x, cfg, key)?;
    Dataset::new(x, y)
}
