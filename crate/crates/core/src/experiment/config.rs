//! Run configuration: one TOML file with nested tables, plus the manifest
//! written next to every result set.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::simgen::SimConfig;
use crate::subdata::Selector;
use crate::varselect::VarSelectConfig;

use super::methods::Method;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    #[default]
    Simulate,
    Sweep,
    Realdata,
    Fit,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Simulate => "simulate",
            Mode::Sweep => "sweep",
            Mode::Realdata => "realdata",
            Mode::Fit => "fit",
        })
    }
}

/// A size given either as a count or as a fraction of some total, written
/// `"0.1n"` (rows) or `"0.1p"` (variables). Fractions resolve to the
/// ceiling.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SizeSpec {
    Count(usize),
    Fraction(f64, char),
}

impl SizeSpec {
    pub fn resolve(&self, total: usize) -> usize {
        match *self {
            SizeSpec::Count(c) => c,
            // Guard against products like 0.1 * 10000 landing a hair above
            // an integer.
            SizeSpec::Fraction(f, _) => (f * total as f64 - 1e-9).ceil().max(0.0) as usize,
        }
    }

    fn check_unit(&self, unit: char, what: &str) -> Result<()> {
        match *self {
            SizeSpec::Count(0) => Err(Error::Config(format!("{what} must be positive"))),
            SizeSpec::Fraction(f, u) if u != unit || !(f > 0.0 && f <= 1.0) => Err(Error::Config(format!(
                "{what} = {self} must be a count or a fraction in (0, 1] of {unit}"
            ))),
            _ => Ok(()),
        }
    }
}

impl fmt::Display for SizeSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SizeSpec::Count(c) => write!(f, "{c}"),
            SizeSpec::Fraction(x, u) => write!(f, "{x}{u}"),
        }
    }
}

impl FromStr for SizeSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let bad = || Error::Config(format!("cannot read size {s:?}; expected a count or e.g. \"0.1n\""));
        if let Ok(c) = s.parse::<usize>() {
            return Ok(SizeSpec::Count(c));
        }
        let unit = s.chars().last().ok_or_else(bad)?;
        if unit != 'n' && unit != 'p' {
            return Err(bad());
        }
        let f: f64 = s[..s.len() - 1].parse().map_err(|_| bad())?;
        if !f.is_finite() {
            return Err(bad());
        }
        Ok(SizeSpec::Fraction(f, unit))
    }
}

impl Serialize for SizeSpec {
    fn serialize<S: Serializer>(&self, ser: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            SizeSpec::Count(c) => ser.serialize_u64(*c as u64),
            other => ser.serialize_str(&other.to_string()),
        }
    }
}

impl<'de> Deserialize<'de> for SizeSpec {
    fn deserialize<D: Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Int(u64),
            Str(String),
        }
        match Raw::deserialize(de)? {
            Raw::Int(c) => Ok(SizeSpec::Count(c as usize)),
            Raw::Str(s) => s.parse().map_err(serde::de::Error::custom),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SubdataConfig {
    pub selector: Selector,
    pub k: SizeSpec,
}

impl Default for SubdataConfig {
    fn default() -> Self {
        Self {
            selector: Selector::Levss,
            k: SizeSpec::Count(1000),
        }
    }
}

/// Settings of the one-phase comparison method.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BaselineConfig {
    pub nsample: usize,
    pub ntimes: usize,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        Self { nsample: 1000, ntimes: 100 }
    }
}

/// Tuning grid for `sweep`. An empty list keeps the `varsel` value.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepGrid {
    pub n1: Vec<usize>,
    pub p_s: Vec<SizeSpec>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsConfig {
    pub out: PathBuf,
    pub train: Option<PathBuf>,
    pub test: Option<PathBuf>,
    /// Input CSV for `fit`.
    pub input: Option<PathBuf>,
    /// Write each simulated training set under `out/data/`.
    pub dump_data: bool,
}

impl Default for PathsConfig {
    fn default() -> Self {
        Self {
            out: PathBuf::from("out"),
            train: None,
            test: None,
            input: None,
            dump_data: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub mode: Mode,
    pub seed: u64,
    /// Simulation replications, or bootstrap samples for `realdata`.
    pub replications: usize,
    /// Worker threads; 0 uses every available core.
    pub workers: usize,
    /// Record wall-clock seconds. When off the `seconds` column is written
    /// as 0 and reruns are byte-identical.
    pub timings: bool,
    pub methods: Vec<Method>,
    pub sim: SimConfig,
    pub varsel: VarSelectConfig,
    pub subdata: SubdataConfig,
    pub baseline: BaselineConfig,
    pub sweep: SweepGrid,
    pub paths: PathsConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            mode: Mode::Simulate,
            seed: 1,
            replications: 100,
            workers: 0,
            timings: false,
            methods: Method::ALL.to_vec(),
            sim: SimConfig::default(),
            varsel: VarSelectConfig::default(),
            subdata: SubdataConfig::default(),
            baseline: BaselineConfig::default(),
            sweep: SweepGrid::default(),
            paths: PathsConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let value: toml::Table = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        // A manifest nests the run configuration under [config].
        let table = match (value.get("manifest"), value.get("config")) {
            (Some(_), Some(toml::Value::Table(cfg))) => cfg.clone(),
            _ => value,
        };
        table.try_into().map_err(|e: toml::de::Error| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Subdata size for a dataset of `n` rows.
    pub fn resolve_k(&self, n: usize) -> Result<usize> {
        self.subdata.k.check_unit('n', "k")?;
        let k = self.subdata.k.resolve(n);
        if k > n {
            return Err(Error::KTooLarge { k, n });
        }
        Ok(k)
    }

    /// Checks that need only the configuration and the data shape. Runs
    /// before any data generation or model fitting.
    pub fn validate(&self, n: usize, p: usize) -> Result<()> {
        self.resolve_k(n)?;
        if self.methods.is_empty() {
            return Err(Error::Config("no methods requested".into()));
        }
        if self.replications == 0 {
            return Err(Error::Config("replications must be at least 1".into()));
        }
        if self.methods.contains(&Method::Algorithm1) {
            self.varsel.validate(n, p)?;
        }
        if self.methods.contains(&Method::OnephaseBaseline) {
            let b = &self.baseline;
            if b.nsample == 0 || b.nsample > n {
                return Err(Error::InvalidSize {
                    requested: b.nsample,
                    available: n,
                });
            }
            if b.ntimes == 0 {
                return Err(Error::Config("baseline.ntimes must be at least 1".into()));
            }
        }
        for spec in &self.sweep.p_s {
            spec.check_unit('p', "sweep.p_s")?;
        }
        Ok(())
    }
}

/// Run record written as `manifest.toml`. Loading it with
/// [`RunConfig::load`] recovers the exact configuration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub manifest: ManifestInfo,
    pub config: RunConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestInfo {
    pub library_version: String,
    pub seed: u64,
    /// Columns of the input CSV (covariates plus response), if any.
    pub input_columns: Option<usize>,
}

impl Manifest {
    pub fn new(config: &RunConfig, input_columns: Option<usize>) -> Self {
        Self {
            manifest: ManifestInfo {
                library_version: env!("CARGO_PKG_VERSION").to_string(),
                seed: config.seed,
                input_columns,
            },
            config: config.clone(),
        }
    }

    pub fn write(&self, dir: &Path) -> Result<PathBuf> {
        let path = dir.join("manifest.toml");
        let text = toml::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))?;
        std::fs::write(&path, text)?;
        Ok(path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn size_spec_parsing() {
        assert_eq!("1000".parse::<SizeSpec>().unwrap(), SizeSpec::Count(1000));
        assert_eq!("0.1n".parse::<SizeSpec>().unwrap(), SizeSpec::Fraction(0.1, 'n'));
        assert!("0.1x".parse::<SizeSpec>().is_err());
        assert!("n".parse::<SizeSpec>().is_err());
        assert_eq!(SizeSpec::Fraction(0.1, 'n').resolve(52_397), 5240);
        assert_eq!(SizeSpec::Fraction(0.1, 'n').resolve(10_000), 1000);
        assert_eq!(SizeSpec::Fraction(0.1, 'n').resolve(20_000), 2000);
        assert_eq!(SizeSpec::Fraction(0.1, 'p').resolve(95), 10);
    }

    #[test]
    fn k_resolution_and_limit() {
        let mut cfg = RunConfig::default();
        cfg.subdata.k = SizeSpec::Count(500);
        assert_eq!(cfg.resolve_k(1000).unwrap(), 500);
        assert!(matches!(cfg.resolve_k(400), Err(Error::KTooLarge { k: 500, n: 400 })));
        cfg.subdata.k = SizeSpec::Fraction(0.1, 'p');
        assert!(matches!(cfg.resolve_k(400), Err(Error::Config(_))));
    }

    #[test]
    fn toml_round_trip() {
        let mut cfg = RunConfig::default();
        cfg.subdata.k = SizeSpec::Fraction(0.1, 'n');
        cfg.sweep.p_s = vec![SizeSpec::Count(5), SizeSpec::Fraction(0.1, 'p')];
        cfg.varsel.p_s = Some(10);
        cfg.paths.train = Some("a/train.csv".into());
        let text = cfg.to_toml().unwrap();
        assert_eq!(RunConfig::from_toml(&text).unwrap(), cfg);
    }

    #[test]
    fn partial_file_uses_defaults() {
        let cfg = RunConfig::from_toml("seed = 7\n[sim]\np = 100\n[subdata]\nk = \"0.1n\"\n").unwrap();
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.sim.p, 100);
        assert_eq!(cfg.sim.n, 10_000);
        assert_eq!(cfg.subdata.k, SizeSpec::Fraction(0.1, 'n'));
        assert_eq!(cfg.replications, 100);
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(RunConfig::from_toml("sede = 7\n").is_err());
        assert!(RunConfig::from_toml("[sim]\nnn = 7\n").is_err());
    }

    #[test]
    fn manifest_loads_as_config() {
        let mut cfg = RunConfig::default();
        cfg.seed = 99;
        let m = Manifest::new(&cfg, Some(281));
        let text = toml::to_string_pretty(&m).unwrap();
        assert_eq!(RunConfig::from_toml(&text).unwrap(), cfg);
    }
}
