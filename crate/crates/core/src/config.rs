//! Run configuration, read from a TOML file.
//!
//! ```toml
//! output_dir = "out"
//! ohlc = "ohlc.csv"
//!
//! [thresholds]
//! gas_coverage = 0.8
//!
//! [[chain]]
//! id = "base"
//! transactions = "base/transactions.jsonl"
//! swaps = "base/swaps.jsonl"
//! traces = "base/traces.jsonl"
//! labels = "base/labels.csv"
//! bytecode = "base/bytecode.jsonl"
//! ```
//!
//! Relative paths resolve against the directory holding the config file.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use num_bigint::BigUint;
use serde::{Deserialize, Serialize};

use crate::detector::{DetectorConfig, DustTolerance};
use crate::types::Chain;
use crate::validator::{HumanThresholds, ValidatorConfig};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("invalid config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
}

fn default_event_date() -> NaiveDate {
    NaiveDate::from_ymd_opt(2024, 3, 13).expect("valid date")
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    /// Worker threads; 0 means one per available core.
    #[serde(default)]
    pub workers: usize,
    /// Day every growth series is normalized to.
    #[serde(default = "default_event_date")]
    pub event_date: NaiveDate,
    /// Daily ETH/USD bars shared by all chains.
    #[serde(default)]
    pub ohlc: Option<PathBuf>,
    #[serde(default)]
    pub thresholds: Thresholds,
    #[serde(rename = "chain")]
    pub chains: Vec<ChainInputs>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChainInputs {
    pub id: Chain,
    pub transactions: PathBuf,
    pub swaps: PathBuf,
    pub traces: PathBuf,
    pub labels: PathBuf,
    #[serde(default)]
    pub bytecode: Option<PathBuf>,
    /// Overrides the shared OHLC file for this chain.
    #[serde(default)]
    pub ohlc: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Thresholds {
    pub dex_interaction_min: f64,
    pub eoa_max: usize,
    pub human_min_median_gap_secs: i64,
    pub human_burst_window_secs: i64,
    pub human_max_burst: usize,
    pub gas_coverage: f64,
    /// Largest token balance loss (base units) still counted as break-even.
    pub dust_epsilon: String,
    pub ngram: usize,
    pub evidence_cap: usize,
    pub allow_date_gaps: bool,
}

impl Default for Thresholds {
    fn default() -> Self {
        let v = ValidatorConfig::default();
        Thresholds {
            dex_interaction_min: v.dex_interaction_min,
            eoa_max: v.eoa_max,
            human_min_median_gap_secs: v.human.min_median_gap_secs,
            human_burst_window_secs: v.human.burst_window_secs,
            human_max_burst: v.human.max_burst,
            gas_coverage: v.gas_coverage,
            dust_epsilon: "0".into(),
            ngram: crate::similarity::DEFAULT_NGRAM,
            evidence_cap: DetectorConfig::default().evidence_cap,
            allow_date_gaps: false,
        }
    }
}

impl Thresholds {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError::Invalid(m));
        if !(0.0..=1.0).contains(&self.dex_interaction_min) {
            return bad(format!("dex_interaction_min {} outside [0, 1]", self.dex_interaction_min));
        }
        if !(self.gas_coverage > 0.0 && self.gas_coverage <= 1.0) {
            return bad(format!("gas_coverage {} outside (0, 1]", self.gas_coverage));
        }
        if self.human_min_median_gap_secs < 0 || self.human_burst_window_secs <= 0 {
            return bad("human-frequency windows must be positive".into());
        }
        if self.ngram == 0 {
            return bad("ngram must be at least 1".into());
        }
        if self.evidence_cap == 0 {
            return bad("evidence_cap must be at least 1".into());
        }
        self.dust()?;
        Ok(())
    }

    fn dust(&self) -> Result<BigUint, ConfigError> {
        self.dust_epsilon
            .trim()
            .parse()
            .map_err(|_| ConfigError::Invalid(format!("dust_epsilon `{}` is not a non-negative integer", self.dust_epsilon)))
    }

    pub fn detector(&self) -> DetectorConfig {
        DetectorConfig {
            dust: DustTolerance::uniform(self.dust().unwrap_or_default()),
            evidence_cap: self.evidence_cap,
        }
    }

    pub fn validator(&self) -> ValidatorConfig {
        ValidatorConfig {
            dex_interaction_min: self.dex_interaction_min,
            eoa_max: self.eoa_max,
            human: HumanThresholds {
                min_median_gap_secs: self.human_min_median_gap_secs,
                burst_window_secs: self.human_burst_window_secs,
                max_burst: self.human_max_burst,
            },
            gas_coverage: self.gas_coverage,
        }
    }
}

impl Config {
    pub fn from_toml(text: &str) -> Result<Config, ConfigError> {
        let cfg: Config = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads and validates a config file, resolving relative paths.
    pub fn load(path: &Path) -> Result<Config, ConfigError> {
        let text =
            std::fs::read_to_string(path).map_err(|source| ConfigError::Read { path: path.to_path_buf(), source })?;
        let mut cfg = Config::from_toml(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve(base);
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.chains.is_empty() {
            return Err(ConfigError::Invalid("no [[chain]] entries".into()));
        }
        let mut seen = BTreeSet::new();
        for c in &self.chains {
            if !seen.insert(c.id) {
                return Err(ConfigError::Invalid(format!("chain {} listed twice", c.id)));
            }
        }
        self.thresholds.validate()
    }

    pub fn resolve(&mut self, base: &Path) {
        let join = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        join(&mut self.output_dir);
        if let Some(p) = self.ohlc.as_mut() {
            join(p);
        }
        for c in &mut self.chains {
            join(&mut c.transactions);
            join(&mut c.swaps);
            join(&mut c.traces);
            join(&mut c.labels);
            if let Some(p) = c.bytecode.as_mut() {
                join(p);
            }
            if let Some(p) = c.ohlc.as_mut() {
                join(p);
            }
        }
    }

    pub fn chain_dir(&self, chain: Chain) -> PathBuf {
        self.output_dir.join(chain.as_str())
    }

    pub fn ohlc_for<'a>(&'a self, chain: &'a ChainInputs) -> Option<&'a Path> {
        chain.ohlc.as_deref().or(self.ohlc.as_deref())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }
}
