//! Run configuration. Every field has a default and unknown keys are errors.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::decoder::DecoderConfig;
use crate::dmrg::DmrgConfig;
use crate::lattice::Traversal;

/// Overrides `io.output_dir`.
pub const OUTPUT_DIR_ENV: &str = "MTC_OUTPUT_DIR";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("reading {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("parsing config: {0}")]
    Parse(String),
    #[error("override `{0}` is not of the form key.path=value")]
    BadOverride(String),
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub model: ModelSection,
    pub dmrg: DmrgConfig,
    pub sampler: SamplerSection,
    pub decoder: DecoderConfig,
    pub tee: TeeSection,
    pub analysis: AnalysisSection,
    pub io: IoSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            model: ModelSection::default(),
            dmrg: DmrgConfig::default(),
            sampler: SamplerSection::default(),
            decoder: DecoderConfig::default(),
            tee: TeeSection::default(),
            analysis: AnalysisSection::default(),
            io: IoSection::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSection {
    /// Ladder widths `W`; `N = 2W`.
    pub widths: Vec<usize>,
    pub t_values: Vec<f64>,
    pub lambda: f64,
    pub traversal: Traversal,
}

impl Default for ModelSection {
    fn default() -> Self {
        Self {
            widths: vec![4, 6],
            // 0, 0.05, …, 1.5
            t_values: (0..=30).map(|i| i as f64 / 20.0).collect(),
            lambda: 10.0,
            traversal: Traversal::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SamplerSection {
    /// Trajectories per cell unless `trajectories_by_size` names `N`.
    pub trajectories: usize,
    /// Keyed by `N` as a string, e.g. `{ "14" = 1000 }`.
    pub trajectories_by_size: BTreeMap<String, usize>,
    pub seed: u64,
    pub max_leakage_attempts: usize,
}

impl Default for SamplerSection {
    fn default() -> Self {
        Self {
            trajectories: 100,
            trajectories_by_size: BTreeMap::new(),
            seed: 0,
            max_leakage_attempts: 100,
        }
    }
}

impl SamplerSection {
    pub fn trajectories_for(&self, n: usize) -> usize {
        self.trajectories_by_size.get(&n.to_string()).copied().unwrap_or(self.trajectories)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TeeSection {
    pub enabled: bool,
    pub widths: Vec<usize>,
    pub t_values: Vec<f64>,
    /// Memory allowance for one leg density matrix, in bytes.
    pub memory_budget: usize,
}

impl Default for TeeSection {
    fn default() -> Self {
        Self {
            enabled: true,
            widths: vec![4, 5, 6, 7],
            t_values: vec![0.0],
            memory_budget: crate::tee::DEFAULT_MEMORY_BUDGET,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnalysisSection {
    pub t_min: f64,
    pub t_max: f64,
    pub bootstrap: usize,
    pub seed: u64,
    /// Hopping strengths for the `d_tot/N` against `1/N` table.
    pub normalized_t: Vec<f64>,
}

impl Default for AnalysisSection {
    fn default() -> Self {
        Self {
            t_min: 0.0,
            t_max: 1.5,
            bootstrap: crate::analysis::BOOTSTRAP_RESAMPLES,
            seed: 0,
            normalized_t: vec![0.2, 1.2],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IoSection {
    pub output_dir: PathBuf,
    /// Rewrite the manifest and `depth.csv` after this many finished cells.
    pub checkpoint_every: usize,
}

impl Default for IoSection {
    fn default() -> Self {
        Self {
            output_dir: PathBuf::from("results"),
            checkpoint_every: 4,
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let cfg: Self = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_owned(),
            source,
        })?;
        Self::from_toml(&text)
    }

    /// File (or defaults), then the output-directory variable, then
    /// `key.path=value` overrides whose values are TOML literals.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self, ConfigError> {
        let mut table: toml::Table = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|source| ConfigError::Io {
                    path: p.to_owned(),
                    source,
                })?;
                toml::from_str(&text).map_err(|e: toml::de::Error| ConfigError::Parse(e.to_string()))?
            }
            None => toml::Table::new(),
        };
        if let Ok(dir) = std::env::var(OUTPUT_DIR_ENV) {
            set_path(&mut table, "io.output_dir", toml::Value::String(dir))?;
        }
        for o in overrides {
            let (key, raw) = o.split_once('=').ok_or_else(|| ConfigError::BadOverride(o.clone()))?;
            let value = parse_value(raw.trim()).ok_or_else(|| ConfigError::BadOverride(o.clone()))?;
            set_path(&mut table, key.trim(), value)?;
        }
        let cfg: Self = toml::Value::Table(table).try_into().map_err(|e: toml::de::Error| ConfigError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError::Invalid(m));
        if let Some(w) = self.model.widths.iter().find(|&&w| w < 2) {
            return bad(format!("width {w} is below 2"));
        }
        if let Some(t) = self.model.t_values.iter().chain(&self.tee.t_values).find(|t| !(t.is_finite() && **t >= 0.0)) {
            return bad(format!("hopping strength {t} must be finite and non-negative"));
        }
        if !(self.model.lambda.is_finite() && self.model.lambda >= 0.0) {
            return bad(format!("lambda {}", self.model.lambda));
        }
        if self.dmrg.chi_schedule.is_empty() || self.dmrg.chi_schedule.contains(&0) {
            return bad("dmrg.chi_schedule needs positive entries".into());
        }
        if self.sampler.max_leakage_attempts == 0 {
            return bad("sampler.max_leakage_attempts must be positive".into());
        }
        for k in self.sampler.trajectories_by_size.keys() {
            if k.parse::<usize>().is_err() {
                return bad(format!("sampler.trajectories_by_size key `{k}` is not a size"));
            }
        }
        if !(self.analysis.t_max > self.analysis.t_min) {
            return bad("analysis.t_max must exceed analysis.t_min".into());
        }
        if self.io.checkpoint_every == 0 {
            return bad("io.checkpoint_every must be positive".into());
        }
        Ok(())
    }
}

fn parse_value(raw: &str) -> Option<toml::Value> {
    // bare words are taken as strings
    match toml::from_str::<toml::Table>(&format!("v = {raw}")) {
        Ok(doc) => doc.get("v").cloned(),
        Err(_) => (!raw.is_empty()).then(|| toml::Value::String(raw.to_owned())),
    }
}

fn set_path(table: &mut toml::Table, key: &str, value: toml::Value) -> Result<(), ConfigError> {
    let mut parts: Vec<&str> = key.split('.').collect();
    let last = parts.pop().filter(|s| !s.is_empty()).ok_or_else(|| ConfigError::BadOverride(key.into()))?;
    let mut cur = table;
    for p in parts {
        let entry = cur.entry(p.to_owned()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry.as_table_mut().ok_or_else(|| ConfigError::BadOverride(key.into()))?;
    }
    cur.insert(last.to_owned(), value);
    Ok(())
}
