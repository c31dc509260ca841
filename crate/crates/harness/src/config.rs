//! Experiment configuration: one TOML file with `[data]`, `[env]`, `[train]`
//! and `[experiment]` tables.
//!
//! Any key can be overridden from the environment as
//! `VOLTGUARD__<TABLE>__<KEY>=<toml value>`, e.g.
//! `VOLTGUARD__TRAIN__EPISODES=5` or `VOLTGUARD__ENV__BETA=0.25`.
//! Values that do not parse as TOML are taken as strings.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use voltguard::agents::{Algorithm, TrainConfig};
use voltguard::env::EnvConfig;

use crate::error::{HarnessError, Result};

pub const ENV_PREFIX: &str = "VOLTGUARD__";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    /// Feeder case file, relative to the config file.
    pub case: PathBuf,
    /// Directory holding one subdirectory per scenario day.
    pub scenarios: PathBuf,
    /// Leading fraction of days (by sorted name) used for training.
    pub train_fraction: f64,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            case: PathBuf::from("ieee33.case"),
            scenarios: PathBuf::from("scenarios"),
            train_fraction: 0.8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentSection {
    pub seeds: Vec<u64>,
    pub algorithms: Vec<Algorithm>,
    pub betas: Vec<f64>,
    /// Algorithm trained for each point of a beta sweep.
    pub sweep_algorithm: Algorithm,
    /// Width of the per-step VVA histogram bins (p.u.).
    pub histogram_bin: f64,
}

impl Default for ExperimentSection {
    fn default() -> Self {
        Self {
            seeds: vec![0, 1, 2],
            algorithms: Algorithm::ALL.to_vec(),
            betas: vec![0.0, 0.25, 0.5, 0.75, 1.0],
            sweep_algorithm: Algorithm::Sacl,
            histogram_bin: 0.005,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub data: DataConfig,
    pub env: EnvConfig,
    pub train: TrainConfig,
    pub experiment: ExperimentSection,
}

/// A parsed config together with where it came from.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub path: PathBuf,
    pub config: ExperimentConfig,
}

impl LoadedConfig {
    fn base_dir(&self) -> &Path {
        self.path.parent().unwrap_or_else(|| Path::new("."))
    }

    pub fn case_path(&self) -> PathBuf {
        self.base_dir().join(&self.config.data.case)
    }

    pub fn scenarios_path(&self) -> PathBuf {
        self.base_dir().join(&self.config.data.scenarios)
    }
}

/// Reads `path` and applies overrides from the process environment.
pub fn load_config(path: impl AsRef<Path>) -> Result<LoadedConfig> {
    load_config_with(path, std::env::vars())
}

/// Reads `path` and applies overrides from `vars` (name, value pairs).
pub fn load_config_with<I>(path: impl AsRef<Path>, vars: I) -> Result<LoadedConfig>
where
    I: IntoIterator<Item = (String, String)>,
{
    let path = path.as_ref().to_path_buf();
    let text = std::fs::read_to_string(&path).map_err(|e| HarnessError::Config {
        path: path.clone(),
        msg: format!("cannot read: {e}"),
    })?;
    let config = parse_config(&text, vars).map_err(|msg| HarnessError::Config { path: path.clone(), msg })?;
    Ok(LoadedConfig { path, config })
}

/// Parses config text; errors are plain messages naming the offending key.
pub fn parse_config<I>(text: &str, vars: I) -> Result<ExperimentConfig, String>
where
    I: IntoIterator<Item = (String, String)>,
{
    let mut table: toml::Table = toml::from_str(text).map_err(|e| e.to_string())?;
    let mut overrides: Vec<(String, String)> = vars
        .into_iter()
        .filter(|(k, _)| k.starts_with(ENV_PREFIX) && k.len() > ENV_PREFIX.len())
        .collect();
    overrides.sort();
    for (key, value) in overrides {
        apply_override(&mut table, &key[ENV_PREFIX.len()..], &value)?;
    }
    let config: ExperimentConfig = toml::Value::Table(table).try_into().map_err(|e: toml::de::Error| e.to_string())?;
    validate(&config)?;
    Ok(config)
}

fn apply_override(table: &mut toml::Table, key: &str, raw: &str) -> Result<(), String> {
    let parts: Vec<String> = key.split("__").map(|p| p.to_ascii_lowercase()).collect();
    if parts.iter().any(String::is_empty) {
        return Err(format!("malformed override {ENV_PREFIX}{key}"));
    }
    let value = toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));
    let (last, path) = parts.split_last().expect("non-empty");
    let mut cur = table;
    for p in path {
        let entry = cur.entry(p.clone()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| format!("override {ENV_PREFIX}{key}: '{p}' is not a table"))?;
    }
    cur.insert(last.clone(), value);
    Ok(())
}

fn validate(cfg: &ExperimentConfig) -> Result<(), String> {
    cfg.train.validate().map_err(|e| format!("train: {e}"))?;
    let f = cfg.data.train_fraction;
    if !(f > 0.0 && f <= 1.0) {
        return Err(format!("data.train_fraction must lie in (0, 1], got {f}"));
    }
    if cfg.experiment.seeds.is_empty() {
        return Err("experiment.seeds must not be empty".into());
    }
    if cfg.experiment.algorithms.is_empty() {
        return Err("experiment.algorithms must not be empty".into());
    }
    if let Some(b) = cfg.experiment.betas.iter().find(|b| !(0.0..=1.0).contains(*b)) {
        return Err(format!("experiment.betas: {b} outside [0, 1]"));
    }
    if !(cfg.experiment.histogram_bin > 0.0) {
        return Err("experiment.histogram_bin must be positive".into());
    }
    if !(0.0..=1.0).contains(&cfg.env.beta) {
        return Err(format!("env.beta: {} outside [0, 1]", cfg.env.beta));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vars(pairs: &[(&str, &str)]) -> Vec<(String, String)> {
        pairs.iter().map(|(a, b)| (a.to_string(), b.to_string())).collect()
    }

    #[test]
    fn empty_file_gives_defaults() {
        let cfg = parse_config("", vars(&[])).unwrap();
        assert_eq!(cfg, ExperimentConfig::default());
    }

    #[test]
    fn overrides_apply_with_toml_types() {
        let text = "[train]\nepisodes = 10\n";
        let cfg = parse_config(
            text,
            vars(&[
                ("VOLTGUARD__TRAIN__EPISODES", "3"),
                ("VOLTGUARD__ENV__BETA", "0.25"),
                ("VOLTGUARD__EXPERIMENT__SEEDS", "[4, 5]"),
                ("VOLTGUARD__DATA__CASE", "other.case"),
                ("UNRELATED", "x"),
            ]),
        )
        .unwrap();
        assert_eq!(cfg.train.episodes, 3);
        assert_eq!(cfg.env.beta, 0.25);
        assert_eq!(cfg.experiment.seeds, vec![4, 5]);
        assert_eq!(cfg.data.case, PathBuf::from("other.case"));
    }

    #[test]
    fn errors_name_the_key() {
        let err = parse_config("[train]\nepisodez = 3\n", vars(&[])).unwrap_err();
        assert!(err.contains("episodez"), "{err}");
        let err = parse_config("[env]\nbeta = 2.0\n", vars(&[])).unwrap_err();
        assert!(err.contains("env.beta"), "{err}");
        let err = parse_config("", vars(&[("VOLTGUARD__TRAIN__GAMMA", "1.5")])).unwrap_err();
        assert!(err.contains("gamma"), "{err}");
        let err = parse_config("[experiment]\nseeds = []\n", vars(&[])).unwrap_err();
        assert!(err.contains("seeds"), "{err}");
    }

    #[test]
    fn algorithms_parse_lowercase() {
        let cfg = parse_config("[experiment]\nalgorithms = [\"sacl\", \"ddpg\"]\n", vars(&[])).unwrap();
        assert_eq!(cfg.experiment.algorithms, vec![Algorithm::Sacl, Algorithm::Ddpg]);
    }
}
