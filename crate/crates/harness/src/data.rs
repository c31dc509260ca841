//! Feeder and scenario loading, and the train/eval split.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use voltguard::env::{ChargingEnv, EnvConfig, ScenarioData};
use voltguard::network::{read_case, RadialNetwork};

use crate::config::LoadedConfig;
use crate::error::{HarnessError, Result};

/// Everything an experiment needs, loaded once.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub network: Arc<RadialNetwork>,
    pub train: Vec<Arc<ScenarioData>>,
    pub eval: Vec<Arc<ScenarioData>>,
}

impl Dataset {
    pub fn load(cfg: &LoadedConfig) -> Result<Self> {
        let network = load_network(&cfg.case_path())?;
        let env = &cfg.config.env;
        let days = load_scenarios(&cfg.scenarios_path(), env)?;
        let (train, eval) = split(days, cfg.config.data.train_fraction);
        let ds = Self { network: Arc::new(network), train, eval };
        ds.env(env.clone())?;
        Ok(ds)
    }

    pub fn env(&self, cfg: EnvConfig) -> Result<ChargingEnv> {
        Ok(ChargingEnv::new(Arc::clone(&self.network), cfg)?)
    }

    /// Evaluation days, falling back to the training days when the split
    /// leaves none.
    pub fn eval_days(&self) -> &[Arc<ScenarioData>] {
        if self.eval.is_empty() {
            &self.train
        } else {
            &self.eval
        }
    }
}

pub fn load_network(path: &Path) -> Result<RadialNetwork> {
    read_case(path).map_err(|e| HarnessError::Data { path: path.to_path_buf(), msg: e.to_string() })
}

/// Loads every subdirectory of `dir` as one scenario, in sorted name order.
pub fn load_scenarios(dir: &Path, env: &EnvConfig) -> Result<Vec<Arc<ScenarioData>>> {
    let entries = std::fs::read_dir(dir).map_err(|e| HarnessError::Data {
        path: dir.to_path_buf(),
        msg: format!("cannot list scenario directory: {e}"),
    })?;
    let mut dirs: Vec<PathBuf> = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|e| HarnessError::io(dir, e))?;
        if entry.path().is_dir() {
            dirs.push(entry.path());
        }
    }
    dirs.sort();
    if dirs.is_empty() {
        return Err(HarnessError::Data { path: dir.to_path_buf(), msg: "no scenario subdirectories".into() });
    }
    let stations = env.stations.len();
    dirs.iter()
        .map(|d| {
            let sc = ScenarioData::load_dir(d, &env.ev, stations)
                .map_err(|e| HarnessError::Data { path: d.clone(), msg: e.to_string() })?;
            sc.validate(env.horizon, stations)
                .map_err(|e| HarnessError::Data { path: d.clone(), msg: e.to_string() })?;
            Ok(Arc::new(sc))
        })
        .collect()
}

/// Leading `ceil(fraction * n)` days train, the rest evaluate. With at least
/// two days, one is always held out.
pub fn split<T>(mut days: Vec<T>, fraction: f64) -> (Vec<T>, Vec<T>) {
    let n = days.len();
    let mut k = ((fraction * n as f64).ceil() as usize).clamp(1.min(n), n);
    if n >= 2 && k == n && fraction < 1.0 {
        k = n - 1;
    }
    let eval = days.split_off(k);
    (days, eval)
}
