//! The subcommands, as library functions returning their results and writing
//! their output files.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::Deserialize;
use voltguard::agents::{self, build_agent, load_agent, Algorithm, EvalReport, TrainConfig, TrainOutcome};
use voltguard::env::{EnvConfig, ScenarioData};
use voltguard::network::{solve_distflow, violation_metrics, InjectionProfile, RadialNetwork, ViolationMetrics};
use voltguard::nn::Checkpoint;

use crate::config::LoadedConfig;
use crate::data::{load_network, Dataset};
use crate::error::{HarnessError, Result};
use crate::generate::{synthetic_days, GeneratorConfig};
use crate::report::{self, ComparisonReport, RunRow};

pub fn run_dir(out: &Path, algorithm: Algorithm, seed: u64) -> PathBuf {
    out.join(algorithm.as_str()).join(format!("seed{seed}"))
}

/// FNV-1a over the serialized config, recorded in checkpoints.
fn config_hash(env: &EnvConfig, train: &TrainConfig) -> String {
    let text = format!("{env:?}{train:?}");
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in text.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    format!("{h:016x}")
}

/// Trains one agent on the training days.
pub fn train_run(
    ds: &Dataset,
    env_cfg: &EnvConfig,
    train_cfg: &TrainConfig,
    algorithm: Algorithm,
    seed: u64,
) -> Result<TrainOutcome> {
    let mut env = ds.env(env_cfg.clone())?;
    let mut agent = build_agent(algorithm, env.obs_dim(), env.action_dim(), env_cfg.horizon, train_cfg, seed)?;
    let mut outcome = agents::train(agent.as_mut(), &mut env, &ds.train, train_cfg, seed)?;
    let meta = &mut outcome.checkpoint.meta;
    meta.insert("seed".into(), seed.to_string());
    meta.insert("config_hash".into(), config_hash(env_cfg, train_cfg));
    Ok(outcome)
}

pub fn write_run(dir: &Path, outcome: &TrainOutcome) -> Result<()> {
    report::write_file(&dir.join("metrics.csv"), &report::metrics_csv(&outcome.metrics))?;
    report::write_file(&dir.join("checkpoint.txt"), &outcome.checkpoint.encode())
}

#[derive(Debug, Clone)]
pub struct TrainedRun {
    pub algorithm: Algorithm,
    pub seed: u64,
    pub dir: PathBuf,
    pub outcome: TrainOutcome,
}

pub fn cmd_train(cfg: &LoadedConfig, algorithms: &[Algorithm], seeds: &[u64], out: &Path) -> Result<Vec<TrainedRun>> {
    let ds = Dataset::load(cfg)?;
    let c = &cfg.config;
    let mut runs = Vec::new();
    for &algorithm in algorithms {
        for &seed in seeds {
            log::info!("training {algorithm} seed {seed} for {} episodes", c.train.episodes);
            let outcome = train_run(&ds, &c.env, &c.train, algorithm, seed)?;
            let dir = run_dir(out, algorithm, seed);
            write_run(&dir, &outcome)?;
            runs.push(TrainedRun { algorithm, seed, dir, outcome });
        }
    }
    Ok(runs)
}

pub fn read_checkpoint(path: &Path) -> Result<Checkpoint> {
    let text = std::fs::read_to_string(path).map_err(|_| HarnessError::MissingCheckpoint(path.to_path_buf()))?;
    Checkpoint::decode(&text).map_err(|e| HarnessError::Data { path: path.to_path_buf(), msg: e.to_string() })
}

/// Greedy evaluation of a checkpoint on `days`.
pub fn evaluate_checkpoint(
    ds: &Dataset,
    env_cfg: &EnvConfig,
    ck: &Checkpoint,
    days: &[Arc<ScenarioData>],
    seed: u64,
) -> Result<EvalReport> {
    let mut env = ds.env(env_cfg.clone())?;
    let agent = load_agent(ck)?;
    Ok(agents::evaluate(agent.as_ref(), &mut env, days, seed)?)
}

fn names(days: &[Arc<ScenarioData>]) -> Vec<String> {
    days.iter().map(|d| d.name.clone()).collect()
}

pub fn write_eval(dir: &Path, report: &EvalReport, days: &[Arc<ScenarioData>]) -> Result<()> {
    let n = names(days);
    report::write_file(&dir.join("eval_summary.csv"), &report::eval_summary_csv(report, &n))?;
    report::write_file(&dir.join("eval_trace.csv"), &report::eval_trace_csv(report, &n))?;
    report::write_file(&dir.join("eval_voltages.csv"), &report::eval_voltage_csv(report, &n))
}

pub fn cmd_evaluate(cfg: &LoadedConfig, checkpoint: &Path, seed: u64, out: &Path) -> Result<EvalReport> {
    let ds = Dataset::load(cfg)?;
    let ck = read_checkpoint(checkpoint)?;
    let days = ds.eval_days();
    let report = evaluate_checkpoint(&ds, &cfg.config.env, &ck, days, seed)?;
    write_eval(out, &report, days)?;
    Ok(report)
}

/// Evaluates the checkpoints under `runs` (as written by `train`) on the
/// held-out days and summarizes them per algorithm.
pub fn cmd_compare(
    cfg: &LoadedConfig,
    runs: &Path,
    algorithms: &[Algorithm],
    seeds: &[u64],
    out: &Path,
) -> Result<ComparisonReport> {
    let ds = Dataset::load(cfg)?;
    let mut checkpoints = Vec::new();
    for &a in algorithms {
        for &s in seeds {
            checkpoints.push((a, s, read_checkpoint(&run_dir(runs, a, s).join("checkpoint.txt"))?));
        }
    }
    let days = ds.eval_days();
    let mut raw = Vec::new();
    for (a, s, ck) in &checkpoints {
        let rep = evaluate_checkpoint(&ds, &cfg.config.env, ck, days, *s)?;
        write_eval(&run_dir(out, *a, *s), &rep, days)?;
        raw.push(RunRow::new(*a, *s, &rep.totals));
    }
    let report = ComparisonReport::from_runs(raw, days.len(), cfg.config.env.horizon);
    report::write_file(&out.join("comparison_runs.csv"), &report::runs_csv(&report.raw))?;
    report::write_file(&out.join("comparison.csv"), &report.summary_csv())?;
    report::write_file(&out.join("comparison.txt"), &report.table())?;
    Ok(report)
}

/// One beta point of a sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct BetaPoint {
    pub beta: f64,
    pub runs: Vec<RunRow>,
    /// Per-step VVA over all seeds' evaluation rollouts.
    pub step_vva: Vec<f64>,
    pub histogram: Vec<(f64, f64, u64)>,
}

impl BetaPoint {
    pub fn mean_vvn(&self) -> f64 {
        self.runs.iter().map(|r| r.vvn as f64).sum::<f64>() / self.runs.len().max(1) as f64
    }

    pub fn max_step_vva(&self) -> f64 {
        self.step_vva.iter().copied().fold(0.0, f64::max)
    }
}

pub fn beta_dir(out: &Path, beta: f64) -> PathBuf {
    out.join(format!("beta_{beta}"))
}

pub fn cmd_beta_sweep(cfg: &LoadedConfig, betas: &[f64], seeds: &[u64], out: &Path) -> Result<Vec<BetaPoint>> {
    if let Some(b) = betas.iter().find(|b| !(0.0..=1.0).contains(*b)) {
        return Err(HarnessError::Usage(format!("beta {b} outside [0, 1]")));
    }
    if betas.is_empty() || seeds.is_empty() {
        return Err(HarnessError::Usage("beta sweep needs at least one beta and one seed".into()));
    }
    let ds = Dataset::load(cfg)?;
    let c = &cfg.config;
    let algorithm = c.experiment.sweep_algorithm;
    let days = ds.eval_days();
    let mut points = Vec::new();
    let mut summary = String::from("beta,seed,vvn,vva,max_step_vva,cost,ud\n");
    for &beta in betas {
        let env_cfg = EnvConfig { beta, ..c.env.clone() };
        let dir = beta_dir(out, beta);
        let mut runs = Vec::new();
        let mut step_vva = Vec::new();
        for &seed in seeds {
            log::info!("beta {beta}: training {algorithm} seed {seed}");
            let outcome = train_run(&ds, &env_cfg, &c.train, algorithm, seed)?;
            write_run(&run_dir(&dir, algorithm, seed), &outcome)?;
            let rep = evaluate_checkpoint(&ds, &env_cfg, &outcome.checkpoint, days, seed)?;
            step_vva.extend(rep.traces.iter().map(|t| t.vva));
            let row = RunRow::new(algorithm, seed, &rep.totals);
            let _ = writeln!(
                summary,
                "{beta},{seed},{},{},{},{},{}",
                row.vvn, row.vva, row.max_step_vva, row.cost, row.ud
            );
            runs.push(row);
        }
        let histogram = report::vva_histogram(&step_vva, c.experiment.histogram_bin);
        report::write_file(&dir.join("histogram.csv"), &report::histogram_csv(&histogram))?;
        points.push(BetaPoint { beta, runs, step_vva, histogram });
    }
    report::write_file(&out.join("beta_sweep.csv"), &summary)?;
    Ok(points)
}

#[derive(Debug, Deserialize)]
struct InjectionRow {
    bus: usize,
    p: f64,
    q: f64,
}

/// Parses `bus,p,q` rows (per-unit withdrawals); unlisted buses are zero and
/// repeated buses accumulate.
pub fn parse_injections(text: &str, buses: usize) -> Result<InjectionProfile, String> {
    let mut inj = InjectionProfile::zeros(buses);
    for (i, row) in csv::Reader::from_reader(text.as_bytes()).deserialize::<InjectionRow>().enumerate() {
        let row = row.map_err(|e| e.to_string())?;
        if row.bus >= buses {
            return Err(format!("row {}: bus {} outside a {buses}-bus case", i + 1, row.bus));
        }
        if !row.p.is_finite() || !row.q.is_finite() {
            return Err(format!("row {}: non-finite injection", i + 1));
        }
        inj.p[row.bus] += row.p;
        inj.q[row.bus] += row.q;
    }
    Ok(inj)
}

pub fn injections_csv(inj: &InjectionProfile) -> String {
    let mut out = String::from("bus,p,q\n");
    for (b, (p, q)) in inj.p.iter().zip(&inj.q).enumerate() {
        let _ = writeln!(out, "{b},{p},{q}");
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct PowerflowResult {
    pub voltages: Vec<f64>,
    pub metrics: ViolationMetrics,
}

pub fn powerflow(net: &RadialNetwork, inj: &InjectionProfile) -> Result<PowerflowResult> {
    let sol = solve_distflow(net, inj).map_err(|e| HarnessError::Usage(e.to_string()))?;
    let metrics = violation_metrics(&sol, net);
    Ok(PowerflowResult { voltages: sol.v, metrics })
}

pub fn cmd_powerflow_check(case: &Path, injections: Option<&Path>, out: Option<&Path>) -> Result<PowerflowResult> {
    let net = load_network(case)?;
    let inj = match injections {
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| HarnessError::Data { path: p.to_path_buf(), msg: format!("cannot read: {e}") })?;
            parse_injections(&text, net.len()).map_err(|msg| HarnessError::Data { path: p.to_path_buf(), msg })?
        }
        None => InjectionProfile::zeros(net.len()),
    };
    let res = powerflow(&net, &inj)?;
    if let Some(dir) = out {
        report::write_file(&dir.join("voltages.csv"), &voltages_csv(&res))?;
    }
    Ok(res)
}

pub fn voltages_csv(res: &PowerflowResult) -> String {
    let mut out = String::from("bus,voltage\n");
    for (b, v) in res.voltages.iter().enumerate() {
        let _ = writeln!(out, "{b},{v}");
    }
    let _ = writeln!(out, "# vvn={} vva={}", res.metrics.vvn, res.metrics.vva);
    out
}

pub fn cmd_generate(cfg: &LoadedConfig, days: usize, seed: u64, out: &Path) -> Result<Vec<ScenarioData>> {
    let env = &cfg.config.env;
    let gen = GeneratorConfig { days, seed, horizon: env.horizon };
    let data = synthetic_days(&gen, &env.stations, &env.ev);
    for d in &data {
        let dir = out.join(&d.name);
        d.write_dir(&dir).map_err(|e| HarnessError::Data { path: dir.clone(), msg: e.to_string() })?;
    }
    Ok(data)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn injections_round_trip() {
        let inj = InjectionProfile { p: vec![0.0, 0.11, -0.05], q: vec![0.0, 0.02, 0.0] };
        assert_eq!(parse_injections(&injections_csv(&inj), 3).unwrap(), inj);
        assert!(parse_injections("bus,p,q\n5,0.1,0\n", 3).is_err());
        assert!(parse_injections("bus,p,q\n1,abc,0\n", 3).is_err());
        let sparse = parse_injections("bus,p,q\n2,0.1,0.0\n2,0.1,0.0\n", 3).unwrap();
        assert_eq!(sparse.p, vec![0.0, 0.0, 0.2]);
    }

    #[test]
    fn config_hash_is_stable_and_sensitive() {
        let e = EnvConfig::default();
        let t = TrainConfig::default();
        assert_eq!(config_hash(&e, &t), config_hash(&e, &t));
        let t2 = TrainConfig { episodes: 3, ..t.clone() };
        assert_ne!(config_hash(&e, &t), config_hash(&e, &t2));
    }
}
