//! Delimited output files and their loaders.
//!
//! Floats are written with Rust's shortest round-trip formatting, so every
//! file reads back to the identical values.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use voltguard::agents::{Algorithm, EpisodeMetrics, EvalReport, EvalTotals};

use crate::error::{HarnessError, Result};

pub const METRICS_HEADER: &str = "episode,reward,cost,ud,vvn,vva,lambda,alpha";

pub fn write_file(path: &Path, body: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
    }
    std::fs::write(path, body).map_err(|e| HarnessError::io(path, e))
}

fn read_file(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))
}

fn data_err(path: &Path, e: impl std::fmt::Display) -> HarnessError {
    HarnessError::Data { path: path.to_path_buf(), msg: e.to_string() }
}

pub fn metrics_csv(rows: &[EpisodeMetrics]) -> String {
    let mut out = format!("{METRICS_HEADER}\n");
    for m in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            m.episode, m.reward, m.cost, m.ud, m.vvn, m.vva, m.lambda, m.alpha
        );
    }
    out
}

#[derive(Debug, Deserialize)]
struct MetricsRow {
    episode: usize,
    reward: f64,
    cost: f64,
    ud: f64,
    vvn: u64,
    vva: f64,
    lambda: f64,
    alpha: f64,
}

pub fn parse_metrics(text: &str) -> Result<Vec<EpisodeMetrics>, csv::Error> {
    csv::Reader::from_reader(text.as_bytes())
        .deserialize::<MetricsRow>()
        .map(|r| {
            r.map(|r| EpisodeMetrics {
                episode: r.episode,
                reward: r.reward,
                cost: r.cost,
                ud: r.ud,
                vvn: r.vvn,
                vva: r.vva,
                lambda: r.lambda,
                alpha: r.alpha,
            })
        })
        .collect()
}

pub fn read_metrics(path: &Path) -> Result<Vec<EpisodeMetrics>> {
    parse_metrics(&read_file(path)?).map_err(|e| data_err(path, e))
}

/// Per-scenario rows plus a final `all` row.
pub fn eval_summary_csv(report: &EvalReport, names: &[String]) -> String {
    let mut out = String::from("scenario,steps,cost,ud,vvn,vva,max_step_vva\n");
    let row = |out: &mut String, name: &str, t: &EvalTotals| {
        let _ = writeln!(out, "{name},{},{},{},{},{},{}", t.steps, t.cost, t.ud, t.vvn, t.vva, t.max_step_vva);
    };
    for (i, t) in report.per_scenario.iter().enumerate() {
        row(&mut out, names.get(i).map_or("?", String::as_str), t);
    }
    row(&mut out, "all", &report.totals);
    out
}

pub fn eval_trace_csv(report: &EvalReport, names: &[String]) -> String {
    let stations = report.traces.first().map_or(0, |t| t.station_net_kw.len());
    let mut out = String::from("scenario,t,cost,vvn,vva,min_voltage,buy,sell,solar_kw");
    for s in 0..stations {
        let _ = write!(out, ",station{s}_kw");
    }
    out.push('\n');
    for tr in &report.traces {
        let name = names.get(tr.scenario).map_or("?", String::as_str);
        let _ = write!(
            out,
            "{name},{},{},{},{},{},{},{},{}",
            tr.t, tr.cost, tr.vvn, tr.vva, tr.min_voltage, tr.buy, tr.sell, tr.solar_kw
        );
        for p in &tr.station_net_kw {
            let _ = write!(out, ",{p}");
        }
        out.push('\n');
    }
    out
}

pub fn eval_voltage_csv(report: &EvalReport, names: &[String]) -> String {
    let buses = report.traces.first().map_or(0, |t| t.voltages.len());
    let mut out = String::from("scenario,t");
    for b in 0..buses {
        let _ = write!(out, ",v{b}");
    }
    out.push('\n');
    for tr in &report.traces {
        let _ = write!(out, "{},{}", names.get(tr.scenario).map_or("?", String::as_str), tr.t);
        for v in &tr.voltages {
            let _ = write!(out, ",{v}");
        }
        out.push('\n');
    }
    out
}

/// One evaluated (algorithm, seed) run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRow {
    pub run_id: String,
    pub algorithm: Algorithm,
    pub seed: u64,
    pub steps: usize,
    pub cost: f64,
    pub ud: f64,
    pub vvn: u64,
    pub vva: f64,
    pub max_step_vva: f64,
}

impl RunRow {
    pub fn new(algorithm: Algorithm, seed: u64, t: &EvalTotals) -> Self {
        Self {
            run_id: format!("{algorithm}/seed{seed}"),
            algorithm,
            seed,
            steps: t.steps,
            cost: t.cost,
            ud: t.ud,
            vvn: t.vvn,
            vva: t.vva,
            max_step_vva: t.max_step_vva,
        }
    }
}

pub fn runs_csv(rows: &[RunRow]) -> String {
    let mut out = String::from("run_id,algorithm,seed,steps,cost,ud,vvn,vva,max_step_vva\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            r.run_id, r.algorithm, r.seed, r.steps, r.cost, r.ud, r.vvn, r.vva, r.max_step_vva
        );
    }
    out
}

pub fn parse_runs(text: &str) -> Result<Vec<RunRow>, csv::Error> {
    csv::Reader::from_reader(text.as_bytes()).deserialize().collect()
}

/// Mean and min-max spread of one column over seeds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Spread {
    pub mean: f64,
    pub min: f64,
    pub max: f64,
}

impl Spread {
    pub fn of(values: &[f64]) -> Self {
        if values.is_empty() {
            return Self { mean: f64::NAN, min: f64::NAN, max: f64::NAN };
        }
        let mean = values.iter().sum::<f64>() / values.len() as f64;
        let min = values.iter().copied().fold(f64::INFINITY, f64::min);
        let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Self { mean, min, max }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub algorithm: Algorithm,
    pub runs: Vec<String>,
    pub cost: Spread,
    pub ud: Spread,
    pub vvn: Spread,
    pub vva: Spread,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonReport {
    pub rows: Vec<SummaryRow>,
    pub raw: Vec<RunRow>,
    /// Scenario days and steps per day behind every cell.
    pub days: usize,
    pub steps_per_day: usize,
}

impl ComparisonReport {
    pub fn from_runs(raw: Vec<RunRow>, days: usize, steps_per_day: usize) -> Self {
        let mut algs: Vec<Algorithm> = raw.iter().map(|r| r.algorithm).collect();
        algs.sort();
        algs.dedup();
        let rows = algs
            .into_iter()
            .map(|a| {
                let sel: Vec<&RunRow> = raw.iter().filter(|r| r.algorithm == a).collect();
                let col = |f: fn(&RunRow) -> f64| Spread::of(&sel.iter().map(|r| f(r)).collect::<Vec<_>>());
                SummaryRow {
                    algorithm: a,
                    runs: sel.iter().map(|r| r.run_id.clone()).collect(),
                    cost: col(|r| r.cost),
                    ud: col(|r| r.ud),
                    vvn: col(|r| r.vvn as f64),
                    vva: col(|r| r.vva),
                }
            })
            .collect();
        Self { rows, raw, days, steps_per_day }
    }

    pub fn row(&self, a: Algorithm) -> Option<&SummaryRow> {
        self.rows.iter().find(|r| r.algorithm == a)
    }

    pub fn summary_csv(&self) -> String {
        let mut out = String::from("algorithm,runs");
        for c in ["cost", "ud", "vvn", "vva"] {
            let _ = write!(out, ",{c}_mean,{c}_min,{c}_max");
        }
        out.push('\n');
        for r in &self.rows {
            let _ = write!(out, "{},{}", r.algorithm, r.runs.join(";"));
            for s in [r.cost, r.ud, r.vvn, r.vva] {
                let _ = write!(out, ",{},{},{}", s.mean, s.min, s.max);
            }
            out.push('\n');
        }
        out
    }

    pub fn table(&self) -> String {
        let mut out = format!(
            "evaluation horizon: {} day(s) x {} steps per run\n{:<6} {:>22} {:>22} {:>18} {:>20}\n",
            self.days, self.steps_per_day, "algo", "cost ($)", "UD (kWh)", "VVN", "VVA (p.u.)"
        );
        let cell = |s: Spread, p: usize| format!("{:.p$} [{:.p$}, {:.p$}]", s.mean, s.min, s.max);
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{:<6} {:>22} {:>22} {:>18} {:>20}",
                r.algorithm.as_str(),
                cell(r.cost, 1),
                cell(r.ud, 1),
                cell(r.vvn, 0),
                cell(r.vva, 3)
            );
        }
        out
    }
}

/// Counts of strictly positive per-step VVA values in bins of `width`,
/// starting at zero. Returns an empty vector when no step violates.
pub fn vva_histogram(values: &[f64], width: f64) -> Vec<(f64, f64, u64)> {
    let positive: Vec<f64> = values.iter().copied().filter(|v| *v > 0.0).collect();
    let Some(max) = positive.iter().copied().reduce(f64::max) else {
        return Vec::new();
    };
    let bins = (max / width).floor() as usize + 1;
    let mut counts = vec![0u64; bins];
    for v in positive {
        counts[((v / width).floor() as usize).min(bins - 1)] += 1;
    }
    counts
        .into_iter()
        .enumerate()
        .map(|(i, c)| (i as f64 * width, (i + 1) as f64 * width, c))
        .collect()
}

pub fn histogram_csv(hist: &[(f64, f64, u64)]) -> String {
    let mut out = String::from("bin_lo,bin_hi,count\n");
    for (lo, hi, c) in hist {
        let _ = writeln!(out, "{lo},{hi},{c}");
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn metrics_round_trip_bit_exact() {
        let rows = vec![
            EpisodeMetrics { episode: 1, reward: -12.345678901234567, cost: 0.1 + 0.2, ud: 1e-17, vvn: 3, vva: 0.0123, lambda: 0.0, alpha: 0.2 },
            EpisodeMetrics { episode: 2, reward: f64::MIN_POSITIVE, cost: 1e300, ud: 0.0, vvn: 0, vva: 5.0, lambda: 1.0 / 3.0, alpha: 1e-9 },
        ];
        let back = parse_metrics(&metrics_csv(&rows)).unwrap();
        assert_eq!(back, rows);
    }

    #[test]
    fn runs_round_trip() {
        let t = EvalTotals { cost: 926.125, ud: 411.2, vvn: 294, vva: 0.915, max_step_vva: 0.07, steps: 48 };
        let rows = vec![RunRow::new(Algorithm::Sacl, 0, &t), RunRow::new(Algorithm::Ddpg, 2, &t)];
        assert_eq!(parse_runs(&runs_csv(&rows)).unwrap(), rows);
    }

    #[test]
    fn histogram_bins() {
        let h = vva_histogram(&[0.0, 0.001, 0.0049, 0.005, 0.012], 0.005);
        assert_eq!(h.len(), 3);
        assert_eq!(h.iter().map(|x| x.2).collect::<Vec<_>>(), vec![2, 1, 1]);
        assert!(vva_histogram(&[0.0, 0.0], 0.005).is_empty());
    }

    #[test]
    fn summary_single_algorithm() {
        let t = EvalTotals { cost: 10.0, ud: 1.0, vvn: 2, vva: 0.5, max_step_vva: 0.1, steps: 24 };
        let t2 = EvalTotals { cost: 20.0, ..t };
        let rep = ComparisonReport::from_runs(
            vec![RunRow::new(Algorithm::Sac, 0, &t), RunRow::new(Algorithm::Sac, 1, &t2)],
            1,
            24,
        );
        assert_eq!(rep.rows.len(), 1);
        assert_eq!(rep.rows[0].cost, Spread { mean: 15.0, min: 10.0, max: 20.0 });
        assert_eq!(rep.summary_csv().lines().count(), 2);
    }
}
