use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use voltguard::agents::evaluate_with;
use voltguard::env::{ActionVector, ChargingEnv};
use voltguard::network::read_case;
use voltguard_harness::commands::injections_csv;
use voltguard_harness::report::{parse_metrics, parse_runs};
use voltguard_harness::{load_config_with, Dataset};

fn root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn voltguard(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_voltguard"))
        .args(args)
        .current_dir(root())
        .env("RUST_LOG", "warn")
        .output()
        .expect("spawn voltguard")
}

fn ok(args: &[&str]) -> String {
    let out = voltguard(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> String {
    p.to_string_lossy().into_owned()
}

fn parse_voltages(text: &str) -> Vec<f64> {
    text.lines()
        .skip(1)
        .filter(|l| !l.starts_with('#'))
        .map(|l| l.split(',').nth(1).unwrap().parse().unwrap())
        .collect()
}

fn copy_dir(from: &Path, to: &Path) {
    std::fs::create_dir_all(to).unwrap();
    for e in std::fs::read_dir(from).unwrap() {
        let p = e.unwrap().path();
        let dest = to.join(p.file_name().unwrap());
        if p.is_dir() {
            copy_dir(&p, &dest);
        } else {
            std::fs::copy(&p, &dest).unwrap();
        }
    }
}

#[test]
fn micro_training_writes_metrics_and_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("runs");
    ok(&["train", "--config", "configs/micro.toml", "--algorithm", "sacl", "--seeds", "0", "--out", &s(&out)]);
    let run = out.join("sacl/seed0");
    let text = std::fs::read_to_string(run.join("metrics.csv")).unwrap();
    assert!(text.starts_with("episode,reward,cost,ud,vvn,vva,lambda,alpha\n"));
    let rows = parse_metrics(&text).unwrap();
    assert_eq!(rows.len(), 2);
    assert!(rows.iter().all(|r| r.reward.is_finite() && r.lambda >= 0.0));
    assert!(run.join("checkpoint.txt").exists());
}

#[test]
fn missing_prices_exits_with_usage_code_naming_the_file() {
    let dir = tempfile::tempdir().unwrap();
    copy_dir(&root().join("data/micro"), &dir.path().join("days"));
    std::fs::copy(root().join("data/micro.case"), dir.path().join("micro.case")).unwrap();
    let missing = dir.path().join("days/day01/prices.csv");
    std::fs::remove_file(&missing).unwrap();
    let cfg = std::fs::read_to_string(root().join("configs/micro.toml"))
        .unwrap()
        .replace("../data/micro.case", "micro.case")
        .replace("../data/micro", "days");
    let cfg_path = dir.path().join("micro.toml");
    std::fs::write(&cfg_path, cfg).unwrap();

    let out = voltguard(&["train", "--config", &s(&cfg_path), "--out", &s(&dir.path().join("o"))]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("day01"), "{err}");
    assert!(err.contains("prices.csv"), "{err}");
}

#[test]
fn unknown_config_key_and_missing_checkpoint_exit_with_code_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "[train]\nepisodez = 3\n").unwrap();
    let out = voltguard(&["train", "--config", &s(&cfg), "--out", &s(dir.path())]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("episodez"));

    let out = voltguard(&[
        "evaluate",
        "--config",
        "configs/micro.toml",
        "--checkpoint",
        &s(&dir.path().join("nope.txt")),
        "--out",
        &s(dir.path()),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("nope.txt"));
}

#[test]
fn powerflow_without_injections_is_flat() {
    let v = parse_voltages(&ok(&["powerflow-check", "--case", "data/ieee33.case"]));
    assert_eq!(v.len(), 33);
    assert!(v.iter().all(|&x| x == 1.0));
}

/// A single withdrawal `p` at bus `k` lowers bus `m` by `p` times the
/// resistance shared by the root paths of `k` and `m`.
#[test]
fn single_withdrawal_matches_shared_path_resistance() {
    let net = read_case(root().join("data/ieee33.case")).unwrap();
    let (k, p) = (30, 0.11);
    let dir = tempfile::tempdir().unwrap();
    let inj = dir.path().join("inj.csv");
    std::fs::write(&inj, format!("bus,p,q\n{k},{p},0\n")).unwrap();
    let v = parse_voltages(&ok(&["powerflow-check", "--case", "data/ieee33.case", "--injections", &s(&inj)]));

    let path = |mut b: usize| {
        let mut out = vec![b];
        while let Some(parent) = net.bus(b).unwrap().parent {
            out.push(parent);
            b = parent;
        }
        out
    };
    let to_k = path(k);
    for m in 0..net.len() {
        let shared: f64 = path(m).iter().filter(|b| to_k.contains(b)).map(|&b| net.bus(b).unwrap().r).sum();
        let want = net.v0() - p * shared / net.v0();
        assert!((v[m] - want).abs() < 1e-12, "bus {m}: {} vs {want}", v[m]);
    }
    assert!(v[k] < v[1] && v[1] < 1.0);
}

#[test]
fn step_injections_replay_to_the_same_voltages() {
    let cfg = load_config_with(root().join("configs/ieee33.toml"), Vec::new()).unwrap();
    let ds = Dataset::load(&cfg).unwrap();
    let mut env = ds.env(cfg.config.env.clone()).unwrap();
    env.reset(Arc::clone(&ds.train[0]), 3).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let dir = tempfile::tempdir().unwrap();
    for t in 0..24 {
        let a = ActionVector {
            charger: (0..env.n_chargers()).map(|_| rng.random_range(-1.0..=1.0)).collect(),
            trade: (0..env.n_stations()).map(|_| rng.random_range(0.0..=1.0)).collect(),
        };
        let info = env.step(&a).unwrap().info;
        if t % 6 != 5 {
            continue;
        }
        let file = dir.path().join(format!("inj{t}.csv"));
        std::fs::write(&file, injections_csv(&info.injections)).unwrap();
        let v = parse_voltages(&ok(&["powerflow-check", "--case", "data/ieee33.case", "--injections", &s(&file)]));
        assert_eq!(v, info.voltages, "step {t}");
    }
}

#[test]
fn compare_with_one_algorithm_gives_one_row() {
    let dir = tempfile::tempdir().unwrap();
    let runs = dir.path().join("runs");
    let cmp = dir.path().join("cmp");
    ok(&["train", "--config", "configs/micro.toml", "--algorithm", "sac", "--seeds", "0,1", "--out", &s(&runs)]);
    ok(&[
        "compare", "--config", "configs/micro.toml", "--runs", &s(&runs), "--algorithm", "sac", "--seeds", "0,1",
        "--out", &s(&cmp),
    ]);
    let summary = std::fs::read_to_string(cmp.join("comparison.csv")).unwrap();
    let lines: Vec<&str> = summary.lines().collect();
    assert_eq!(lines.len(), 2, "{summary}");
    assert!(lines[1].starts_with("sac,sac/seed0;sac/seed1,"));
    let raw = parse_runs(&std::fs::read_to_string(cmp.join("comparison_runs.csv")).unwrap()).unwrap();
    assert_eq!(raw.len(), 2);
    let table = std::fs::read_to_string(cmp.join("comparison.txt")).unwrap();
    assert!(table.starts_with("evaluation horizon: 1 day(s) x 24 steps per run"), "{table}");
}

#[test]
fn beta_sweep_writes_one_histogram_per_beta_and_none_without_violations() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("beta");
    ok(&["beta-sweep", "--config", "configs/micro.toml", "--betas", "0,0.5,1", "--seeds", "0", "--out", &s(&out)]);
    for b in ["0", "0.5", "1"] {
        // The two-bus feeder never leaves its voltage band.
        let h = std::fs::read_to_string(out.join(format!("beta_{b}/histogram.csv"))).unwrap();
        assert_eq!(h, "bin_lo,bin_hi,count\n");
    }
    let summary = std::fs::read_to_string(out.join("beta_sweep.csv")).unwrap();
    assert_eq!(summary.lines().count(), 4);
}

#[test]
fn evaluation_is_repeatable() {
    let dir = tempfile::tempdir().unwrap();
    let runs = dir.path().join("runs");
    ok(&["train", "--config", "configs/micro.toml", "--algorithm", "ddpg", "--seeds", "0", "--out", &s(&runs)]);
    let ck = runs.join("ddpg/seed0/checkpoint.txt");
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for o in [&a, &b] {
        ok(&["evaluate", "--config", "configs/micro.toml", "--checkpoint", &s(&ck), "--seed", "4", "--out", &s(o)]);
    }
    for f in ["eval_summary.csv", "eval_trace.csv", "eval_voltages.csv"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f}");
    }
}

/// With every charger idle and no trading, the cost of a day is the full
/// unfinished-demand penalty minus solar sold at the wholesale price.
#[test]
fn idle_rollout_cost_matches_closed_form() {
    let cfg = load_config_with(root().join("configs/ieee33.toml"), Vec::new()).unwrap();
    let ds = Dataset::load(&cfg).unwrap();
    let env_cfg = cfg.config.env.clone();
    let mut env = ChargingEnv::new(Arc::clone(&ds.network), env_cfg.clone()).unwrap();
    let days: Vec<_> = ds.train.iter().chain(&ds.eval).cloned().collect();
    let (nc, ns) = (env.n_chargers(), env.n_stations());
    let report = evaluate_with(&mut env, &days, 0, |_| Ok(ActionVector::zeros(nc, ns))).unwrap();
    assert_eq!(env.dropped_arrivals(), 0);

    for (i, day) in days.iter().enumerate() {
        let penalty: f64 = day.sessions.iter().map(|x| env_cfg.sigma * (x.session.e_dem - x.session.e_init).max(0.0)).sum();
        let kwp: f64 = env_cfg.stations.iter().map(|st| st.pv_kwp).sum();
        let solar: f64 = (0..env_cfg.horizon).map(|t| day.solar[t] * kwp * env_cfg.dt * day.sell[t]).sum();
        let want = penalty - solar;
        let got = report.per_scenario[i].cost;
        assert!((got - want).abs() < 1e-9, "{}: {got} vs {want}", day.name);
        let ud: f64 = day.sessions.iter().map(|x| (x.session.e_dem - x.session.e_init).max(0.0)).sum();
        assert!((report.per_scenario[i].ud - ud).abs() < 1e-9);
    }
}
