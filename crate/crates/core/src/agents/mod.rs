//! Off-policy agents over the charging CMDP and the shared train/evaluate loops.

mod ddpg;
mod soft;

pub use ddpg::DdpgAgent;
pub use soft::{cost_target, project_lambda, soft_target, Constraint, Critic, Multiplier, PolicyEval, SoftAgent};

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use ndarray::Array2;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::env::{ActionVector, ChargingEnv, EnvError, ScenarioData};
use crate::nn::{Batch, Checkpoint, NnError, ReplayBuffer, Transition};

#[derive(Debug, Error)]
pub enum AgentError {
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error("state has {got} features, agent expects {expected}")]
    StateDim { expected: usize, got: usize },
    #[error("non-finite state feature {0}")]
    NonFiniteState(usize),
    #[error("config: {0}")]
    Config(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Sacl,
    Sac,
    Ddpg,
}

impl Algorithm {
    pub const ALL: [Algorithm; 3] = [Algorithm::Sacl, Algorithm::Sac, Algorithm::Ddpg];

    pub fn as_str(&self) -> &'static str {
        match self {
            Algorithm::Sacl => "sacl",
            Algorithm::Sac => "sac",
            Algorithm::Ddpg => "ddpg",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Algorithm {
    type Err = AgentError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "sacl" => Ok(Algorithm::Sacl),
            "sac" => Ok(Algorithm::Sac),
            "ddpg" => Ok(Algorithm::Ddpg),
            other => Err(AgentError::Config(format!("unknown algorithm '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ActMode {
    Explore,
    Greedy,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LambdaMode {
    Scalar,
    Network,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub episodes: usize,
    pub gamma: f64,
    /// Polyak rate for target networks.
    pub tau: f64,
    pub lr_actor: f64,
    pub lr_critic: f64,
    pub lr_alpha: f64,
    pub lr_lambda: f64,
    pub init_alpha: f64,
    pub init_lambda: f64,
    /// Per-episode auxiliary-cost budget `d`.
    pub cost_budget: f64,
    /// Fixed violation penalty weight for the SAC baseline.
    pub penalty_weight: f64,
    pub hidden: usize,
    pub batch_size: usize,
    pub buffer_capacity: usize,
    pub warmup_steps: usize,
    pub updates_per_step: usize,
    pub twin_critics: bool,
    pub lambda_mode: LambdaMode,
    /// Defaults to `-action_dim` when absent.
    pub target_entropy: Option<f64>,
    pub ddpg_noise: f64,
    /// Scale of the final policy layer at initialization.
    pub policy_init_scale: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            episodes: 100,
            gamma: 0.99,
            tau: 0.005,
            lr_actor: 3e-4,
            lr_critic: 3e-4,
            lr_alpha: 3e-4,
            lr_lambda: 1e-3,
            init_alpha: 0.2,
            init_lambda: 0.0,
            cost_budget: 2.0,
            penalty_weight: 1.0,
            hidden: 256,
            batch_size: 256,
            buffer_capacity: 100_000,
            warmup_steps: 1000,
            updates_per_step: 1,
            twin_critics: true,
            lambda_mode: LambdaMode::Scalar,
            target_entropy: None,
            ddpg_noise: 0.1,
            policy_init_scale: 1e-3,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), AgentError> {
        let bad = |m: &str| Err(AgentError::Config(m.to_string()));
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return bad("gamma must lie in (0, 1)");
        }
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return bad("tau must lie in (0, 1]");
        }
        if self.hidden == 0 || self.batch_size == 0 || self.buffer_capacity < self.batch_size {
            return bad("hidden and batch_size must be positive and buffer_capacity >= batch_size");
        }
        let rates = [self.lr_actor, self.lr_critic, self.lr_alpha, self.lr_lambda];
        if rates.iter().any(|r| !(*r > 0.0)) {
            return bad("learning rates must be positive");
        }
        if !(self.init_alpha > 0.0) || !(self.init_lambda >= 0.0) {
            return bad("init_alpha must be positive and init_lambda non-negative");
        }
        if !(self.cost_budget >= 0.0 && self.penalty_weight >= 0.0 && self.ddpg_noise >= 0.0) {
            return bad("cost_budget, penalty_weight and ddpg_noise must be non-negative");
        }
        Ok(())
    }

    /// Per-episode budget `d` as a constant per-step cost rate: the `c` whose
    /// discounted sum over `horizon` steps equals `d`. The multiplier update
    /// compares the batch-mean cost critic against this value.
    pub fn cost_threshold(&self, horizon: usize) -> f64 {
        let h = horizon.max(1) as f64;
        self.cost_budget * (1.0 - self.gamma) / (1.0 - self.gamma.powf(h))
    }
}

/// Per-update statistics.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Diagnostics {
    pub critic_loss: f64,
    pub cost_critic_loss: f64,
    pub policy_loss: f64,
    pub alpha: f64,
    pub lambda: f64,
    pub mean_q: f64,
    pub mean_qc: f64,
    pub entropy: f64,
}

/// Common surface of the three agents.
pub trait Agent {
    fn algorithm(&self) -> Algorithm;

    /// Action in `(-1, 1)^k`; map with [`ActionVector::from_unit`].
    fn act(&self, state: &[f64], mode: ActMode, rng: &mut ChaCha8Rng) -> Result<Vec<f64>, AgentError>;

    fn update_on_batch(&mut self, batch: &Batch, rng: &mut ChaCha8Rng) -> Result<Diagnostics, AgentError>;

    fn update(&mut self, buffer: &ReplayBuffer, rng: &mut ChaCha8Rng) -> Result<Diagnostics, AgentError> {
        let batch = buffer.sample(self.batch_size(), rng)?;
        self.update_on_batch(&batch, rng)
    }

    fn batch_size(&self) -> usize;

    fn alpha(&self) -> f64 {
        0.0
    }

    fn lambda(&self) -> f64 {
        0.0
    }

    fn to_checkpoint(&self) -> Checkpoint;
}

/// Builds a fresh agent; network initialization is derived from `seed` only.
pub fn build_agent(
    algorithm: Algorithm,
    obs_dim: usize,
    action_dim: usize,
    horizon: usize,
    cfg: &TrainConfig,
    seed: u64,
) -> Result<Box<dyn Agent + Send>, AgentError> {
    cfg.validate()?;
    Ok(match algorithm {
        Algorithm::Sacl => Box::new(SoftAgent::sacl(obs_dim, action_dim, horizon, cfg, seed)?),
        Algorithm::Sac => Box::new(SoftAgent::sac(obs_dim, action_dim, horizon, cfg, seed)?),
        Algorithm::Ddpg => Box::new(DdpgAgent::new(obs_dim, action_dim, cfg, seed)?),
    })
}

/// Restores any agent from its checkpoint (algorithm read from metadata).
pub fn load_agent(ck: &Checkpoint) -> Result<Box<dyn Agent + Send>, AgentError> {
    let tag = ck
        .meta
        .get("algorithm")
        .ok_or_else(|| AgentError::Checkpoint("missing algorithm tag".into()))?;
    Ok(match tag.parse::<Algorithm>()? {
        Algorithm::Sacl | Algorithm::Sac => Box::new(SoftAgent::from_checkpoint(ck)?),
        Algorithm::Ddpg => Box::new(DdpgAgent::from_checkpoint(ck)?),
    })
}

pub(crate) fn check_state(state: &[f64], expected: usize) -> Result<(), AgentError> {
    if state.len() != expected {
        return Err(AgentError::StateDim { expected, got: state.len() });
    }
    if let Some(i) = state.iter().position(|v| !v.is_finite()) {
        return Err(AgentError::NonFiniteState(i));
    }
    Ok(())
}

pub(crate) fn standard_normal(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || rng.sample::<f64, _>(StandardNormal))
}

/// Deterministic per-purpose generator derived from a run seed.
pub fn derived_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// One episode's training log line.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct EpisodeMetrics {
    pub episode: usize,
    /// Sum of environment rewards (scaled units, no penalty shaping).
    pub reward: f64,
    /// Dollar cost of the episode including completion penalties.
    pub cost: f64,
    /// Unfinished demand at departures (kWh).
    pub ud: f64,
    pub vvn: u64,
    pub vva: f64,
    pub lambda: f64,
    pub alpha: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub metrics: Vec<EpisodeMetrics>,
    pub checkpoint: Checkpoint,
}

/// Seed passed to `env.reset` for a given run seed and episode index.
pub fn episode_seed(seed: u64, episode: usize) -> u64 {
    seed.wrapping_mul(1_000_003).wrapping_add(episode as u64)
}

/// Off-policy training loop: one pass over `cfg.episodes`, cycling through
/// `scenarios`. Actions are uniform random during warmup; afterwards the
/// agent explores and takes `updates_per_step` gradient steps per env step.
pub fn train(
    agent: &mut dyn Agent,
    env: &mut ChargingEnv,
    scenarios: &[Arc<ScenarioData>],
    cfg: &TrainConfig,
    seed: u64,
) -> Result<TrainOutcome, AgentError> {
    cfg.validate()?;
    if cfg.episodes > 0 && scenarios.is_empty() {
        return Err(AgentError::Config("no training scenarios".into()));
    }
    let mut rng = derived_rng(seed, 1);
    let mut buffer = ReplayBuffer::new(cfg.buffer_capacity);
    let n_chargers = env.n_chargers();
    let act_dim = env.action_dim();
    let mut total_steps = 0usize;
    let mut metrics = Vec::with_capacity(cfg.episodes);

    for episode in 0..cfg.episodes {
        let scenario = Arc::clone(&scenarios[episode % scenarios.len()]);
        let mut state = env.reset(scenario, episode_seed(seed, episode))?;
        let mut m = EpisodeMetrics { episode: episode + 1, ..EpisodeMetrics::default() };
        loop {
            let unit = if total_steps < cfg.warmup_steps {
                (0..act_dim).map(|_| rng.random_range(-1.0..1.0)).collect()
            } else {
                agent.act(&state.features, ActMode::Explore, &mut rng)?
            };
            let out = env.step(&ActionVector::from_unit(&unit, n_chargers))?;
            m.reward += out.reward;
            m.cost += out.info.cost.total();
            m.ud += out.info.unfinished_kwh;
            m.vvn += u64::from(out.info.vvn);
            m.vva += out.info.vva;
            buffer.push(Transition {
                state: std::mem::take(&mut state.features),
                action: unit,
                reward: out.reward,
                aux_cost: out.aux_cost,
                next_state: out.next_state.features.clone(),
                done: out.done,
            })?;
            total_steps += 1;
            if total_steps >= cfg.warmup_steps && buffer.len() >= cfg.batch_size {
                for _ in 0..cfg.updates_per_step {
                    agent.update(&buffer, &mut rng)?;
                }
            }
            state = out.next_state;
            if out.done {
                break;
            }
        }
        m.lambda = agent.lambda();
        m.alpha = agent.alpha();
        log::debug!(
            "{} ep {:>4} reward {:>9.3} cost {:>8.2} ud {:>7.2} vvn {:>4} vva {:.4} lambda {:.3} alpha {:.4}",
            agent.algorithm(),
            m.episode,
            m.reward,
            m.cost,
            m.ud,
            m.vvn,
            m.vva,
            m.lambda,
            m.alpha
        );
        metrics.push(m);
    }
    Ok(TrainOutcome { metrics, checkpoint: agent.to_checkpoint() })
}

/// One step of a greedy evaluation rollout.
#[derive(Debug, Clone, PartialEq)]
pub struct StepTrace {
    pub scenario: usize,
    pub t: usize,
    pub cost: f64,
    pub vvn: u32,
    pub vva: f64,
    pub min_voltage: f64,
    pub buy: f64,
    pub sell: f64,
    pub solar_kw: f64,
    pub station_net_kw: Vec<f64>,
    pub voltages: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct EvalTotals {
    pub cost: f64,
    pub ud: f64,
    pub vvn: u64,
    pub vva: f64,
    pub max_step_vva: f64,
    pub steps: usize,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct EvalReport {
    pub totals: EvalTotals,
    pub per_scenario: Vec<EvalTotals>,
    pub traces: Vec<StepTrace>,
}

/// Greedy rollouts over the given scenarios; each uses `episode_seed(seed, i)`.
pub fn evaluate(
    agent: &dyn Agent,
    env: &mut ChargingEnv,
    scenarios: &[Arc<ScenarioData>],
    seed: u64,
) -> Result<EvalReport, AgentError> {
    let mut rng = derived_rng(seed, 2);
    let n_chargers = env.n_chargers();
    evaluate_with(env, scenarios, seed, |features| {
        let unit = agent.act(features, ActMode::Greedy, &mut rng)?;
        Ok(ActionVector::from_unit(&unit, n_chargers))
    })
}

/// Rollouts driven by an arbitrary policy closure.
pub fn evaluate_with<F>(
    env: &mut ChargingEnv,
    scenarios: &[Arc<ScenarioData>],
    seed: u64,
    mut policy: F,
) -> Result<EvalReport, AgentError>
where
    F: FnMut(&[f64]) -> Result<ActionVector, AgentError>,
{
    let mut report = EvalReport::default();
    for (i, sc) in scenarios.iter().enumerate() {
        let mut state = env.reset(Arc::clone(sc), episode_seed(seed, i))?;
        let mut tot = EvalTotals::default();
        loop {
            let action = policy(&state.features)?;
            let solar: f64 = state.solar_kw.iter().sum();
            let (buy, sell) = (state.buy, state.sell);
            let out = env.step(&action)?;
            let info = &out.info;
            tot.cost += info.cost.total();
            tot.ud += info.unfinished_kwh;
            tot.vvn += u64::from(info.vvn);
            tot.vva += info.vva;
            tot.max_step_vva = tot.max_step_vva.max(info.vva);
            tot.steps += 1;
            report.traces.push(StepTrace {
                scenario: i,
                t: info.t,
                cost: info.cost.total(),
                vvn: info.vvn,
                vva: info.vva,
                min_voltage: info.voltages.iter().copied().fold(f64::INFINITY, f64::min),
                buy,
                sell,
                solar_kw: solar,
                station_net_kw: info.station_net_kw.clone(),
                voltages: info.voltages.clone(),
            });
            state = out.next_state;
            if out.done {
                break;
            }
        }
        let t = &mut report.totals;
        t.cost += tot.cost;
        t.ud += tot.ud;
        t.vvn += tot.vvn;
        t.vva += tot.vva;
        t.max_step_vva = t.max_step_vva.max(tot.max_step_vva);
        t.steps += tot.steps;
        report.per_scenario.push(tot);
    }
    Ok(report)
}
