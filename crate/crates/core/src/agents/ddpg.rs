//! Deterministic policy gradient baseline. It trains on the reward alone and
//! ignores the auxiliary cost channel.

use ndarray::{concatenate, s, Array1, Array2, Axis};
use rand_chacha::ChaCha8Rng;

use super::{check_state, derived_rng, standard_normal, ActMode, Agent, AgentError, Algorithm, Diagnostics, TrainConfig};
use crate::nn::{AdamConfig, AdamState, Batch, Checkpoint, Mlp};

#[derive(Debug, Clone, PartialEq)]
pub struct DdpgAgent {
    obs_dim: usize,
    act_dim: usize,
    gamma: f64,
    tau: f64,
    batch_size: usize,
    noise: f64,
    pub actor: Mlp,
    pub actor_target: Mlp,
    pub actor_opt: AdamState,
    pub critic: Mlp,
    pub critic_target: Mlp,
    pub critic_opt: AdamState,
}

impl DdpgAgent {
    pub fn new(obs_dim: usize, act_dim: usize, cfg: &TrainConfig, seed: u64) -> Result<Self, AgentError> {
        cfg.validate()?;
        let h = cfg.hidden;
        let actor = Mlp::new([obs_dim, h, h, act_dim], cfg.policy_init_scale, &mut derived_rng(seed, 20))?;
        let critic = Mlp::new([obs_dim + act_dim, h, h, 1], 1.0, &mut derived_rng(seed, 21))?;
        Ok(Self {
            obs_dim,
            act_dim,
            gamma: cfg.gamma,
            tau: cfg.tau,
            batch_size: cfg.batch_size,
            noise: cfg.ddpg_noise,
            actor_target: actor.clone(),
            actor_opt: AdamState::new(&actor, AdamConfig::with_lr(cfg.lr_actor)),
            actor,
            critic_target: critic.clone(),
            critic_opt: AdamState::new(&critic, AdamConfig::with_lr(cfg.lr_critic)),
            critic,
        })
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self, AgentError> {
        let meta = |k: &str| -> Result<usize, AgentError> {
            ck.meta
                .get(k)
                .and_then(|v| v.parse().ok())
                .ok_or_else(|| AgentError::Checkpoint(format!("missing or bad meta '{k}'")))
        };
        if ck.meta.get("algorithm").map(String::as_str) != Some("ddpg") {
            return Err(AgentError::Checkpoint("not a ddpg checkpoint".into()));
        }
        let agent = Self {
            obs_dim: meta("obs_dim")?,
            act_dim: meta("act_dim")?,
            gamma: ck.scalar("gamma")?,
            tau: ck.scalar("tau")?,
            batch_size: meta("batch_size")?,
            noise: ck.scalar("noise")?,
            actor: ck.net("actor")?.clone(),
            actor_target: ck.net("actor_target")?.clone(),
            actor_opt: ck.optimizer("actor")?.clone(),
            critic: ck.net("critic")?.clone(),
            critic_target: ck.net("critic_target")?.clone(),
            critic_opt: ck.optimizer("critic")?.clone(),
        };
        if agent.actor.input_dim() != agent.obs_dim || agent.actor.output_dim() != agent.act_dim {
            return Err(AgentError::Checkpoint("actor shape disagrees with metadata".into()));
        }
        Ok(agent)
    }
}

impl Agent for DdpgAgent {
    fn algorithm(&self) -> Algorithm {
        Algorithm::Ddpg
    }

    fn batch_size(&self) -> usize {
        self.batch_size
    }

    fn act(&self, state: &[f64], mode: ActMode, rng: &mut ChaCha8Rng) -> Result<Vec<f64>, AgentError> {
        check_state(state, self.obs_dim)?;
        let mut a: Vec<f64> = self.actor.forward_one(state)?.into_iter().map(f64::tanh).collect();
        if mode == ActMode::Explore {
            let eps = standard_normal(1, self.act_dim, rng);
            for (v, e) in a.iter_mut().zip(eps.iter()) {
                *v = (*v + self.noise * e).clamp(-1.0, 1.0);
            }
        }
        Ok(a)
    }

    fn update_on_batch(&mut self, batch: &Batch, _rng: &mut ChaCha8Rng) -> Result<Diagnostics, AgentError> {
        if batch.states.ncols() != self.obs_dim || batch.next_states.ncols() != self.obs_dim {
            return Err(AgentError::StateDim { expected: self.obs_dim, got: batch.states.ncols() });
        }
        let b = batch.len();
        let bf = b as f64;
        let rewards = &batch.rewards;

        let next_a = self.actor_target.forward(batch.next_states.view())?.mapv(f64::tanh);
        let sa_next = concatenate![Axis(1), batch.next_states, next_a];
        let q_next = self.critic_target.forward(sa_next.view())?;
        let y = Array1::from_shape_fn(b, |i| {
            if batch.dones[i] > 0.5 {
                rewards[i]
            } else {
                rewards[i] + self.gamma * q_next[[i, 0]]
            }
        });

        let sa = concatenate![Axis(1), batch.states, batch.actions];
        let (q, cache) = self.critic.forward_cached(sa.view())?;
        let err = &q.column(0) - &y;
        let critic_loss = 0.5 * err.mapv(|e| e * e).sum() / bf;
        let (g, _) = self.critic.backward(&cache, (err / bf).insert_axis(Axis(1)).view())?;
        self.critic_opt.step(&mut self.critic, &g)?;

        let (pre, acache) = self.actor.forward_cached(batch.states.view())?;
        let a = pre.mapv(f64::tanh);
        let sa_pi = concatenate![Axis(1), batch.states, a];
        let (q_pi, qcache) = self.critic.forward_cached(sa_pi.view())?;
        let (_, gx) = self.critic.backward(&qcache, Array2::from_elem((b, 1), -1.0 / bf).view())?;
        let ga = gx.slice(s![.., self.obs_dim..]).to_owned() * a.mapv(|v| 1.0 - v * v);
        let (g, _) = self.actor.backward(&acache, ga.view())?;
        self.actor_opt.step(&mut self.actor, &g)?;

        self.critic_target.soft_update(&self.critic, self.tau);
        self.actor_target.soft_update(&self.actor, self.tau);

        let mean_q = q_pi.mean().unwrap_or(0.0);
        Ok(Diagnostics { critic_loss, policy_loss: -mean_q, mean_q, ..Diagnostics::default() })
    }

    fn to_checkpoint(&self) -> Checkpoint {
        let mut ck = Checkpoint::default();
        for (k, v) in [
            ("algorithm", "ddpg".to_string()),
            ("obs_dim", self.obs_dim.to_string()),
            ("act_dim", self.act_dim.to_string()),
            ("batch_size", self.batch_size.to_string()),
        ] {
            ck.meta.insert(k.into(), v);
        }
        for (k, v) in [
            ("gamma", self.gamma),
            ("tau", self.tau),
            ("noise", self.noise),
        ] {
            ck.scalars.insert(k.into(), v);
        }
        ck.nets.insert("actor".into(), self.actor.clone());
        ck.nets.insert("actor_target".into(), self.actor_target.clone());
        ck.nets.insert("critic".into(), self.critic.clone());
        ck.nets.insert("critic_target".into(), self.critic_target.clone());
        ck.optimizers.insert("actor".into(), self.actor_opt.clone());
        ck.optimizers.insert("critic".into(), self.critic_opt.clone());
        ck
    }
}
