//! Soft actor-critic with either a Lagrangian cost constraint or a fixed
//! reward penalty.

use ndarray::{concatenate, s, Array1, Array2, ArrayView2, Axis};
use rand_chacha::ChaCha8Rng;

use super::{
    check_state, derived_rng, standard_normal, ActMode, Agent, AgentError, Algorithm, Diagnostics,
    LambdaMode, TrainConfig,
};
use crate::nn::{
    gaussian_tanh_sample, AdamConfig, AdamState, Batch, Checkpoint, Mlp, ScalarAdam, SquashedBatch,
    Tensors,
};

/// One-step soft Bellman target for the reward critics.
pub fn soft_target(reward: f64, done: bool, q_next: f64, log_prob_next: f64, alpha: f64, gamma: f64) -> f64 {
    if done {
        reward
    } else {
        reward + gamma * (q_next - alpha * log_prob_next)
    }
}

/// One-step Bellman target for the cost critic.
pub fn cost_target(cost: f64, done: bool, qc_next: f64, gamma: f64) -> f64 {
    if done {
        cost
    } else {
        cost + gamma * qc_next
    }
}

/// Projected gradient ascent on a scalar multiplier.
pub fn project_lambda(lambda: f64, lr: f64, excess: f64) -> f64 {
    (lambda + lr * excess).max(0.0)
}

fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Online network, its target copy and optimizer.
#[derive(Debug, Clone, PartialEq)]
pub struct Critic {
    pub online: Mlp,
    pub target: Mlp,
    pub opt: AdamState,
}

impl Critic {
    fn new(dims: [usize; 4], output_scale: f64, lr: f64, seed: u64, stream: u64) -> Result<Self, AgentError> {
        let online = Mlp::new(dims, output_scale, &mut derived_rng(seed, stream))?;
        Ok(Self { target: online.clone(), opt: AdamState::new(&online, AdamConfig::with_lr(lr)), online })
    }

    /// Squared-error step toward `y`; returns the loss before the step.
    fn fit(&mut self, inputs: ArrayView2<f64>, y: &Array1<f64>) -> Result<f64, AgentError> {
        let b = y.len() as f64;
        let (q, cache) = self.online.forward_cached(inputs)?;
        let err = &q.column(0) - y;
        let loss = 0.5 * err.mapv(|e| e * e).sum() / b;
        let grad = (err / b).insert_axis(Axis(1));
        let (g, _) = self.online.backward(&cache, grad.view())?;
        self.opt.step(&mut self.online, &g)?;
        Ok(loss)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Multiplier {
    Scalar { value: f64 },
    /// State-conditioned multiplier `softplus(net(s))`.
    Network { net: Mlp, opt: AdamState, last_mean: f64 },
}

impl Multiplier {
    fn values(&self, states: ArrayView2<f64>) -> Result<Array1<f64>, AgentError> {
        Ok(match self {
            Multiplier::Scalar { value } => Array1::from_elem(states.nrows(), *value),
            Multiplier::Network { net, .. } => net.forward(states)?.column(0).mapv(softplus),
        })
    }

    pub fn current(&self) -> f64 {
        match self {
            Multiplier::Scalar { value } => *value,
            Multiplier::Network { last_mean, .. } => *last_mean,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Constraint {
    Lagrangian { cost: Critic, multiplier: Multiplier, threshold: f64, lr_lambda: f64 },
    Penalty { weight: f64 },
}

/// Quantities from one evaluation of the policy objective.
#[derive(Debug, Clone)]
pub struct PolicyEval {
    pub loss: f64,
    pub grads: Tensors,
    pub log_prob: Array1<f64>,
    pub mean_q: f64,
    pub mean_qc: f64,
    /// `Q_c(s, a~pi)` per sample (zeros without a cost critic).
    pub qc: Array1<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SoftAgent {
    algorithm: Algorithm,
    obs_dim: usize,
    act_dim: usize,
    gamma: f64,
    tau: f64,
    batch_size: usize,
    pub policy: Mlp,
    pub policy_opt: AdamState,
    pub critics: Vec<Critic>,
    pub log_alpha: f64,
    alpha_opt: ScalarAdam,
    target_entropy: f64,
    pub constraint: Constraint,
    update_targets: bool,
}

impl SoftAgent {
    pub fn sacl(obs_dim: usize, act_dim: usize, horizon: usize, cfg: &TrainConfig, seed: u64) -> Result<Self, AgentError> {
        let mut agent = Self::base(Algorithm::Sacl, obs_dim, act_dim, cfg, seed)?;
        let h = cfg.hidden;
        // Zero output layer: the cost estimate starts at exactly zero and stays
        // there while no costs are observed.
        let cost = Critic::new([obs_dim + act_dim, h, h, 1], 0.0, cfg.lr_critic, seed, 13)?;
        let multiplier = match cfg.lambda_mode {
            LambdaMode::Scalar => Multiplier::Scalar { value: cfg.init_lambda },
            LambdaMode::Network => {
                let mut net = Mlp::new([obs_dim, h, h, 1], cfg.policy_init_scale, &mut derived_rng(seed, 14))?;
                // Start the softplus output near init_lambda.
                let bias = if cfg.init_lambda > 0.0 { cfg.init_lambda.exp_m1().ln() } else { -5.0 };
                net.params.b[2][0] = bias;
                let opt = AdamState::new(&net, AdamConfig::with_lr(cfg.lr_lambda));
                Multiplier::Network { net, opt, last_mean: softplus(bias) }
            }
        };
        agent.constraint = Constraint::Lagrangian {
            cost,
            multiplier,
            threshold: cfg.cost_threshold(horizon),
            lr_lambda: cfg.lr_lambda,
        };
        Ok(agent)
    }

    pub fn sac(obs_dim: usize, act_dim: usize, _horizon: usize, cfg: &TrainConfig, seed: u64) -> Result<Self, AgentError> {
        Self::base(Algorithm::Sac, obs_dim, act_dim, cfg, seed)
    }

    fn base(algorithm: Algorithm, obs_dim: usize, act_dim: usize, cfg: &TrainConfig, seed: u64) -> Result<Self, AgentError> {
        cfg.validate()?;
        let h = cfg.hidden;
        let policy = Mlp::new([obs_dim, h, h, 2 * act_dim], cfg.policy_init_scale, &mut derived_rng(seed, 10))?;
        let n_critics = if cfg.twin_critics { 2 } else { 1 };
        let critics = (0..n_critics)
            .map(|i| Critic::new([obs_dim + act_dim, h, h, 1], 1.0, cfg.lr_critic, seed, 11 + i as u64))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self {
            algorithm,
            obs_dim,
            act_dim,
            gamma: cfg.gamma,
            tau: cfg.tau,
            batch_size: cfg.batch_size,
            policy_opt: AdamState::new(&policy, AdamConfig::with_lr(cfg.lr_actor)),
            policy,
            critics,
            log_alpha: cfg.init_alpha.ln(),
            alpha_opt: ScalarAdam::new(AdamConfig::with_lr(cfg.lr_alpha)),
            target_entropy: cfg.target_entropy.unwrap_or(-(act_dim as f64)),
            constraint: Constraint::Penalty { weight: cfg.penalty_weight },
            update_targets: true,
        })
    }

    pub fn obs_dim(&self) -> usize {
        self.obs_dim
    }

    pub fn act_dim(&self) -> usize {
        self.act_dim
    }

    /// Disables (or re-enables) the target EMA step; used to test critic fitting.
    pub fn set_target_updates(&mut self, enabled: bool) {
        self.update_targets = enabled;
    }

    fn alpha_value(&self) -> f64 {
        self.log_alpha.exp()
    }

    fn training_rewards(&self, batch: &Batch) -> Array1<f64> {
        match &self.constraint {
            Constraint::Penalty { weight } => &batch.rewards - &(&batch.costs * *weight),
            Constraint::Lagrangian { .. } => batch.rewards.clone(),
        }
    }

    fn check_batch(&self, batch: &Batch) -> Result<(), AgentError> {
        for (got, expected) in [
            (batch.states.ncols(), self.obs_dim),
            (batch.next_states.ncols(), self.obs_dim),
        ] {
            if got != expected {
                return Err(AgentError::StateDim { expected, got });
            }
        }
        if batch.actions.ncols() != self.act_dim {
            return Err(AgentError::Config(format!(
                "batch actions have {} columns, agent expects {}",
                batch.actions.ncols(),
                self.act_dim
            )));
        }
        Ok(())
    }

    /// Bellman targets `(y_r, y_c)` from the frozen target networks, given the
    /// standard-normal draw for `a' ~ pi(.|s')`.
    pub fn critic_targets(&self, batch: &Batch, noise: ArrayView2<f64>) -> Result<(Array1<f64>, Array1<f64>), AgentError> {
        let head = self.policy.forward(batch.next_states.view())?;
        let next = SquashedBatch::sample(head.view(), noise)?;
        let sa = concatenate![Axis(1), batch.next_states, next.actions];
        let mut q_next: Option<Array1<f64>> = None;
        for c in &self.critics {
            let q = c.target.forward(sa.view())?.column(0).to_owned();
            q_next = Some(match q_next {
                None => q,
                Some(prev) => ndarray::Zip::from(&prev).and(&q).map_collect(|a, b| a.min(*b)),
            });
        }
        let q_next = q_next.expect("at least one critic");
        let rewards = self.training_rewards(batch);
        let alpha = self.alpha_value();
        let b = batch.len();
        let y_r = Array1::from_shape_fn(b, |i| {
            soft_target(rewards[i], batch.dones[i] > 0.5, q_next[i], next.log_prob[i], alpha, self.gamma)
        });
        let y_c = match &self.constraint {
            Constraint::Lagrangian { cost, .. } => {
                let qc = cost.target.forward(sa.view())?;
                Array1::from_shape_fn(b, |i| cost_target(batch.costs[i], batch.dones[i] > 0.5, qc[[i, 0]], self.gamma))
            }
            Constraint::Penalty { .. } => batch.costs.clone(),
        };
        Ok((y_r, y_c))
    }

    /// Sampled Lagrangian `mean(alpha log pi - min Q + lambda Q_c)` and its
    /// gradient with respect to the policy parameters, for fixed noise.
    pub fn policy_eval(&self, states: ArrayView2<f64>, noise: ArrayView2<f64>) -> Result<PolicyEval, AgentError> {
        let b = states.nrows();
        let bf = b as f64;
        let alpha = self.alpha_value();
        let (head, cache) = self.policy.forward_cached(states)?;
        let smp = SquashedBatch::sample(head.view(), noise)?;
        let sa = concatenate![Axis(1), states, smp.actions];

        let mut qs = Vec::with_capacity(self.critics.len());
        for c in &self.critics {
            qs.push(c.online.forward_cached(sa.view())?);
        }
        let sel: Vec<usize> = (0..b)
            .map(|i| {
                let mut best = 0;
                for k in 1..qs.len() {
                    if qs[k].0[[i, 0]] < qs[best].0[[i, 0]] {
                        best = k;
                    }
                }
                best
            })
            .collect();
        let q_min = Array1::from_shape_fn(b, |i| qs[sel[i]].0[[i, 0]]);

        let mut grad_action = Array2::<f64>::zeros((b, self.act_dim));
        for (k, (_, qcache)) in qs.iter().enumerate() {
            let g = Array2::from_shape_fn((b, 1), |(i, _)| if sel[i] == k { -1.0 / bf } else { 0.0 });
            let (_, gx) = self.critics[k].online.backward(qcache, g.view())?;
            grad_action += &gx.slice(s![.., self.obs_dim..]);
        }

        let mut qc = Array1::zeros(b);
        let mut cost_term = 0.0;
        if let Constraint::Lagrangian { cost, multiplier, .. } = &self.constraint {
            let (qcv, ccache) = cost.online.forward_cached(sa.view())?;
            qc = qcv.column(0).to_owned();
            let lam = multiplier.values(states)?;
            cost_term = (&lam * &qc).sum() / bf;
            let g = (&lam / bf).insert_axis(Axis(1));
            let (_, gx) = cost.online.backward(&ccache, g.view())?;
            grad_action += &gx.slice(s![.., self.obs_dim..]);
        }

        let grad_logp = Array1::from_elem(b, alpha / bf);
        let head_grad = smp.backward(grad_action.view(), &grad_logp);
        let (grads, _) = self.policy.backward(&cache, head_grad.view())?;
        let loss = alpha * smp.log_prob.mean().unwrap_or(0.0) - q_min.mean().unwrap_or(0.0) + cost_term;
        Ok(PolicyEval {
            loss,
            grads,
            mean_q: q_min.mean().unwrap_or(0.0),
            mean_qc: qc.mean().unwrap_or(0.0),
            log_prob: smp.log_prob,
            qc,
        })
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self, AgentError> {
        let meta = |k: &str| {
            ck.meta.get(k).cloned().ok_or_else(|| AgentError::Checkpoint(format!("missing meta '{k}'")))
        };
        let num = |k: &str| -> Result<usize, AgentError> {
            meta(k)?.parse().map_err(|_| AgentError::Checkpoint(format!("bad meta '{k}'")))
        };
        let algorithm: Algorithm = meta("algorithm")?.parse()?;
        if algorithm == Algorithm::Ddpg {
            return Err(AgentError::Checkpoint("not a soft actor-critic checkpoint".into()));
        }
        let n_critics = num("critics")?;
        let mut critics = Vec::with_capacity(n_critics);
        for i in 1..=n_critics {
            critics.push(Critic {
                online: ck.net(&format!("q{i}"))?.clone(),
                target: ck.net(&format!("q{i}_target"))?.clone(),
                opt: ck.optimizer(&format!("q{i}"))?.clone(),
            });
        }
        let constraint = if algorithm == Algorithm::Sacl {
            let multiplier = match meta("lambda_mode")?.as_str() {
                "scalar" => Multiplier::Scalar { value: ck.scalar("lambda")? },
                "network" => Multiplier::Network {
                    net: ck.net("lambda")?.clone(),
                    opt: ck.optimizer("lambda")?.clone(),
                    last_mean: ck.scalar("lambda")?,
                },
                other => return Err(AgentError::Checkpoint(format!("unknown lambda mode '{other}'"))),
            };
            Constraint::Lagrangian {
                cost: Critic {
                    online: ck.net("cost")?.clone(),
                    target: ck.net("cost_target")?.clone(),
                    opt: ck.optimizer("cost")?.clone(),
                },
                multiplier,
                threshold: ck.scalar("threshold")?,
                lr_lambda: ck.scalar("lr_lambda")?,
            }
        } else {
            Constraint::Penalty { weight: ck.scalar("penalty_weight")? }
        };
        let alpha_cfg = AdamConfig::with_lr(ck.scalar("alpha_lr")?);
        let agent = Self {
            algorithm,
            obs_dim: num("obs_dim")?,
            act_dim: num("act_dim")?,
            gamma: ck.scalar("gamma")?,
            tau: ck.scalar("tau")?,
            batch_size: num("batch_size")?,
            policy: ck.net("policy")?.clone(),
            policy_opt: ck.optimizer("policy")?.clone(),
            critics,
            log_alpha: ck.scalar("log_alpha")?,
            alpha_opt: ScalarAdam {
                cfg: alpha_cfg,
                m: ck.scalar("alpha_m")?,
                v: ck.scalar("alpha_v")?,
                step: ck.scalar("alpha_step")? as u64,
            },
            target_entropy: ck.scalar("target_entropy")?,
            constraint,
            update_targets: true,
        };
        if agent.policy.input_dim() != agent.obs_dim || agent.policy.output_dim() != 2 * agent.act_dim {
            return Err(AgentError::Checkpoint("policy shape disagrees with metadata".into()));
        }
        Ok(agent)
    }
}

impl Agent for SoftAgent {
    fn algorithm(&self) -> Algorithm {
        self.algorithm
    }

    fn batch_size(&self) -> usize {
        self.batch_size
    }

    fn alpha(&self) -> f64 {
        self.alpha_value()
    }

    fn lambda(&self) -> f64 {
        match &self.constraint {
            Constraint::Lagrangian { multiplier, .. } => multiplier.current(),
            Constraint::Penalty { .. } => 0.0,
        }
    }

    fn act(&self, state: &[f64], mode: ActMode, rng: &mut ChaCha8Rng) -> Result<Vec<f64>, AgentError> {
        check_state(state, self.obs_dim)?;
        let head = self.policy.forward_one(state)?;
        let (mean, log_std) = head.split_at(self.act_dim);
        Ok(match mode {
            ActMode::Greedy => mean.iter().map(|m| m.tanh()).collect(),
            ActMode::Explore => {
                let noise = standard_normal(1, self.act_dim, rng);
                let noise = noise.as_slice().expect("standard layout");
                gaussian_tanh_sample(mean, log_std, noise)?.0
            }
        })
    }

    fn update_on_batch(&mut self, batch: &Batch, rng: &mut ChaCha8Rng) -> Result<Diagnostics, AgentError> {
        self.check_batch(batch)?;
        let b = batch.len();
        let noise_next = standard_normal(b, self.act_dim, rng);
        let noise_pi = standard_normal(b, self.act_dim, rng);

        let (y_r, y_c) = self.critic_targets(batch, noise_next.view())?;
        let sa = concatenate![Axis(1), batch.states, batch.actions];
        let mut critic_loss = 0.0;
        for c in &mut self.critics {
            critic_loss += c.fit(sa.view(), &y_r)?;
        }
        critic_loss /= self.critics.len() as f64;
        let mut cost_critic_loss = 0.0;
        if let Constraint::Lagrangian { cost, .. } = &mut self.constraint {
            cost_critic_loss = cost.fit(sa.view(), &y_c)?;
        }

        let pe = self.policy_eval(batch.states.view(), noise_pi.view())?;
        self.policy_opt.step(&mut self.policy, &pe.grads)?;

        let entropy = -pe.log_prob.mean().unwrap_or(0.0);
        let grad_log_alpha = -(pe.log_prob.mean().unwrap_or(0.0) + self.target_entropy);
        self.alpha_opt.step(&mut self.log_alpha, grad_log_alpha);

        if let Constraint::Lagrangian { multiplier, threshold, lr_lambda, .. } = &mut self.constraint {
            match multiplier {
                Multiplier::Scalar { value } => {
                    *value = project_lambda(*value, *lr_lambda, pe.mean_qc - *threshold);
                }
                Multiplier::Network { net, opt, last_mean } => {
                    // Minimize -mean(lambda(s) (Q_c - d)).
                    let (out, cache) = net.forward_cached(batch.states.view())?;
                    let z = out.column(0);
                    let g = Array2::from_shape_fn((b, 1), |(i, _)| {
                        -(pe.qc[i] - *threshold) * sigmoid(z[i]) / b as f64
                    });
                    let (grads, _) = net.backward(&cache, g.view())?;
                    opt.step(net, &grads)?;
                    *last_mean = net.forward(batch.states.view())?.column(0).mapv(softplus).mean().unwrap_or(0.0);
                }
            }
        }
        let lambda = self.lambda();
        assert!(lambda >= 0.0, "multiplier became negative: {lambda}");

        if self.update_targets {
            for c in &mut self.critics {
                c.target.soft_update(&c.online, self.tau);
            }
            if let Constraint::Lagrangian { cost, .. } = &mut self.constraint {
                cost.target.soft_update(&cost.online, self.tau);
            }
        }

        Ok(Diagnostics {
            critic_loss,
            cost_critic_loss,
            policy_loss: pe.loss,
            alpha: self.alpha_value(),
            lambda,
            mean_q: pe.mean_q,
            mean_qc: pe.mean_qc,
            entropy,
        })
    }

    fn to_checkpoint(&self) -> Checkpoint {
        let mut ck = Checkpoint::default();
        let meta = [
            ("algorithm", self.algorithm.to_string()),
            ("obs_dim", self.obs_dim.to_string()),
            ("act_dim", self.act_dim.to_string()),
            ("batch_size", self.batch_size.to_string()),
            ("critics", self.critics.len().to_string()),
        ];
        for (k, v) in meta {
            ck.meta.insert(k.into(), v);
        }
        let scalars = [
            ("gamma", self.gamma),
            ("tau", self.tau),
            ("log_alpha", self.log_alpha),
            ("alpha_lr", self.alpha_opt.cfg.lr),
            ("alpha_m", self.alpha_opt.m),
            ("alpha_v", self.alpha_opt.v),
            ("alpha_step", self.alpha_opt.step as f64),
            ("target_entropy", self.target_entropy),
        ];
        for (k, v) in scalars {
            ck.scalars.insert(k.into(), v);
        }
        ck.nets.insert("policy".into(), self.policy.clone());
        ck.optimizers.insert("policy".into(), self.policy_opt.clone());
        for (i, c) in self.critics.iter().enumerate() {
            ck.nets.insert(format!("q{}", i + 1), c.online.clone());
            ck.nets.insert(format!("q{}_target", i + 1), c.target.clone());
            ck.optimizers.insert(format!("q{}", i + 1), c.opt.clone());
        }
        match &self.constraint {
            Constraint::Penalty { weight } => {
                ck.scalars.insert("penalty_weight".into(), *weight);
            }
            Constraint::Lagrangian { cost, multiplier, threshold, lr_lambda } => {
                ck.nets.insert("cost".into(), cost.online.clone());
                ck.nets.insert("cost_target".into(), cost.target.clone());
                ck.optimizers.insert("cost".into(), cost.opt.clone());
                ck.scalars.insert("threshold".into(), *threshold);
                ck.scalars.insert("lr_lambda".into(), *lr_lambda);
                ck.scalars.insert("lambda".into(), multiplier.current());
                match multiplier {
                    Multiplier::Scalar { .. } => {
                        ck.meta.insert("lambda_mode".into(), "scalar".into());
                    }
                    Multiplier::Network { net, opt, .. } => {
                        ck.meta.insert("lambda_mode".into(), "network".into());
                        ck.nets.insert("lambda".into(), net.clone());
                        ck.optimizers.insert("lambda".into(), opt.clone());
                    }
                }
            }
        }
        ck
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{ReplayBuffer, Transition};
    use rand::{Rng, SeedableRng};

    fn small_cfg() -> TrainConfig {
        TrainConfig { hidden: 16, batch_size: 8, buffer_capacity: 64, ..TrainConfig::default() }
    }

    fn random_batch(obs: usize, act: usize, n: usize, zero_cost: bool, seed: u64) -> Batch {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut buf = ReplayBuffer::new(n);
        for i in 0..n {
            buf.push(Transition {
                state: (0..obs).map(|_| rng.random_range(-1.0..1.0)).collect(),
                action: (0..act).map(|_| rng.random_range(-0.9..0.9)).collect(),
                reward: rng.random_range(-1.0..0.0),
                aux_cost: if zero_cost { 0.0 } else { rng.random_range(0.0..2.0) },
                next_state: (0..obs).map(|_| rng.random_range(-1.0..1.0)).collect(),
                done: i % 5 == 4,
            })
            .unwrap();
        }
        let items: Vec<&Transition> = buf.iter().collect();
        Batch::from_transitions(&items)
    }

    #[test]
    fn stub_target_value() {
        let y = soft_target(1.0, false, 2.0, -1.0, 0.2, 0.99);
        assert!((y - 3.178).abs() < 1e-12);
        assert_eq!(soft_target(1.0, true, 2.0, -1.0, 0.2, 0.99), 1.0);
        assert_eq!(cost_target(0.7, true, 5.0, 0.99), 0.7);
        assert!(soft_target(1.0, false, 2.0, -1.0, 0.3, 0.99) > y);
    }

    #[test]
    fn projected_ascent_example() {
        assert!((project_lambda(0.5, 0.1, 2.0) - 0.7).abs() < 1e-12);
        assert_eq!(project_lambda(0.1, 0.1, -5.0), 0.0);
    }

    #[test]
    fn terminal_targets_equal_immediate_values() {
        let agent = SoftAgent::sacl(4, 2, 24, &small_cfg(), 3).unwrap();
        let mut batch = random_batch(4, 2, 8, false, 1);
        batch.dones.fill(1.0);
        let noise = Array2::zeros((8, 2));
        let (yr, yc) = agent.critic_targets(&batch, noise.view()).unwrap();
        assert_eq!(yr, batch.rewards);
        assert_eq!(yc, batch.costs);
    }

    #[test]
    fn greedy_from_small_policy_is_near_zero_and_pure() {
        let agent = SoftAgent::sac(5, 3, 24, &small_cfg(), 0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let s = [0.1, 0.2, -0.3, 0.4, 0.0];
        let a = agent.act(&s, ActMode::Greedy, &mut rng).unwrap();
        assert!(a.iter().all(|v| v.abs() < 0.01));
        assert_eq!(a, agent.act(&s, ActMode::Greedy, &mut rng).unwrap());
        let e1 = agent.act(&s, ActMode::Explore, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let e2 = agent.act(&s, ActMode::Explore, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        assert_eq!(e1, e2);
        assert!(e1.iter().all(|v| v.abs() < 1.0));
        assert!(agent.act(&s[..4], ActMode::Greedy, &mut rng).is_err());
        assert!(agent.act(&[f64::NAN; 5], ActMode::Greedy, &mut rng).is_err());
    }

    #[test]
    fn zero_costs_keep_lambda_at_zero() {
        let mut agent = SoftAgent::sacl(4, 2, 24, &small_cfg(), 1).unwrap();
        let batch = random_batch(4, 2, 8, true, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let d = agent.update_on_batch(&batch, &mut rng).unwrap();
            assert_eq!(d.lambda, 0.0);
        }
    }

    #[test]
    fn sacl_matches_sac_without_costs() {
        let cfg = TrainConfig { penalty_weight: 0.0, ..small_cfg() };
        let mut sacl = SoftAgent::sacl(4, 2, 24, &cfg, 7).unwrap();
        let mut sac = SoftAgent::sac(4, 2, 24, &cfg, 7).unwrap();
        let batch = random_batch(4, 2, 8, true, 3);
        let mut r1 = ChaCha8Rng::seed_from_u64(11);
        let mut r2 = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..10 {
            sacl.update_on_batch(&batch, &mut r1).unwrap();
            sac.update_on_batch(&batch, &mut r2).unwrap();
            assert_eq!(sacl.policy, sac.policy);
            assert_eq!(sacl.critics, sac.critics);
            assert_eq!(sacl.log_alpha, sac.log_alpha);
        }
    }

    #[test]
    fn tau_one_copies_online_into_target() {
        let cfg = TrainConfig { tau: 1.0, ..small_cfg() };
        let mut agent = SoftAgent::sacl(4, 2, 24, &cfg, 2).unwrap();
        let batch = random_batch(4, 2, 8, false, 4);
        agent.update_on_batch(&batch, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        for c in &agent.critics {
            assert_eq!(c.online, c.target);
        }
        if let Constraint::Lagrangian { cost, .. } = &agent.constraint {
            assert_eq!(cost.online, cost.target);
        }
    }

    #[test]
    fn critic_loss_decreases_with_frozen_targets() {
        let cfg = TrainConfig { lr_critic: 1e-3, ..small_cfg() };
        let mut agent = SoftAgent::sac(4, 2, 24, &cfg, 4).unwrap();
        agent.set_target_updates(false);
        let batch = random_batch(4, 2, 8, false, 5);
        let noise = Array2::zeros((8, 2));
        let (y, _) = agent.critic_targets(&batch, noise.view()).unwrap();
        let sa = concatenate![Axis(1), batch.states, batch.actions];
        let mut last = f64::INFINITY;
        for _ in 0..50 {
            let loss = agent.critics[0].fit(sa.view(), &y).unwrap();
            assert!(loss < last, "{loss} !< {last}");
            last = loss;
        }
    }

    #[test]
    fn policy_gradient_matches_finite_differences() {
        let cfg = TrainConfig { hidden: 8, init_lambda: 0.3, policy_init_scale: 1.0, ..small_cfg() };
        for lambda_mode in [LambdaMode::Scalar, LambdaMode::Network] {
            let cfg = TrainConfig { lambda_mode, ..cfg.clone() };
            let mut agent = SoftAgent::sacl(3, 2, 24, &cfg, 8).unwrap();
            let batch = random_batch(3, 2, 6, false, 6);
            let noise = standard_normal(6, 2, &mut ChaCha8Rng::seed_from_u64(2));
            let pe = agent.policy_eval(batch.states.view(), noise.view()).unwrap();
            let analytic: Vec<f64> = pe.grads.slices().concat();
            let h = 1e-6;
            let mut idx = 0;
            for t in 0..6 {
                let len = agent.policy.params.slices()[t].len();
                for j in 0..len {
                    let orig = agent.policy.params.slices()[t][j];
                    agent.policy.params.slices_mut()[t][j] = orig + h;
                    let up = agent.policy_eval(batch.states.view(), noise.view()).unwrap().loss;
                    agent.policy.params.slices_mut()[t][j] = orig - h;
                    let down = agent.policy_eval(batch.states.view(), noise.view()).unwrap().loss;
                    agent.policy.params.slices_mut()[t][j] = orig;
                    let fd = (up - down) / (2.0 * h);
                    let a = analytic[idx];
                    let rel = (a - fd).abs() / a.abs().max(fd.abs()).max(1e-4);
                    assert!(rel < 1e-3, "param {t}/{j}: analytic {a} fd {fd}");
                    idx += 1;
                }
            }
        }
    }

    #[test]
    fn checkpoint_round_trip_preserves_agent() {
        for lambda_mode in [LambdaMode::Scalar, LambdaMode::Network] {
            let cfg = TrainConfig { lambda_mode, ..small_cfg() };
            let mut agent = SoftAgent::sacl(4, 2, 24, &cfg, 1).unwrap();
            let batch = random_batch(4, 2, 8, false, 7);
            agent.update_on_batch(&batch, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
            let text = agent.to_checkpoint().encode();
            let back = SoftAgent::from_checkpoint(&Checkpoint::decode(&text).unwrap()).unwrap();
            assert_eq!(back, agent);
        }
        let sac = SoftAgent::sac(4, 2, 24, &small_cfg(), 1).unwrap();
        let back = SoftAgent::from_checkpoint(&Checkpoint::decode(&sac.to_checkpoint().encode()).unwrap()).unwrap();
        assert_eq!(back, sac);
    }
}
