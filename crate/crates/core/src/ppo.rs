//! Federated primal-dual PPO on episodic environments.
//!
//! Every agent owns a policy network, a reward critic `V_φ`, one cost
//! critic `V_ψ` per assigned constraint, and its multipliers. Only the
//! policy and reward-critic parameters are ever packed into a
//! [`CommPayload`]; cost critics and multipliers stay inside the agent.

use std::collections::VecDeque;

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cmdp::sample_categorical;
use crate::envs::EpisodicEnv;
use crate::error::{Error, Result};
use crate::fed::{dual_update, AgentRecord, FederationConfig, RoundLog};
use crate::nn::{FeedforwardNet, Optimizer, OptimizerKind};
use crate::policy::{aggregate_params_mean, softmax_into};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PpoConfig {
    pub clip: f64,
    pub inner_steps: usize,
    /// Batch length `K`.
    pub horizon: usize,
    pub discount: f64,
    pub lr_theta: f64,
    pub lr_phi: f64,
    pub lr_psi: f64,
    pub lr_lambda: f64,
    pub lambda_max: f64,
    pub hidden: Vec<usize>,
    pub optimizer: OptimizerKind,
    /// Episodes in the rolling window used for logging.
    pub log_window: usize,
}

impl Default for PpoConfig {
    fn default() -> Self {
        PpoConfig {
            clip: 0.2,
            inner_steps: 10,
            horizon: 10_000,
            discount: 0.99,
            lr_theta: 1e-4,
            lr_phi: 1e-4,
            lr_psi: 1e-4,
            lr_lambda: 1e-3,
            lambda_max: 1.0,
            hidden: vec![64, 64],
            optimizer: OptimizerKind::Sgd,
            log_window: 20,
        }
    }
}

impl PpoConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.clip > 0.0 && self.clip < 1.0) {
            return Err(Error::invalid("ppo.clip", format!("{} not in (0,1)", self.clip)));
        }
        if self.inner_steps == 0 {
            return Err(Error::invalid("ppo.inner_steps", "must be at least 1"));
        }
        if self.horizon == 0 {
            return Err(Error::invalid("ppo.horizon", "must be at least 1"));
        }
        if !(0.0..=1.0).contains(&self.discount) {
            return Err(Error::invalid("ppo.discount", format!("{} not in [0,1]", self.discount)));
        }
        for (name, v) in [
            ("lr_theta", self.lr_theta),
            ("lr_phi", self.lr_phi),
            ("lr_psi", self.lr_psi),
            ("lr_lambda", self.lr_lambda),
            ("lambda_max", self.lambda_max),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::invalid(format!("ppo.{name}"), format!("{v} must be positive")));
            }
        }
        if self.hidden.contains(&0) {
            return Err(Error::invalid("ppo.hidden", "layer sizes must be positive"));
        }
        if self.log_window == 0 {
            return Err(Error::invalid("ppo.log_window", "must be at least 1"));
        }
        Ok(())
    }

    fn sizes(&self, input: usize, output: usize) -> Vec<usize> {
        let mut s = vec![input];
        s.extend(&self.hidden);
        s.push(output);
        s
    }
}

/// Discounted sums restarted at every flagged episode start:
/// `R^l = s^l + γ R^{l+1}` unless step `l+1` starts a new episode.
pub fn returns_to_go(signals: &[f64], starts: &[bool], discount: f64) -> Vec<f64> {
    returns_to_go_bootstrapped(signals, starts, discount, 0.0)
}

/// As [`returns_to_go`], with `tail` standing in for the return after the
/// last step of the batch.
pub fn returns_to_go_bootstrapped(signals: &[f64], starts: &[bool], discount: f64, tail: f64) -> Vec<f64> {
    assert_eq!(signals.len(), starts.len(), "signals and flags must align");
    let mut out = vec![0.0; signals.len()];
    let mut acc = tail;
    for l in (0..signals.len()).rev() {
        if starts.get(l + 1).copied().unwrap_or(false) {
            acc = 0.0;
        }
        acc = signals[l] + discount * acc;
        out[l] = acc;
    }
    out
}

/// Mean of the cost-to-go over episode starts.
pub fn episode_avg_cost(cost_to_go: &[f64], starts: &[bool]) -> Result<f64> {
    let (sum, n) = cost_to_go
        .iter()
        .zip(starts)
        .filter(|(_, &s)| s)
        .fold((0.0, 0usize), |(s, n), (c, _)| (s + c, n + 1));
    if n == 0 {
        return Err(Error::MalformedBatch("no episode start in batch".into()));
    }
    Ok(sum / n as f64)
}

/// `min(rA, max((1-ε)A, (1+ε)A))`.
pub fn clip_surrogate(ratio: f64, advantage: f64, eps: f64) -> f64 {
    (ratio * advantage).min(((1.0 - eps) * advantage).max((1.0 + eps) * advantage))
}

/// `K` consecutive steps with the agent's own cost signals only.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryBatch {
    pub obs_dim: usize,
    /// Row `l` is `s^l`, stored contiguously.
    pub observations: Vec<f64>,
    pub actions: Vec<usize>,
    pub rewards: Vec<f64>,
    /// One row per visible constraint.
    pub costs: Vec<Vec<f64>>,
    /// `d^l`: step `l` is the first step of an episode.
    pub starts: Vec<bool>,
    /// The episode was still running when the batch was cut.
    pub cut: bool,
    /// Observation after the last step, used to bootstrap at the cut.
    pub final_observation: Vec<f64>,
}

impl TrajectoryBatch {
    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn observation_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_column_slice(self.obs_dim, self.len(), &self.observations)
    }
}

/// Undiscounted totals of one finished episode, over every cost.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeReturn {
    pub reward: f64,
    pub costs: Vec<f64>,
    pub length: usize,
}

/// Roll the policy for `horizon` steps, starting a fresh episode.
pub fn collect_batch<E: EpisodicEnv + ?Sized>(
    env: &mut E,
    policy: &FeedforwardNet,
    visible: &[usize],
    horizon: usize,
    rng: &mut ChaCha8Rng,
) -> Result<(TrajectoryBatch, Vec<EpisodeReturn>)> {
    let dim = env.observation_dim();
    let mut batch = TrajectoryBatch {
        obs_dim: dim,
        observations: Vec::with_capacity(horizon * dim),
        actions: Vec::with_capacity(horizon),
        rewards: Vec::with_capacity(horizon),
        costs: vec![Vec::with_capacity(horizon); visible.len()],
        starts: Vec::with_capacity(horizon),
        cut: false,
        final_observation: Vec::new(),
    };
    let mut finished = Vec::new();
    let mut obs = env.reset(rng);
    let mut start = true;
    let mut running = EpisodeReturn {
        reward: 0.0,
        costs: vec![0.0; env.n_costs()],
        length: 0,
    };
    let mut probs = vec![0.0; env.n_actions()];
    for _ in 0..horizon {
        if obs.len() != dim {
            return Err(Error::Env(format!("observation of length {} (expected {dim})", obs.len())));
        }
        softmax_into(&policy.forward(&obs)?, &mut probs);
        let action = sample_categorical(&probs, rng);
        let out = env.step(action)?;
        if out.costs.len() != running.costs.len() {
            return Err(Error::Env(format!("{} costs (expected {})", out.costs.len(), running.costs.len())));
        }
        batch.observations.extend_from_slice(&obs);
        batch.actions.push(action);
        batch.rewards.push(out.reward);
        for (row, &j) in batch.costs.iter_mut().zip(visible) {
            row.push(out.costs[j]);
        }
        batch.starts.push(start);
        running.reward += out.reward;
        running.length += 1;
        for (t, c) in running.costs.iter_mut().zip(&out.costs) {
            *t += c;
        }
        if out.done {
            finished.push(std::mem::replace(
                &mut running,
                EpisodeReturn {
                    reward: 0.0,
                    costs: vec![0.0; out.costs.len()],
                    length: 0,
                },
            ));
            obs = env.reset(rng);
            start = true;
        } else {
            obs = out.observation;
            start = false;
        }
    }
    // `start` is true exactly when the last step ended its episode.
    batch.cut = !start;
    batch.final_observation = obs;
    Ok((batch, finished))
}

fn values(net: &FeedforwardNet, obs: &DMatrix<f64>) -> Result<Vec<f64>> {
    Ok(net.forward_batch(obs)?.output().row(0).iter().copied().collect())
}

/// `(1/K) Σ (target^l - V(s^l))²` and its parameter gradient.
pub fn critic_objective(net: &FeedforwardNet, obs: &DMatrix<f64>, targets: &[f64]) -> Result<(f64, Vec<f64>)> {
    let cache = net.forward_batch(obs)?;
    let k = targets.len() as f64;
    let v = cache.output();
    let mut loss = 0.0;
    let mut g = DMatrix::zeros(1, targets.len());
    for (l, t) in targets.iter().enumerate() {
        let e = v[(0, l)] - t;
        loss += e * e;
        g[(0, l)] = 2.0 * e / k;
    }
    Ok((loss / k, net.backward(&cache, &g)))
}

/// `log π(a|s)` and its parameter gradient.
pub fn log_prob_objective(net: &FeedforwardNet, obs: &[f64], action: usize) -> Result<(f64, Vec<f64>)> {
    let x = DMatrix::from_column_slice(obs.len(), 1, obs);
    let cache = net.forward_batch(&x)?;
    let logits: Vec<f64> = cache.output().column(0).iter().copied().collect();
    let mut probs = vec![0.0; logits.len()];
    softmax_into(&logits, &mut probs);
    let mut g = DMatrix::zeros(logits.len(), 1);
    for (b, p) in probs.iter().enumerate() {
        g[(b, 0)] = (b == action) as u8 as f64 - p;
    }
    Ok((probs[action].ln(), net.backward(&cache, &g)))
}

fn log_probs(net: &FeedforwardNet, obs: &DMatrix<f64>, actions: &[usize]) -> Result<Vec<f64>> {
    let cache = net.forward_batch(obs)?;
    let logits = cache.output();
    let mut probs = vec![0.0; logits.nrows()];
    Ok(actions
        .iter()
        .enumerate()
        .map(|(l, &a)| {
            let col: Vec<f64> = logits.column(l).iter().copied().collect();
            softmax_into(&col, &mut probs);
            probs[a].ln()
        })
        .collect())
}

/// `Σ_l min(r_l A_l, max((1-ε)A_l, (1+ε)A_l))` with `r_l = π(a_l|s_l) / π_old(a_l|s_l)`,
/// and its parameter gradient.
pub fn clip_objective(
    net: &FeedforwardNet,
    obs: &DMatrix<f64>,
    actions: &[usize],
    old_log_probs: &[f64],
    advantages: &[f64],
    eps: f64,
) -> Result<(f64, Vec<f64>)> {
    let cache = net.forward_batch(obs)?;
    let logits = cache.output();
    let na = logits.nrows();
    let mut g = DMatrix::zeros(na, actions.len());
    let mut probs = vec![0.0; na];
    let mut total = 0.0;
    for (l, &a) in actions.iter().enumerate() {
        let col: Vec<f64> = logits.column(l).iter().copied().collect();
        softmax_into(&col, &mut probs);
        let ratio = (probs[a].ln() - old_log_probs[l]).exp();
        let adv = advantages[l];
        let value = clip_surrogate(ratio, adv, eps);
        total += value;
        if ratio * adv <= ((1.0 - eps) * adv).max((1.0 + eps) * adv) {
            for b in 0..na {
                g[(b, l)] = adv * ratio * ((b == a) as u8 as f64 - probs[b]);
            }
        }
    }
    Ok((total, net.backward(&cache, &g)))
}

#[derive(Debug, Clone)]
pub struct PpoAgentState {
    pub policy: FeedforwardNet,
    pub reward_critic: FeedforwardNet,
    /// One private critic per entry of `constraints`.
    pub cost_critics: Vec<FeedforwardNet>,
    pub constraints: Vec<usize>,
    pub budgets: Vec<f64>,
    pub lambdas: Vec<f64>,
    pub reward_weight: f64,
    pub rng: ChaCha8Rng,
    opt_policy: Optimizer,
    opt_reward: Optimizer,
    opt_costs: Vec<Optimizer>,
}

impl PpoAgentState {
    /// `budgets` is indexed by global constraint id.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        policy: FeedforwardNet,
        reward_critic: FeedforwardNet,
        cost_critic: &FeedforwardNet,
        constraints: Vec<usize>,
        budgets: &[f64],
        reward_weight: f64,
        cfg: &PpoConfig,
        seed: u64,
        stream: u64,
    ) -> Result<Self> {
        let budgets = constraints
            .iter()
            .map(|&j| {
                budgets
                    .get(j)
                    .copied()
                    .ok_or_else(|| Error::invalid("env.budgets", format!("no budget for constraint {j}")))
            })
            .collect::<Result<Vec<_>>>()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        let kind = cfg.optimizer;
        Ok(PpoAgentState {
            opt_policy: Optimizer::new(kind, cfg.lr_theta, policy.params().len()),
            opt_reward: Optimizer::new(kind, cfg.lr_phi, reward_critic.params().len()),
            opt_costs: constraints
                .iter()
                .map(|_| Optimizer::new(kind, cfg.lr_psi, cost_critic.params().len()))
                .collect(),
            cost_critics: vec![cost_critic.clone(); constraints.len()],
            lambdas: vec![0.0; constraints.len()],
            policy,
            reward_critic,
            constraints,
            budgets,
            reward_weight,
            rng,
        })
    }

    /// The only data an agent sends at a communication round.
    pub fn payload(&self) -> CommPayload {
        CommPayload {
            policy: self.policy.clone(),
            reward_critic: self.reward_critic.clone(),
        }
    }
}

/// Parameters exchanged at a communication round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CommPayload {
    pub policy: FeedforwardNet,
    pub reward_critic: FeedforwardNet,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PpoStepReport {
    pub j_hat_costs: Vec<f64>,
    pub reward_critic_loss: f64,
    pub cost_critic_losses: Vec<f64>,
    /// `Clip(θ_{j-1})` for `j = 1..=K_in`.
    pub surrogates: Vec<f64>,
    pub episodes: Vec<EpisodeReturn>,
}

/// Learning update on a collected batch.
pub fn update_from_batch(agent: &mut PpoAgentState, batch: &TrajectoryBatch, cfg: &PpoConfig) -> Result<PpoStepReport> {
    if batch.is_empty() {
        return Err(Error::MalformedBatch("empty batch".into()));
    }
    let obs = batch.observation_matrix();
    let tail_obs = |net: &FeedforwardNet| -> Result<f64> {
        if batch.cut {
            Ok(net.forward(&batch.final_observation)?[0])
        } else {
            Ok(0.0)
        }
    };
    let reward_to_go = returns_to_go_bootstrapped(&batch.rewards, &batch.starts, cfg.discount, tail_obs(&agent.reward_critic)?);
    let mut cost_to_go = Vec::with_capacity(agent.constraints.len());
    for (idx, critic) in agent.cost_critics.iter().enumerate() {
        cost_to_go.push(returns_to_go_bootstrapped(&batch.costs[idx], &batch.starts, cfg.discount, tail_obs(critic)?));
    }
    let j_hat = cost_to_go
        .iter()
        .map(|c| episode_avg_cost(c, &batch.starts))
        .collect::<Result<Vec<_>>>()?;
    let lambdas_t = agent.lambdas.clone();
    for (idx, l) in agent.lambdas.iter_mut().enumerate() {
        *l = dual_update(*l, agent.budgets[idx], j_hat[idx], cfg.lr_lambda, cfg.lambda_max);
    }

    let v_r = values(&agent.reward_critic, &obs)?;
    let adv_r: Vec<f64> = reward_to_go.iter().zip(&v_r).map(|(r, v)| r - v).collect();
    let mut adv_c = Vec::with_capacity(cost_to_go.len());
    for (critic, c) in agent.cost_critics.iter().zip(&cost_to_go) {
        let v = values(critic, &obs)?;
        adv_c.push(c.iter().zip(&v).map(|(c, v)| c - v).collect::<Vec<f64>>());
    }

    let (reward_critic_loss, g) = critic_objective(&agent.reward_critic, &obs, &reward_to_go)?;
    agent.opt_reward.step(agent.reward_critic.params_mut(), &g);
    let mut cost_critic_losses = Vec::with_capacity(cost_to_go.len());
    for ((critic, opt), c) in agent.cost_critics.iter_mut().zip(&mut agent.opt_costs).zip(&cost_to_go) {
        let (loss, g) = critic_objective(critic, &obs, c)?;
        opt.step(critic.params_mut(), &g);
        cost_critic_losses.push(loss);
    }

    let advantages: Vec<f64> = (0..batch.len())
        .map(|l| {
            let mut a = agent.reward_weight * adv_r[l];
            for (lambda, ac) in lambdas_t.iter().zip(&adv_c) {
                a -= lambda * ac[l];
            }
            a
        })
        .collect();
    let old = log_probs(&agent.policy, &obs, &batch.actions)?;
    let mut surrogates = Vec::with_capacity(cfg.inner_steps);
    for _ in 0..cfg.inner_steps {
        let (value, mut g) = clip_objective(&agent.policy, &obs, &batch.actions, &old, &advantages, cfg.clip)?;
        surrogates.push(value);
        g.iter_mut().for_each(|x| *x = -*x);
        agent.opt_policy.step(agent.policy.params_mut(), &g);
    }
    Ok(PpoStepReport {
        j_hat_costs: j_hat,
        reward_critic_loss,
        cost_critic_losses,
        surrogates,
        episodes: Vec::new(),
    })
}

/// One local iteration: collect a batch with the current policy, then update.
pub fn local_step_fedppo<E: EpisodicEnv + ?Sized>(env: &mut E, agent: &mut PpoAgentState, cfg: &PpoConfig) -> Result<PpoStepReport> {
    let (batch, episodes) = collect_batch(env, &agent.policy, &agent.constraints, cfg.horizon, &mut agent.rng)?;
    let mut report = update_from_batch(agent, &batch, cfg)?;
    report.episodes = episodes;
    Ok(report)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeWindow {
    capacity: usize,
    episodes: VecDeque<EpisodeReturn>,
}

impl EpisodeWindow {
    pub fn new(capacity: usize) -> Self {
        EpisodeWindow {
            capacity,
            episodes: VecDeque::with_capacity(capacity),
        }
    }

    pub fn push(&mut self, e: EpisodeReturn) {
        if self.episodes.len() == self.capacity {
            self.episodes.pop_front();
        }
        self.episodes.push_back(e);
    }

    pub fn len(&self) -> usize {
        self.episodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.episodes.is_empty()
    }

    /// Mean reward and mean of each cost; NaN while empty.
    pub fn means(&self, n_costs: usize) -> (f64, Vec<f64>) {
        let n = self.episodes.len() as f64;
        if self.episodes.is_empty() {
            return (f64::NAN, vec![f64::NAN; n_costs]);
        }
        let reward = self.episodes.iter().map(|e| e.reward).sum::<f64>() / n;
        let costs = (0..n_costs)
            .map(|j| self.episodes.iter().map(|e| e.costs[j]).sum::<f64>() / n)
            .collect();
        (reward, costs)
    }
}

#[derive(Debug, Clone)]
pub struct PpoRunOutput {
    pub policy: FeedforwardNet,
    pub reward_critic: FeedforwardNet,
    pub logs: Vec<RoundLog>,
    /// Multiplier per constraint; zero for constraints nobody holds.
    pub lambdas: Vec<f64>,
    /// Last-window episode statistics per agent.
    pub windows: Vec<EpisodeWindow>,
}

/// Which agents take part and how they are weighted.
struct Roster {
    assignment: Vec<Vec<usize>>,
    weight: f64,
    streams: Vec<u64>,
    communicate: bool,
}

pub type EnvFactory<'a> = dyn Fn(usize) -> Box<dyn EpisodicEnv + Send> + Sync + 'a;

fn run_ppo_loop(
    factory: &EnvFactory<'_>,
    budgets: &[f64],
    fed: &FederationConfig,
    cfg: &PpoConfig,
    roster: Roster,
    inspect: &mut dyn FnMut(usize, &CommPayload),
) -> Result<PpoRunOutput> {
    fed.validate()?;
    cfg.validate()?;
    let mut envs: Vec<Box<dyn EpisodicEnv + Send>> = (0..roster.assignment.len()).map(factory).collect();
    let probe = &envs[0];
    let (dim, na, nc) = (probe.observation_dim(), probe.n_actions(), probe.n_costs());
    if budgets.len() != nc {
        return Err(Error::invalid("env.budgets", format!("{} budgets for {nc} costs", budgets.len())));
    }
    for g in &roster.assignment {
        if let Some(&j) = g.iter().find(|&&j| j >= nc) {
            return Err(Error::invalid("federation.constraint_assignment", format!("constraint {j} but the environment has {nc}")));
        }
    }
    let mut init = ChaCha8Rng::seed_from_u64(fed.seed);
    init.set_stream(u64::MAX - 1);
    let mut policy = FeedforwardNet::new(&cfg.sizes(dim, na), 0.01, &mut init)?;
    let mut reward_critic = FeedforwardNet::new(&cfg.sizes(dim, 1), 1.0, &mut init)?;
    let cost_critic = FeedforwardNet::new(&cfg.sizes(dim, 1), 1.0, &mut init)?;
    let mut agents = roster
        .assignment
        .iter()
        .zip(&roster.streams)
        .map(|(g, &stream)| {
            PpoAgentState::new(
                policy.clone(),
                reward_critic.clone(),
                &cost_critic,
                g.clone(),
                budgets,
                roster.weight,
                cfg,
                fed.seed,
                stream,
            )
        })
        .collect::<Result<Vec<_>>>()?;
    let mut windows = vec![EpisodeWindow::new(cfg.log_window); agents.len()];
    let mut logs = Vec::with_capacity(fed.total_steps);

    let mut t = 0;
    while t < fed.total_steps {
        for a in agents.iter_mut() {
            a.policy.set_params(policy.params())?;
            a.reward_critic.set_params(reward_critic.params())?;
        }
        let round_end = (t + fed.local_steps).min(fed.total_steps);
        while t < round_end {
            let reports = agents
                .par_iter_mut()
                .zip(envs.par_iter_mut())
                .map(|(a, env)| local_step_fedppo(env.as_mut(), a, cfg))
                .collect::<Result<Vec<_>>>()?;
            t += 1;
            let mut records = Vec::with_capacity(agents.len());
            for (i, (report, window)) in reports.into_iter().zip(windows.iter_mut()).enumerate() {
                for e in report.episodes {
                    window.push(e);
                }
                let (j_r, j_c) = window.means(nc);
                records.push(AgentRecord { agent: i, j_r, j_c });
            }
            let mut lambdas = vec![0.0; nc];
            for a in &agents {
                for (&j, &l) in a.constraints.iter().zip(&a.lambdas) {
                    lambdas[j] = l;
                }
            }
            logs.push(RoundLog {
                iteration: t,
                agents: records,
                lambdas,
                global: None,
                truncations: 0,
            });
        }
        if roster.communicate {
            let payloads: Vec<CommPayload> = agents.iter().map(PpoAgentState::payload).collect();
            for (i, p) in payloads.iter().enumerate() {
                inspect(i, p);
            }
            let thetas: Vec<&[f64]> = payloads.iter().map(|p| p.policy.params()).collect();
            let phis: Vec<&[f64]> = payloads.iter().map(|p| p.reward_critic.params()).collect();
            policy.set_params(&aggregate_params_mean(&thetas)?)?;
            reward_critic.set_params(&aggregate_params_mean(&phis)?)?;
        } else {
            policy = agents[0].policy.clone();
            reward_critic = agents[0].reward_critic.clone();
        }
    }
    let mut lambdas = vec![0.0; nc];
    for a in &agents {
        for (&j, &l) in a.constraints.iter().zip(&a.lambdas) {
            lambdas[j] = l;
        }
    }
    Ok(PpoRunOutput {
        policy,
        reward_critic,
        logs,
        lambdas,
        windows,
    })
}

/// FedPPO with a hook that sees every payload sent at a communication round.
pub fn run_fedppo_inspect(
    factory: &EnvFactory<'_>,
    budgets: &[f64],
    fed: &FederationConfig,
    cfg: &PpoConfig,
    inspect: &mut dyn FnMut(usize, &CommPayload),
) -> Result<PpoRunOutput> {
    let roster = Roster {
        assignment: fed.assignment(),
        weight: 1.0 / fed.n_agents as f64,
        streams: (0..fed.n_agents as u64).collect(),
        communicate: true,
    };
    run_ppo_loop(factory, budgets, fed, cfg, roster, inspect)
}

pub fn run_fedppo(factory: &EnvFactory<'_>, budgets: &[f64], fed: &FederationConfig, cfg: &PpoConfig) -> Result<PpoRunOutput> {
    run_fedppo_inspect(factory, budgets, fed, cfg, &mut |_, _| {})
}

/// PPO_k: one agent that only sees constraint `k`.
pub fn run_ppo_local(factory: &EnvFactory<'_>, budgets: &[f64], k: usize, fed: &FederationConfig, cfg: &PpoConfig) -> Result<PpoRunOutput> {
    if k >= budgets.len() {
        return Err(Error::invalid("mode", format!("local agent {k} but only {} constraints", budgets.len())));
    }
    let roster = Roster {
        assignment: vec![vec![k]],
        weight: 1.0,
        streams: vec![k as u64],
        communicate: false,
    };
    run_ppo_loop(factory, budgets, fed, cfg, roster, &mut |_, _| {})
}

/// PPO_o: one agent holding every constraint.
pub fn run_ppo_omniscient(factory: &EnvFactory<'_>, budgets: &[f64], fed: &FederationConfig, cfg: &PpoConfig) -> Result<PpoRunOutput> {
    let roster = Roster {
        assignment: vec![(0..budgets.len()).collect()],
        weight: 1.0,
        streams: vec![0],
        communicate: false,
    };
    run_ppo_loop(factory, budgets, fed, cfg, roster, &mut |_, _| {})
}
