//! Federated primal-dual NPG on tabular CMDPs.
//!
//! Each agent holds its own policy logits, one multiplier per assigned
//! constraint, and a private RNG stream. Every `E` iterations the driver
//! broadcasts an aggregated policy; multipliers never leave their agent and
//! are not touched at communication rounds.
//!
//! The same loop runs all three regimes. A federated agent `i` maximises
//! the local Lagrangian `J_r / N + λ_i (d_i - J_{c_i})`; the local baseline
//! is one agent with weight 1 on the reward and a single constraint; the
//! omniscient baseline is one agent with every constraint.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cmdp::{evaluate_all, Dynamics, PolicyEvaluator, TabularCmdp};
use crate::error::{Error, Result};
use crate::npg::{estimate_local, estimate_local_exact, CompatSgdConfig};
use crate::policy::{aggregate_softmax, SoftmaxParams, ThetaProjection};

/// How local directions and cost values are obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Estimator {
    /// Geometric-rollout SGD on the compatible loss.
    #[default]
    Sampled,
    /// Exact compatible minimisers and exact cost values.
    Exact,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FederationConfig {
    pub n_agents: usize,
    pub local_steps: usize,
    pub total_steps: usize,
    pub lr_theta: f64,
    pub lr_lambda: f64,
    pub lambda_max: f64,
    pub k_samples: usize,
    pub alpha: f64,
    pub seed: u64,
    #[serde(default)]
    pub theta_projection: ThetaProjection,
    /// `Γ_i`: constraint indices visible to agent `i`. Empty means `Γ_i = {i}`.
    #[serde(default)]
    pub constraint_assignment: Vec<Vec<usize>>,
    #[serde(default)]
    pub estimator: Estimator,
    /// Keep every multiplier at zero (unconstrained runs).
    #[serde(default)]
    pub freeze_lambda: bool,
    /// Also return a uniformly drawn aggregated iterate.
    #[serde(default)]
    pub return_uniform_iterate: bool,
}

impl Default for FederationConfig {
    fn default() -> Self {
        FederationConfig {
            n_agents: 4,
            local_steps: 5,
            total_steps: 20_000,
            lr_theta: 1e-3,
            lr_lambda: 1e-3,
            lambda_max: 10.0,
            k_samples: 10,
            alpha: 0.125,
            seed: 0,
            theta_projection: ThetaProjection::Identity,
            constraint_assignment: Vec::new(),
            estimator: Estimator::Sampled,
            freeze_lambda: false,
            return_uniform_iterate: false,
        }
    }
}

impl FederationConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64, f: &str| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::invalid(format!("federation.{f}"), format!("{v} must be positive")))
            }
        };
        if self.n_agents == 0 {
            return Err(Error::invalid("federation.n_agents", "must be at least 1"));
        }
        if self.local_steps == 0 {
            return Err(Error::invalid("federation.local_steps", "must be at least 1"));
        }
        positive(self.lr_theta, "lr_theta")?;
        positive(self.lr_lambda, "lr_lambda")?;
        positive(self.lambda_max, "lambda_max")?;
        self.compat().validate()?;
        self.theta_projection.validate()?;
        if !self.constraint_assignment.is_empty() && self.constraint_assignment.len() != self.n_agents {
            return Err(Error::invalid(
                "federation.constraint_assignment",
                format!("{} entries for {} agents", self.constraint_assignment.len(), self.n_agents),
            ));
        }
        Ok(())
    }

    pub fn compat(&self) -> CompatSgdConfig {
        CompatSgdConfig {
            k_samples: self.k_samples,
            alpha: self.alpha,
        }
    }

    /// `Γ_i` for every agent.
    pub fn assignment(&self) -> Vec<Vec<usize>> {
        if self.constraint_assignment.is_empty() {
            (0..self.n_agents).map(|i| vec![i]).collect()
        } else {
            self.constraint_assignment.clone()
        }
    }
}

/// Projected dual step `clamp(λ - η(d - Ĵ), [0, λ_max])`.
pub fn dual_update(lambda: f64, threshold: f64, j_hat: f64, lr: f64, lambda_max: f64) -> f64 {
    (lambda - lr * (threshold - j_hat)).clamp(0.0, lambda_max)
}

/// What one agent is allowed to observe: the dynamics, the reward, and the
/// cost tables and thresholds of its assigned constraints.
pub struct AgentView<'a> {
    dynamics: &'a Dynamics,
    reward: &'a [f64],
    costs: Vec<(usize, &'a [f64], f64)>,
}

impl<'a> AgentView<'a> {
    pub fn new(cmdp: &'a TabularCmdp, assigned: &[usize]) -> Result<Self> {
        let costs = assigned
            .iter()
            .map(|&j| {
                let table = cmdp.costs.get(j).ok_or_else(|| {
                    Error::invalid(
                        "federation.constraint_assignment",
                        format!("constraint {j} but the environment has {}", cmdp.n_constraints()),
                    )
                })?;
                Ok((j, table.as_slice(), cmdp.thresholds[j]))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(AgentView {
            dynamics: &cmdp.dynamics,
            reward: &cmdp.reward,
            costs,
        })
    }

    pub fn dynamics(&self) -> &Dynamics {
        self.dynamics
    }

    pub fn reward(&self) -> &[f64] {
        self.reward
    }

    pub fn assigned(&self) -> Vec<usize> {
        self.costs.iter().map(|c| c.0).collect()
    }

    fn lookup(&self, j: usize) -> Result<&(usize, &'a [f64], f64)> {
        self.costs
            .iter()
            .find(|c| c.0 == j)
            .ok_or_else(|| Error::ConstraintAccess {
                requested: j,
                allowed: self.assigned(),
            })
    }

    pub fn cost(&self, j: usize) -> Result<&[f64]> {
        self.lookup(j).map(|c| c.1)
    }

    pub fn threshold(&self, j: usize) -> Result<f64> {
        self.lookup(j).map(|c| c.2)
    }
}

#[derive(Debug, Clone)]
pub struct AgentState {
    pub theta: SoftmaxParams,
    /// `Γ_i`, in the order of `lambdas`.
    pub constraints: Vec<usize>,
    pub lambdas: Vec<f64>,
    /// Weight on the reward term: `1/N` for federated agents, 1 otherwise.
    pub reward_weight: f64,
    pub rng: ChaCha8Rng,
}

impl AgentState {
    pub fn new(n_states: usize, n_actions: usize, constraints: Vec<usize>, reward_weight: f64, seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        AgentState {
            theta: SoftmaxParams::zeros(n_states, n_actions),
            lambdas: vec![0.0; constraints.len()],
            constraints,
            reward_weight,
            rng,
        }
    }
}

/// One primal-dual iteration for one agent. Returns the number of truncated
/// rollouts.
pub fn local_step_fednpg(view: &AgentView<'_>, agent: &mut AgentState, cfg: &FederationConfig) -> Result<u64> {
    let costs = agent
        .constraints
        .iter()
        .map(|&j| view.cost(j))
        .collect::<Result<Vec<_>>>()?;
    let policy = agent.theta.policy();
    let est = match cfg.estimator {
        Estimator::Sampled => estimate_local(view.dynamics(), &policy, view.reward(), &costs, &cfg.compat(), !cfg.freeze_lambda, &mut agent.rng),
        Estimator::Exact => estimate_local_exact(view.dynamics(), &policy, view.reward(), &costs)?,
    };
    for (k, t) in agent.theta.theta.iter_mut().enumerate() {
        let mut w = agent.reward_weight * est.w_reward[k];
        for (lambda, wc) in agent.lambdas.iter().zip(&est.w_costs) {
            w -= lambda * wc[k];
        }
        *t += cfg.lr_theta * w;
    }
    cfg.theta_projection.apply_in_place(&mut agent.theta.theta);
    if !cfg.freeze_lambda {
        for (idx, &j) in agent.constraints.iter().enumerate() {
            let d = view.threshold(j)?;
            agent.lambdas[idx] = dual_update(agent.lambdas[idx], d, est.v_costs_rho[idx], cfg.lr_lambda, cfg.lambda_max);
        }
    }
    Ok(est.truncations)
}

#[derive(Debug, Clone, PartialEq)]
pub struct AgentRecord {
    pub agent: usize,
    pub j_r: f64,
    /// Exact values of every cost, including ones the agent cannot see.
    pub j_c: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GlobalRecord {
    pub j_r: f64,
    pub j_c: Vec<f64>,
}

/// Telemetry for one iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundLog {
    /// Iterations completed, starting at 1.
    pub iteration: usize,
    pub agents: Vec<AgentRecord>,
    /// Multiplier per constraint; zero for constraints nobody holds.
    pub lambdas: Vec<f64>,
    /// Present after a communication round.
    pub global: Option<GlobalRecord>,
    pub truncations: u64,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub params: SoftmaxParams,
    pub logs: Vec<RoundLog>,
    pub uniform_iterate: Option<SoftmaxParams>,
    pub lambdas: Vec<f64>,
    pub truncations: u64,
}

fn lambda_vector(agents: &[AgentState], n_constraints: usize) -> Vec<f64> {
    let mut out = vec![0.0; n_constraints];
    for a in agents {
        for (&j, &l) in a.constraints.iter().zip(&a.lambdas) {
            out[j] = l;
        }
    }
    out
}

fn run_loop(cmdp: &TabularCmdp, cfg: &FederationConfig, mut agents: Vec<AgentState>, communicate: bool) -> Result<RunOutput> {
    cfg.validate()?;
    let views = agents
        .iter()
        .map(|a| AgentView::new(cmdp, &a.constraints))
        .collect::<Result<Vec<_>>>()?;
    let (ns, na) = (cmdp.n_states(), cmdp.n_actions());
    let mut global = SoftmaxParams::zeros(ns, na);
    let mut logs = Vec::with_capacity(cfg.total_steps);
    let mut truncations = 0u64;
    let mut picker = ChaCha8Rng::seed_from_u64(cfg.seed);
    picker.set_stream(u64::MAX);
    let mut sampled: Option<SoftmaxParams> = None;
    let mut rounds = 0u64;

    let mut t = 0;
    while t < cfg.total_steps {
        for a in agents.iter_mut() {
            a.theta = global.clone();
        }
        let round_end = (t + cfg.local_steps).min(cfg.total_steps);
        while t < round_end {
            let counts = agents
                .par_iter_mut()
                .zip(views.par_iter())
                .map(|(a, v)| local_step_fednpg(v, a, cfg))
                .collect::<Result<Vec<_>>>()?;
            let step_trunc: u64 = counts.iter().sum();
            truncations += step_trunc;
            t += 1;
            let records = agents
                .par_iter()
                .enumerate()
                .map(|(i, a)| {
                    let (j_r, j_c) = evaluate_all(cmdp, &a.theta.policy())?;
                    Ok(AgentRecord { agent: i, j_r, j_c })
                })
                .collect::<Result<Vec<_>>>()?;
            logs.push(RoundLog {
                iteration: t,
                agents: records,
                lambdas: lambda_vector(&agents, cmdp.n_constraints()),
                global: None,
                truncations: step_trunc,
            });
        }
        global = if !communicate || agents.len() == 1 {
            agents[0].theta.clone()
        } else {
            let thetas: Vec<SoftmaxParams> = agents.iter().map(|a| a.theta.clone()).collect();
            aggregate_softmax(&thetas)?
        };
        if communicate && t % cfg.local_steps == 0 {
            let (j_r, j_c) = evaluate_all(cmdp, &global.policy())?;
            if let Some(last) = logs.last_mut() {
                last.global = Some(GlobalRecord { j_r, j_c });
            }
            rounds += 1;
            if cfg.return_uniform_iterate && picker.gen_range(0..rounds) == 0 {
                sampled = Some(global.clone());
            }
        }
    }
    Ok(RunOutput {
        params: global,
        lambdas: lambda_vector(&agents, cmdp.n_constraints()),
        logs,
        uniform_iterate: sampled,
        truncations,
    })
}

/// FedNPG: `N` agents, agent `i` sees `Γ_i`, policies averaged every `E` steps.
pub fn run_fednpg(cmdp: &TabularCmdp, cfg: &FederationConfig) -> Result<RunOutput> {
    cfg.validate()?;
    let n = cfg.n_agents;
    let agents = cfg
        .assignment()
        .into_iter()
        .enumerate()
        .map(|(i, g)| AgentState::new(cmdp.n_states(), cmdp.n_actions(), g, 1.0 / n as f64, cfg.seed, i as u64))
        .collect();
    run_loop(cmdp, cfg, agents, true)
}

/// NPG_k: one agent trained on constraint `k` only, without communication.
pub fn run_baseline_local(cmdp: &TabularCmdp, k: usize, cfg: &FederationConfig) -> Result<RunOutput> {
    if k >= cmdp.n_constraints() {
        return Err(Error::invalid("mode", format!("local agent {k} but only {} constraints", cmdp.n_constraints())));
    }
    let agent = AgentState::new(cmdp.n_states(), cmdp.n_actions(), vec![k], 1.0, cfg.seed, k as u64);
    let single = FederationConfig {
        n_agents: 1,
        constraint_assignment: Vec::new(),
        ..cfg.clone()
    };
    run_loop(cmdp, &single, vec![agent], false)
}

/// NPG_o: one agent holding every constraint and multiplier.
pub fn run_baseline_omniscient(cmdp: &TabularCmdp, cfg: &FederationConfig) -> Result<RunOutput> {
    let agent = AgentState::new(
        cmdp.n_states(),
        cmdp.n_actions(),
        (0..cmdp.n_constraints()).collect(),
        1.0,
        cfg.seed,
        0,
    );
    let single = FederationConfig {
        n_agents: 1,
        constraint_assignment: Vec::new(),
        ..cfg.clone()
    };
    run_loop(cmdp, &single, vec![agent], false)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LagrangianValue {
    /// `L₀ = J_r + Σ λ_i (d_i - J_{c_i})`.
    pub global: f64,
    /// `L_i = J_r / N + λ_i (d_i - J_{c_i})`.
    pub local: Vec<f64>,
}

pub fn lagrangian_value(cmdp: &TabularCmdp, params: &SoftmaxParams, lambdas: &[f64]) -> Result<LagrangianValue> {
    if lambdas.len() != cmdp.n_constraints() {
        return Err(Error::ShapeMismatch {
            expected: format!("{}", cmdp.n_constraints()),
            got: format!("{}", lambdas.len()),
        });
    }
    if let Some(i) = lambdas.iter().position(|&l| !(l >= 0.0)) {
        return Err(Error::invalid(format!("lambdas[{i}]"), "must be nonnegative"));
    }
    let policy = params.policy();
    let ev = PolicyEvaluator::new(&cmdp.dynamics, &policy)?;
    let j_r = ev.evaluate(&cmdp.reward)?.objective;
    let n = lambdas.len().max(1) as f64;
    let mut global = j_r;
    let mut local = Vec::with_capacity(lambdas.len());
    for (i, &l) in lambdas.iter().enumerate() {
        let j_c = ev.evaluate(&cmdp.costs[i])?.objective;
        let term = l * (cmdp.thresholds[i] - j_c);
        global += term;
        local.push(j_r / n + term);
    }
    Ok(LagrangianValue { global, local })
}
