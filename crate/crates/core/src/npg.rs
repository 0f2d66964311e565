//! Natural policy gradient directions for softmax tabular policies.
//!
//! For the softmax class the compatible function approximation problem
//! `min_w E_ν (A(s,a) - wᵀ∇log π(a|s))²` is realisable: any `w` whose row
//! `s` equals `A(s,·)` plus a constant solves it, and the minimum-norm
//! solution is the per-state centred advantage. The natural gradient
//! `F(θ)†∇J(θ)` is that minimum-norm solution divided by `1 - γ`.
//!
//! [`estimate_local`] is the sampled inner loop run by each agent every
//! iteration: `K` SGD steps on the compatible loss for the reward and each
//! visible cost, with independent geometric rollouts for `Q̂` and `V̂`, and a
//! running estimate of `V_c(ρ)` for the dual update.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::cmdp::{
    action_values_from, draw_horizon, rollout_sums, sample_occupancy_pair_with, Dynamics, PolicyEvaluator,
    PolicyTable, Signal, Start, TabularCmdp,
};
use crate::error::{Error, Result};
use crate::policy::{score_from_probs, SoftmaxParams};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CompatSgdConfig {
    pub k_samples: usize,
    pub alpha: f64,
}

impl Default for CompatSgdConfig {
    /// `K = 10`, `α = 1/(4 L²)` with score-norm bound `L = √2`.
    fn default() -> Self {
        CompatSgdConfig {
            k_samples: 10,
            alpha: 0.125,
        }
    }
}

impl CompatSgdConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k_samples == 0 {
            return Err(Error::invalid("federation.k_samples", "must be at least 1"));
        }
        if !(self.alpha > 0.0) || !self.alpha.is_finite() {
            return Err(Error::invalid("federation.alpha", "must be positive"));
        }
        Ok(())
    }
}

/// One agent's per-iteration estimates.
#[derive(Debug, Clone, PartialEq)]
pub struct NpgEstimate {
    pub w_reward: Vec<f64>,
    /// One direction per visible cost, in the order the costs were given.
    pub w_costs: Vec<Vec<f64>>,
    /// `V̂_c(ρ)` per visible cost, clamped to `[0, 1/(1-γ)]`.
    pub v_costs_rho: Vec<f64>,
    pub truncations: u64,
}

/// Per-state centred advantage: the minimum-norm compatible regression
/// solution for a softmax policy.
pub fn compat_minimizer_from(d: &Dynamics, policy: &PolicyTable, table: &[f64]) -> Result<Vec<f64>> {
    let ev = PolicyEvaluator::new(d, policy)?;
    let v = ev.evaluate(table)?.values;
    let mut adv = action_values_from(d, table, &v).advantage;
    let na = d.n_actions;
    for row in adv.chunks_mut(na) {
        let mean = row.iter().sum::<f64>() / na as f64;
        row.iter_mut().for_each(|x| *x -= mean);
    }
    Ok(adv)
}

/// `F(θ)†∇_θ J_signal(θ)` in closed form.
pub fn exact_npg_direction(cmdp: &TabularCmdp, params: &SoftmaxParams, signal: Signal) -> Result<Vec<f64>> {
    let policy = params.policy();
    let mut w = compat_minimizer_from(&cmdp.dynamics, &policy, cmdp.signal(signal)?)?;
    let scale = 1.0 / (1.0 - cmdp.discount());
    w.iter_mut().for_each(|x| *x *= scale);
    Ok(w)
}

/// `E_{(s,a)~ν} (A(s,a) - wᵀ∇log π(a|s))²`, evaluated exactly.
pub fn compat_error(cmdp: &TabularCmdp, params: &SoftmaxParams, signal: Signal, w: &[f64]) -> Result<f64> {
    if w.len() != params.theta.len() {
        return Err(Error::ShapeMismatch {
            expected: format!("{}", params.theta.len()),
            got: format!("{}", w.len()),
        });
    }
    let policy = params.policy();
    let ev = PolicyEvaluator::new(&cmdp.dynamics, &policy)?;
    let table = cmdp.signal(signal)?;
    let v = ev.evaluate(table)?.values;
    let adv = action_values_from(&cmdp.dynamics, table, &v).advantage;
    let occ = ev.occupancy()?;
    let na = cmdp.n_actions();
    let mut err = 0.0;
    for s in 0..cmdp.n_states() {
        let pi = policy.row(s);
        let row = &w[s * na..(s + 1) * na];
        let mean_w: f64 = pi.iter().zip(row).map(|(p, x)| p * x).sum();
        for a in 0..na {
            let k = s * na + a;
            let pred = row[a] - mean_w;
            err += occ.state_action_dist[k] * (adv[k] - pred).powi(2);
        }
    }
    Ok(err)
}

/// The sampled estimation loop for one agent and one iteration.
///
/// `costs` are the cost tables the agent is allowed to see. When
/// `estimate_rho` is false the `V̂_c(ρ)` rollouts are skipped and
/// `v_costs_rho` is empty.
pub fn estimate_local<R: Rng + ?Sized>(
    d: &Dynamics,
    policy: &PolicyTable,
    reward: &[f64],
    costs: &[&[f64]],
    cfg: &CompatSgdConfig,
    estimate_rho: bool,
    rng: &mut R,
) -> NpgEstimate {
    let len = d.table_len();
    let na = d.n_actions;
    let n_sig = 1 + costs.len();
    let mut tables: Vec<&[f64]> = Vec::with_capacity(n_sig);
    tables.push(reward);
    tables.extend_from_slice(costs);

    let mut w = vec![vec![0.0; len]; n_sig];
    let mut w_avg = vec![vec![0.0; len]; n_sig];
    let mut q_hat = vec![0.0; n_sig];
    let mut v_hat = vec![0.0; n_sig];
    let mut rho_sums = vec![0.0; costs.len()];
    let mut v_rho = vec![0.0; costs.len()];
    let mut truncations = 0u64;
    let k_total = cfg.k_samples as f64;

    for _ in 0..cfg.k_samples {
        let ((s, a), t0) = sample_occupancy_pair_with(d, policy, rng);
        let (lq, t1) = draw_horizon(d, rng);
        rollout_sums(d, policy, Start::StateAction(s, a), lq, &tables, &mut q_hat, rng);
        let (lv, t2) = draw_horizon(d, rng);
        rollout_sums(d, policy, Start::State(s), lv, &tables, &mut v_hat, rng);
        truncations += t0 as u64 + t1 as u64 + t2 as u64;

        let score = score_from_probs(policy.row(s), s, a);
        for j in 0..n_sig {
            let adv = q_hat[j] - v_hat[j];
            let coef = 2.0 * (score.dot(&w[j]) - adv);
            let row = &mut w[j][s * na..(s + 1) * na];
            for (x, g) in row.iter_mut().zip(&score.row) {
                *x -= cfg.alpha * coef * g;
            }
            for (acc, x) in w_avg[j].iter_mut().zip(&w[j]) {
                *acc += x / k_total;
            }
        }

        if estimate_rho && !costs.is_empty() {
            let (l, t3) = draw_horizon(d, rng);
            truncations += t3 as u64;
            rollout_sums(d, policy, Start::Initial, l, costs, &mut rho_sums, rng);
            for (v, x) in v_rho.iter_mut().zip(&rho_sums) {
                *v += x / k_total;
            }
        }
    }

    let vmax = 1.0 / (1.0 - d.discount);
    let mut it = w_avg.into_iter();
    let w_reward = it.next().expect("reward direction");
    NpgEstimate {
        w_reward,
        w_costs: it.collect(),
        v_costs_rho: if estimate_rho {
            v_rho.into_iter().map(|v| v.clamp(0.0, vmax)).collect()
        } else {
            Vec::new()
        },
        truncations,
    }
}

/// Noise-free counterpart of [`estimate_local`]: exact compatible minimisers
/// and exact cost values.
pub fn estimate_local_exact(d: &Dynamics, policy: &PolicyTable, reward: &[f64], costs: &[&[f64]]) -> Result<NpgEstimate> {
    let ev = PolicyEvaluator::new(d, policy)?;
    let centred = |table: &[f64]| -> Result<(Vec<f64>, f64)> {
        let e = ev.evaluate(table)?;
        let mut adv = action_values_from(d, table, &e.values).advantage;
        for row in adv.chunks_mut(d.n_actions) {
            let mean = row.iter().sum::<f64>() / row.len() as f64;
            row.iter_mut().for_each(|x| *x -= mean);
        }
        Ok((adv, e.objective))
    };
    let (w_reward, _) = centred(reward)?;
    let mut w_costs = Vec::with_capacity(costs.len());
    let mut v_costs_rho = Vec::with_capacity(costs.len());
    for c in costs {
        let (w, j) = centred(c)?;
        w_costs.push(w);
        v_costs_rho.push(j);
    }
    Ok(NpgEstimate {
        w_reward,
        w_costs,
        v_costs_rho,
        truncations: 0,
    })
}

/// SGD on the compatible loss for a single signal; returns the average of
/// the `K` iterates.
pub fn sgd_compatible<R: Rng + ?Sized>(
    cmdp: &TabularCmdp,
    params: &SoftmaxParams,
    signal: Signal,
    cfg: &CompatSgdConfig,
    rng: &mut R,
) -> Result<Vec<f64>> {
    cfg.validate()?;
    let policy = params.policy();
    let table = cmdp.signal(signal)?;
    Ok(estimate_local(&cmdp.dynamics, &policy, table, &[], cfg, false, rng).w_reward)
}

/// Mean of `K` geometric-horizon rollout sums from `s ~ ρ`.
pub fn estimate_value_rho<R: Rng + ?Sized>(
    cmdp: &TabularCmdp,
    params: &SoftmaxParams,
    signal: Signal,
    k: usize,
    rng: &mut R,
) -> Result<f64> {
    if k == 0 {
        return Err(Error::invalid("k", "must be at least 1"));
    }
    let policy = params.policy();
    let table = cmdp.signal(signal)?;
    let d = &cmdp.dynamics;
    let mut sum = [0.0];
    let mut acc = 0.0;
    for _ in 0..k {
        let (l, _) = draw_horizon(d, rng);
        rollout_sums(d, &policy, Start::Initial, l, &[table], &mut sum, rng);
        acc += sum[0];
    }
    Ok(acc / k as f64)
}

/// `ŵ_i = ŵ_r / N - λ_i ŵ_c`.
pub fn local_direction(w_reward: &[f64], w_cost: &[f64], lambda: f64, n_agents: usize) -> Result<Vec<f64>> {
    if w_reward.len() != w_cost.len() {
        return Err(Error::ShapeMismatch {
            expected: format!("{}", w_reward.len()),
            got: format!("{}", w_cost.len()),
        });
    }
    if n_agents == 0 {
        return Err(Error::invalid("n_agents", "must be at least 1"));
    }
    let inv_n = 1.0 / n_agents as f64;
    Ok(w_reward.iter().zip(w_cost).map(|(r, c)| inv_n * r - lambda * c).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn bandit() -> TabularCmdp {
        TabularCmdp::new(
            Dynamics {
                n_states: 1,
                n_actions: 2,
                transition: vec![1.0, 1.0],
                discount: 1e-12,
                initial_dist: vec![1.0],
            },
            vec![1.0, 0.0],
            vec![vec![0.3, 0.3]],
            vec![0.1],
        )
        .unwrap()
    }

    #[test]
    fn bandit_direction() {
        let w = exact_npg_direction(&bandit(), &SoftmaxParams::zeros(1, 2), Signal::Reward).unwrap();
        assert!((w[0] - 0.5).abs() < 1e-9 && (w[1] + 0.5).abs() < 1e-9);
    }

    #[test]
    fn constant_signal_zero_direction_and_error() {
        let m = bandit();
        let p = SoftmaxParams::from_vec(1, 2, vec![0.4, -1.0]).unwrap();
        let w = exact_npg_direction(&m, &p, Signal::Cost(0)).unwrap();
        assert!(w.iter().all(|x| x.abs() < 1e-12));
        assert!(compat_error(&m, &p, Signal::Cost(0), &[0.0, 0.0]).unwrap() < 1e-20);
    }

    #[test]
    fn zero_signal_sgd_is_exactly_zero() {
        let mut m = bandit();
        m.costs[0] = vec![0.0, 0.0];
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let w = sgd_compatible(&m, &SoftmaxParams::zeros(1, 2), Signal::Cost(0), &CompatSgdConfig::default(), &mut rng)
            .unwrap();
        assert!(w.iter().all(|&x| x == 0.0));
        let v = estimate_value_rho(&m, &SoftmaxParams::zeros(1, 2), Signal::Cost(0), 50, &mut rng).unwrap();
        assert_eq!(v, 0.0);
    }

    #[test]
    fn gradient_plug_in() {
        // w = 0, Â = 1 gives G = -2g; one step from zero moves w by 2αg.
        let score = score_from_probs(&[0.5, 0.5], 0, 0);
        let w = [0.0, 0.0];
        let coef = 2.0 * (score.dot(&w) - 1.0);
        let g: Vec<f64> = score.row.iter().map(|x| coef * x).collect();
        assert_eq!(g, vec![-1.0, 1.0]);
    }

    #[test]
    fn local_direction_cases() {
        let r = [1.0, -2.0, 0.5];
        let c = [0.3, 0.1, -0.7];
        assert_eq!(local_direction(&r, &c, 0.0, 1).unwrap(), r.to_vec());
        let z = local_direction(&r, &r, 0.25, 4).unwrap();
        assert!(z.iter().all(|x| x.abs() < 1e-15));
        let v = local_direction(&r, &c, 0.5, 4).unwrap();
        for k in 0..3 {
            assert!((v[k] - (r[k] / 4.0 - 0.5 * c[k])).abs() < 1e-15);
        }
        assert!(local_direction(&r, &c[..2], 0.5, 4).is_err());
    }

    #[test]
    fn single_state_value_rho() {
        let m = TabularCmdp::new(
            Dynamics {
                n_states: 1,
                n_actions: 1,
                transition: vec![1.0],
                discount: 0.5,
                initial_dist: vec![1.0],
            },
            vec![0.0],
            vec![vec![1.0]],
            vec![1.0],
        )
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let n = 100_000;
        let v = estimate_value_rho(&m, &SoftmaxParams::zeros(1, 1), Signal::Cost(0), n, &mut rng).unwrap();
        // Var(L + 1) = γ/(1-γ)² = 2 for γ = 0.5.
        let se = (2.0 / n as f64).sqrt();
        assert!((v - 2.0).abs() < 3.0 * se, "{v}");
    }
}
