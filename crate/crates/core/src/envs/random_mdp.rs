use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;
use serde::{Deserialize, Serialize};

use crate::cmdp::{evaluate_all, Dynamics, PolicyTable, TabularCmdp};
use crate::error::{Error, Result};
use crate::npg::estimate_local_exact;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RandomMdpParams {
    pub n_states: usize,
    pub n_actions: usize,
    pub n_constraints: usize,
    pub hardness: f64,
    pub discount: f64,
    /// Run the exact primal-dual feasibility screen and redraw on failure.
    pub screen: bool,
    pub max_retries: usize,
}

impl Default for RandomMdpParams {
    fn default() -> Self {
        RandomMdpParams {
            n_states: 3,
            n_actions: 5,
            n_constraints: 4,
            hardness: 0.7,
            discount: 0.9,
            screen: true,
            max_retries: 20,
        }
    }
}

impl RandomMdpParams {
    pub fn validate(&self) -> Result<()> {
        if self.n_states == 0 || self.n_actions == 0 {
            return Err(Error::invalid("env.n_states", "state and action counts must be positive"));
        }
        if !(self.hardness > 0.0 && self.hardness <= 1.0) {
            return Err(Error::invalid("env.hardness", format!("{} not in (0,1]", self.hardness)));
        }
        if !(self.discount > 0.0 && self.discount < 1.0) {
            return Err(Error::invalid("env.discount", format!("{} not in (0,1)", self.discount)));
        }
        Ok(())
    }
}

fn dirichlet_ones<R: Rng>(n: usize, rng: &mut R) -> Vec<f64> {
    let mut v: Vec<f64> = (0..n).map(|_| rng.sample::<f64, _>(Exp1)).collect();
    let z: f64 = v.iter().sum();
    v.iter_mut().for_each(|x| *x /= z);
    v
}

fn draw<R: Rng>(p: &RandomMdpParams, rng: &mut R) -> Result<TabularCmdp> {
    let (ns, na) = (p.n_states, p.n_actions);
    let mut transition = Vec::with_capacity(ns * na * ns);
    for _ in 0..ns * na {
        transition.extend(dirichlet_ones(ns, rng));
    }
    let reward: Vec<f64> = (0..ns * na).map(|_| rng.gen::<f64>()).collect();
    let costs: Vec<Vec<f64>> = (0..p.n_constraints)
        .map(|_| (0..ns * na).map(|_| rng.gen::<f64>()).collect())
        .collect();
    let mut anchor = Vec::with_capacity(ns * na);
    for _ in 0..ns {
        anchor.extend(dirichlet_ones(na, rng));
    }
    let dynamics = Dynamics {
        n_states: ns,
        n_actions: na,
        transition,
        discount: p.discount,
        initial_dist: vec![1.0 / ns as f64; ns],
    };
    let mut cmdp = TabularCmdp::new(dynamics, reward, costs, vec![0.0; p.n_constraints])?;
    let anchor = PolicyTable::new(ns, na, anchor)?;
    let (_, jc) = evaluate_all(&cmdp, &anchor)?;
    cmdp.thresholds = jc.iter().map(|j| p.hardness * j).collect();
    Ok(cmdp)
}

/// Smallest `max_i (J_ci - d_i) / d_i` reached by 2000 iterations of exact
/// omniscient primal-dual NPG.
pub(crate) fn screen_violation(cmdp: &TabularCmdp) -> Result<f64> {
    let (ns, na) = (cmdp.n_states(), cmdp.n_actions());
    let mut theta = vec![0.0; ns * na];
    let mut lambda = vec![0.0; cmdp.n_constraints()];
    let costs: Vec<&[f64]> = cmdp.costs.iter().map(Vec::as_slice).collect();
    let (eta_theta, eta_lambda, lambda_max) = (0.1, 0.1, 10.0);
    let mut best = f64::INFINITY;
    for _ in 0..2000 {
        let params = crate::policy::SoftmaxParams::from_vec(ns, na, theta.clone())?;
        let policy = params.policy();
        let est = estimate_local_exact(&cmdp.dynamics, &policy, &cmdp.reward, &costs)?;
        let worst = est
            .v_costs_rho
            .iter()
            .zip(&cmdp.thresholds)
            .map(|(j, d)| (j - d) / d.max(f64::MIN_POSITIVE))
            .fold(f64::NEG_INFINITY, f64::max);
        best = best.min(worst);
        for (k, t) in theta.iter_mut().enumerate() {
            let mut step = est.w_reward[k];
            for (l, w) in lambda.iter().zip(&est.w_costs) {
                step -= l * w[k];
            }
            *t += eta_theta * step;
        }
        for ((l, j), d) in lambda.iter_mut().zip(&est.v_costs_rho).zip(&cmdp.thresholds) {
            *l = (*l - eta_lambda * (d - j)).clamp(0.0, lambda_max);
        }
    }
    Ok(best)
}

/// Seeded random CMDP with thresholds set from a random anchor policy.
pub fn random_mdp_with(seed: u64, p: &RandomMdpParams) -> Result<TabularCmdp> {
    p.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let attempts = if p.screen { p.max_retries + 1 } else { 1 };
    for _ in 0..attempts {
        let cmdp = draw(p, &mut rng)?;
        if !p.screen || p.n_constraints == 0 || screen_violation(&cmdp)? <= 0.01 {
            return Ok(cmdp);
        }
    }
    Err(Error::Infeasible { retries: p.max_retries })
}

pub fn random_mdp(seed: u64, n_states: usize, n_actions: usize, n_constraints: usize, hardness: f64) -> Result<TabularCmdp> {
    random_mdp_with(
        seed,
        &RandomMdpParams {
            n_states,
            n_actions,
            n_constraints,
            hardness,
            ..RandomMdpParams::default()
        },
    )
}
