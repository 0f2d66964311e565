//! Tabular constrained MDPs.
//!
//! A [`TabularCmdp`] holds the shared dynamics (transition kernel, discount,
//! initial distribution) together with one reward table and `N` cost tables.
//! Tables are stored row-major: entry `(s, a)` lives at `s * n_actions + a`,
//! and transition entry `(s, a, s')` at `(s * n_actions + a) * n_states + s'`.
//!
//! Two evaluation routes are provided. Exact evaluation solves the Bellman
//! linear system `(I - γ P_π) V = r_π` with a dense LU factorisation;
//! sampled evaluation uses geometric-horizon rollouts, where the horizon
//! `L` has `P(L = l) = (1 - γ) γ^l` and the undiscounted signal sum over
//! steps `0..=L` is an unbiased estimate of the discounted value.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Geometric};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const PROB_TOL: f64 = 1e-9;
/// Max-norm tolerance on the Bellman residual of an exact solve.
pub const RESIDUAL_TOL: f64 = 1e-8;

/// Selects the reward table or one of the cost tables.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Signal {
    Reward,
    Cost(usize),
}

/// Everything an agent may see about the environment besides the signals.
#[derive(Debug, Clone, PartialEq)]
pub struct Dynamics {
    pub n_states: usize,
    pub n_actions: usize,
    pub transition: Vec<f64>,
    pub discount: f64,
    pub initial_dist: Vec<f64>,
}

impl Dynamics {
    #[inline]
    pub fn next_state_probs(&self, s: usize, a: usize) -> &[f64] {
        let base = (s * self.n_actions + a) * self.n_states;
        &self.transition[base..base + self.n_states]
    }

    /// Upper bound on a sampled rollout horizon: `ceil(20 / (1 - γ))`.
    pub fn horizon_cap(&self) -> usize {
        (20.0 / (1.0 - self.discount)).ceil() as usize
    }

    pub fn table_len(&self) -> usize {
        self.n_states * self.n_actions
    }

    fn validate(&self) -> Result<()> {
        if self.n_states == 0 {
            return Err(Error::invalid("n_states", "must be positive"));
        }
        if self.n_actions == 0 {
            return Err(Error::invalid("n_actions", "must be positive"));
        }
        if !(self.discount > 0.0 && self.discount < 1.0) {
            return Err(Error::invalid("discount", format!("{} not in (0,1)", self.discount)));
        }
        let expected = self.n_states * self.n_actions * self.n_states;
        if self.transition.len() != expected {
            return Err(Error::invalid(
                "transition",
                format!("expected {expected} entries, got {}", self.transition.len()),
            ));
        }
        for s in 0..self.n_states {
            for a in 0..self.n_actions {
                let row = self.next_state_probs(s, a);
                check_distribution(row, &format!("transition[{s}][{a}]"))?;
            }
        }
        if self.initial_dist.len() != self.n_states {
            return Err(Error::invalid(
                "initial_dist",
                format!("expected {} entries, got {}", self.n_states, self.initial_dist.len()),
            ));
        }
        check_distribution(&self.initial_dist, "initial_dist")
    }
}

fn check_distribution(p: &[f64], field: &str) -> Result<()> {
    for (k, &x) in p.iter().enumerate() {
        if !x.is_finite() || x < 0.0 {
            return Err(Error::invalid(format!("{field}[{k}]"), format!("probability {x} is negative or not finite")));
        }
    }
    let sum: f64 = p.iter().sum();
    if (sum - 1.0).abs() > PROB_TOL {
        return Err(Error::invalid(field, format!("sums to {sum}, expected 1")));
    }
    Ok(())
}

fn check_unit_table(t: &[f64], len: usize, field: &str) -> Result<()> {
    if t.len() != len {
        return Err(Error::invalid(field, format!("expected {len} entries, got {}", t.len())));
    }
    for (k, &x) in t.iter().enumerate() {
        if !(0.0..=1.0).contains(&x) {
            return Err(Error::invalid(format!("{field}[{k}]"), format!("{x} outside [0,1]")));
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct TabularCmdp {
    pub dynamics: Dynamics,
    pub reward: Vec<f64>,
    pub costs: Vec<Vec<f64>>,
    pub thresholds: Vec<f64>,
}

impl TabularCmdp {
    pub fn new(dynamics: Dynamics, reward: Vec<f64>, costs: Vec<Vec<f64>>, thresholds: Vec<f64>) -> Result<Self> {
        let cmdp = TabularCmdp {
            dynamics,
            reward,
            costs,
            thresholds,
        };
        cmdp.validate()?;
        Ok(cmdp)
    }

    pub fn validate(&self) -> Result<()> {
        self.dynamics.validate()?;
        let len = self.dynamics.table_len();
        check_unit_table(&self.reward, len, "reward")?;
        for (i, c) in self.costs.iter().enumerate() {
            check_unit_table(c, len, &format!("costs[{i}]"))?;
        }
        if self.thresholds.len() != self.costs.len() {
            return Err(Error::invalid(
                "thresholds",
                format!("{} thresholds for {} cost tables", self.thresholds.len(), self.costs.len()),
            ));
        }
        for (i, &d) in self.thresholds.iter().enumerate() {
            if !d.is_finite() || d < 0.0 {
                return Err(Error::invalid(format!("thresholds[{i}]"), format!("{d} must be finite and nonnegative")));
            }
        }
        Ok(())
    }

    pub fn n_states(&self) -> usize {
        self.dynamics.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.dynamics.n_actions
    }

    pub fn n_constraints(&self) -> usize {
        self.costs.len()
    }

    pub fn discount(&self) -> f64 {
        self.dynamics.discount
    }

    pub fn signal(&self, signal: Signal) -> Result<&[f64]> {
        match signal {
            Signal::Reward => Ok(&self.reward),
            Signal::Cost(i) => self.costs.get(i).map(Vec::as_slice).ok_or_else(|| {
                Error::invalid("signal", format!("cost index {i} out of range ({} costs)", self.costs.len()))
            }),
        }
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let doc: CmdpDocument = serde_path_to_error::deserialize(de).map_err(|e| Error::Parse {
            path: e.path().to_string(),
            message: e.inner().to_string(),
        })?;
        doc.into_cmdp()
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json_str(&text)
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(&CmdpDocument::from(self)).expect("cmdp serialises")
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json_string()).map_err(|e| Error::io(path, e))
    }
}

/// On-disk layout: tables as nested arrays indexed `[s][a]` and `[s][a][s']`.
#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CmdpDocument {
    n_states: usize,
    n_actions: usize,
    transition: Vec<Vec<Vec<f64>>>,
    reward: Vec<Vec<f64>>,
    costs: Vec<Vec<Vec<f64>>>,
    thresholds: Vec<f64>,
    discount: f64,
    initial_dist: Vec<f64>,
}

fn flatten_table(rows: Vec<Vec<f64>>, n_states: usize, n_actions: usize, field: &str) -> Result<Vec<f64>> {
    if rows.len() != n_states {
        return Err(Error::invalid(field, format!("expected {n_states} rows, got {}", rows.len())));
    }
    let mut out = Vec::with_capacity(n_states * n_actions);
    for (s, row) in rows.into_iter().enumerate() {
        if row.len() != n_actions {
            return Err(Error::invalid(format!("{field}[{s}]"), format!("expected {n_actions} entries, got {}", row.len())));
        }
        out.extend(row);
    }
    Ok(out)
}

fn unflatten_table(t: &[f64], n_actions: usize) -> Vec<Vec<f64>> {
    t.chunks(n_actions).map(<[f64]>::to_vec).collect()
}

impl CmdpDocument {
    fn into_cmdp(self) -> Result<TabularCmdp> {
        let (ns, na) = (self.n_states, self.n_actions);
        if self.transition.len() != ns {
            return Err(Error::invalid("transition", format!("expected {ns} rows, got {}", self.transition.len())));
        }
        let mut transition = Vec::with_capacity(ns * na * ns);
        for (s, per_action) in self.transition.into_iter().enumerate() {
            if per_action.len() != na {
                return Err(Error::invalid(format!("transition[{s}]"), format!("expected {na} actions, got {}", per_action.len())));
            }
            for (a, row) in per_action.into_iter().enumerate() {
                if row.len() != ns {
                    return Err(Error::invalid(format!("transition[{s}][{a}]"), format!("expected {ns} entries, got {}", row.len())));
                }
                transition.extend(row);
            }
        }
        let reward = flatten_table(self.reward, ns, na, "reward")?;
        let costs = self
            .costs
            .into_iter()
            .enumerate()
            .map(|(i, c)| flatten_table(c, ns, na, &format!("costs[{i}]")))
            .collect::<Result<Vec<_>>>()?;
        TabularCmdp::new(
            Dynamics {
                n_states: ns,
                n_actions: na,
                transition,
                discount: self.discount,
                initial_dist: self.initial_dist,
            },
            reward,
            costs,
            self.thresholds,
        )
    }
}

impl From<&TabularCmdp> for CmdpDocument {
    fn from(m: &TabularCmdp) -> Self {
        let d = &m.dynamics;
        let transition = (0..d.n_states)
            .map(|s| (0..d.n_actions).map(|a| d.next_state_probs(s, a).to_vec()).collect())
            .collect();
        CmdpDocument {
            n_states: d.n_states,
            n_actions: d.n_actions,
            transition,
            reward: unflatten_table(&m.reward, d.n_actions),
            costs: m.costs.iter().map(|c| unflatten_table(c, d.n_actions)).collect(),
            thresholds: m.thresholds.clone(),
            discount: d.discount,
            initial_dist: d.initial_dist.clone(),
        }
    }
}

/// Action probabilities `π(a|s)`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyTable {
    pub n_states: usize,
    pub n_actions: usize,
    pub probs: Vec<f64>,
}

impl PolicyTable {
    pub fn new(n_states: usize, n_actions: usize, probs: Vec<f64>) -> Result<Self> {
        if probs.len() != n_states * n_actions {
            return Err(Error::ShapeMismatch {
                expected: format!("{}", n_states * n_actions),
                got: format!("{}", probs.len()),
            });
        }
        let p = PolicyTable {
            n_states,
            n_actions,
            probs,
        };
        for s in 0..n_states {
            check_distribution(p.row(s), &format!("policy[{s}]"))?;
        }
        Ok(p)
    }

    pub fn uniform(n_states: usize, n_actions: usize) -> Self {
        PolicyTable {
            n_states,
            n_actions,
            probs: vec![1.0 / n_actions as f64; n_states * n_actions],
        }
    }

    #[inline]
    pub fn row(&self, s: usize) -> &[f64] {
        &self.probs[s * self.n_actions..(s + 1) * self.n_actions]
    }

    fn check_matches(&self, d: &Dynamics) -> Result<()> {
        if self.n_states != d.n_states || self.n_actions != d.n_actions {
            return Err(Error::ShapeMismatch {
                expected: format!("{}x{}", d.n_states, d.n_actions),
                got: format!("{}x{}", self.n_states, self.n_actions),
            });
        }
        Ok(())
    }
}

/// State values and the objective `J = ⟨ρ, V⟩`.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub values: Vec<f64>,
    pub objective: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ActionValues {
    pub q: Vec<f64>,
    pub advantage: Vec<f64>,
}

/// Discounted state and state-action visitation distributions.
#[derive(Debug, Clone, PartialEq)]
pub struct OccupancyMeasure {
    pub state_dist: Vec<f64>,
    pub state_action_dist: Vec<f64>,
}

/// Factorised `I - γ P_π` for one policy. Reuse it to evaluate several
/// signals without refactorising.
pub struct PolicyEvaluator<'a> {
    dynamics: &'a Dynamics,
    policy: &'a PolicyTable,
    system: DMatrix<f64>,
    lu: nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
}

impl<'a> PolicyEvaluator<'a> {
    pub fn new(dynamics: &'a Dynamics, policy: &'a PolicyTable) -> Result<Self> {
        policy.check_matches(dynamics)?;
        let n = dynamics.n_states;
        let g = dynamics.discount;
        let mut system = DMatrix::<f64>::identity(n, n);
        for s in 0..n {
            for (a, &p) in policy.row(s).iter().enumerate() {
                if p == 0.0 {
                    continue;
                }
                for (s2, &q) in dynamics.next_state_probs(s, a).iter().enumerate() {
                    system[(s, s2)] -= g * p * q;
                }
            }
        }
        let lu = system.clone().lu();
        Ok(PolicyEvaluator {
            dynamics,
            policy,
            system,
            lu,
        })
    }

    fn solve_refined(&self, rhs: &DVector<f64>, transpose: bool) -> Result<DVector<f64>> {
        let transposed;
        let (matrix, lu) = if transpose {
            let m = self.system.transpose();
            let lu = m.clone().lu();
            transposed = (m, lu);
            (&transposed.0, &transposed.1)
        } else {
            (&self.system, &self.lu)
        };
        let mut x = lu.solve(rhs).ok_or(Error::Solver {
            residual: f64::INFINITY,
            tolerance: RESIDUAL_TOL,
        })?;
        let mut residual = (rhs - matrix * &x).amax();
        for _ in 0..3 {
            if residual <= RESIDUAL_TOL {
                break;
            }
            let r = rhs - matrix * &x;
            if let Some(dx) = lu.solve(&r) {
                x += dx;
            }
            residual = (rhs - matrix * &x).amax();
        }
        if !(residual <= RESIDUAL_TOL) {
            return Err(Error::Solver {
                residual,
                tolerance: RESIDUAL_TOL,
            });
        }
        Ok(x)
    }

    /// Expected one-step signal under the policy, `r_π(s)`.
    pub fn policy_signal(&self, table: &[f64]) -> Vec<f64> {
        let na = self.dynamics.n_actions;
        (0..self.dynamics.n_states)
            .map(|s| {
                self.policy
                    .row(s)
                    .iter()
                    .zip(&table[s * na..(s + 1) * na])
                    .map(|(p, r)| p * r)
                    .sum()
            })
            .collect()
    }

    pub fn evaluate(&self, table: &[f64]) -> Result<Evaluation> {
        if table.len() != self.dynamics.table_len() {
            return Err(Error::ShapeMismatch {
                expected: format!("{}", self.dynamics.table_len()),
                got: format!("{}", table.len()),
            });
        }
        let rhs = DVector::from_vec(self.policy_signal(table));
        let v = self.solve_refined(&rhs, false)?;
        let values: Vec<f64> = v.iter().copied().collect();
        let objective = dot(&self.dynamics.initial_dist, &values);
        Ok(Evaluation { values, objective })
    }

    pub fn action_values(&self, table: &[f64]) -> Result<ActionValues> {
        let v = self.evaluate(table)?.values;
        Ok(action_values_from(self.dynamics, table, &v))
    }

    pub fn occupancy(&self) -> Result<OccupancyMeasure> {
        let rho = DVector::from_column_slice(&self.dynamics.initial_dist);
        let y = self.solve_refined(&rho, true)?;
        let scale = 1.0 - self.dynamics.discount;
        let state_dist: Vec<f64> = y.iter().map(|x| (scale * x).max(0.0)).collect();
        let na = self.dynamics.n_actions;
        let mut state_action_dist = vec![0.0; self.dynamics.table_len()];
        for (s, &ds) in state_dist.iter().enumerate() {
            for (a, &p) in self.policy.row(s).iter().enumerate() {
                state_action_dist[s * na + a] = ds * p;
            }
        }
        Ok(OccupancyMeasure {
            state_dist,
            state_action_dist,
        })
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `Q(s,a) = signal(s,a) + γ Σ P(s'|s,a) V(s')` and `A = Q - V`.
pub fn action_values_from(d: &Dynamics, table: &[f64], v: &[f64]) -> ActionValues {
    let na = d.n_actions;
    let mut q = vec![0.0; d.table_len()];
    let mut advantage = vec![0.0; d.table_len()];
    for s in 0..d.n_states {
        for a in 0..na {
            let k = s * na + a;
            q[k] = table[k] + d.discount * dot(d.next_state_probs(s, a), v);
            advantage[k] = q[k] - v[s];
        }
    }
    ActionValues { q, advantage }
}

pub fn evaluate_exact(cmdp: &TabularCmdp, policy: &PolicyTable, signal: Signal) -> Result<Evaluation> {
    PolicyEvaluator::new(&cmdp.dynamics, policy)?.evaluate(cmdp.signal(signal)?)
}

pub fn q_and_advantage(cmdp: &TabularCmdp, policy: &PolicyTable, signal: Signal) -> Result<ActionValues> {
    PolicyEvaluator::new(&cmdp.dynamics, policy)?.action_values(cmdp.signal(signal)?)
}

pub fn occupancy_exact(cmdp: &TabularCmdp, policy: &PolicyTable) -> Result<OccupancyMeasure> {
    PolicyEvaluator::new(&cmdp.dynamics, policy)?.occupancy()
}

/// Exact `J_r` and every `J_{c_i}` for one policy, sharing one factorisation.
pub fn evaluate_all(cmdp: &TabularCmdp, policy: &PolicyTable) -> Result<(f64, Vec<f64>)> {
    let ev = PolicyEvaluator::new(&cmdp.dynamics, policy)?;
    let jr = ev.evaluate(&cmdp.reward)?.objective;
    let jc = cmdp
        .costs
        .iter()
        .map(|c| ev.evaluate(c).map(|e| e.objective))
        .collect::<Result<Vec<_>>>()?;
    Ok((jr, jc))
}

/// Draw an index from a probability vector.
#[inline]
pub fn sample_categorical<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    let mut last = 0;
    for (k, &p) in probs.iter().enumerate() {
        if p > 0.0 {
            acc += p;
            last = k;
            if u < acc {
                return k;
            }
        }
    }
    last
}

/// A sampled horizon `L` with `P(L = l) = (1 - γ) γ^l`, capped at
/// [`Dynamics::horizon_cap`]. The flag reports whether the cap bound.
pub fn draw_horizon<R: Rng + ?Sized>(d: &Dynamics, rng: &mut R) -> (usize, bool) {
    let geom = Geometric::new(1.0 - d.discount).expect("discount in (0,1)");
    let l = geom.sample(rng);
    let cap = d.horizon_cap();
    if l > cap as u64 {
        (cap, true)
    } else {
        (l as usize, false)
    }
}

/// Where a rollout begins.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Start {
    /// Draw `s_0 ~ ρ`.
    Initial,
    State(usize),
    /// Fixed first state and first action.
    StateAction(usize, usize),
}

/// Undiscounted signal sums over steps `0..=horizon` of one trajectory.
/// `sums[j]` accumulates `tables[j]`.
pub fn rollout_sums<R: Rng + ?Sized>(
    d: &Dynamics,
    policy: &PolicyTable,
    start: Start,
    horizon: usize,
    tables: &[&[f64]],
    sums: &mut [f64],
    rng: &mut R,
) {
    let na = d.n_actions;
    sums.iter_mut().for_each(|x| *x = 0.0);
    let (mut s, mut a) = match start {
        Start::Initial => {
            let s = sample_categorical(&d.initial_dist, rng);
            (s, sample_categorical(policy.row(s), rng))
        }
        Start::State(s) => (s, sample_categorical(policy.row(s), rng)),
        Start::StateAction(s, a) => (s, a),
    };
    for l in 0..=horizon {
        for (acc, t) in sums.iter_mut().zip(tables) {
            *acc += t[s * na + a];
        }
        if l == horizon {
            break;
        }
        s = sample_categorical(d.next_state_probs(s, a), rng);
        a = sample_categorical(policy.row(s), rng);
    }
}

/// Draw `(s, a) ~ ν` by rolling the chain for a geometric number of steps.
/// Returns the pair and whether the horizon was truncated.
pub fn sample_occupancy_pair_with<R: Rng + ?Sized>(
    d: &Dynamics,
    policy: &PolicyTable,
    rng: &mut R,
) -> ((usize, usize), bool) {
    let (h, truncated) = draw_horizon(d, rng);
    let mut s = sample_categorical(&d.initial_dist, rng);
    for _ in 0..h {
        let a = sample_categorical(policy.row(s), rng);
        s = sample_categorical(d.next_state_probs(s, a), rng);
    }
    let a = sample_categorical(policy.row(s), rng);
    ((s, a), truncated)
}

pub fn sample_occupancy_pair<R: Rng + ?Sized>(cmdp: &TabularCmdp, policy: &PolicyTable, rng: &mut R) -> (usize, usize) {
    sample_occupancy_pair_with(&cmdp.dynamics, policy, rng).0
}

/// One geometric-horizon sample of the value at `start`.
pub fn geometric_return_estimate<R: Rng + ?Sized>(
    cmdp: &TabularCmdp,
    policy: &PolicyTable,
    start: Start,
    signal: Signal,
    rng: &mut R,
) -> Result<f64> {
    let table = cmdp.signal(signal)?;
    let (h, _) = draw_horizon(&cmdp.dynamics, rng);
    let mut sum = [0.0];
    rollout_sums(&cmdp.dynamics, policy, start, h, &[table], &mut sum, rng);
    Ok(sum[0])
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn one_state(r: f64, discount: f64) -> TabularCmdp {
        TabularCmdp::new(
            Dynamics {
                n_states: 1,
                n_actions: 1,
                transition: vec![1.0],
                discount,
                initial_dist: vec![1.0],
            },
            vec![r],
            vec![vec![0.0]],
            vec![0.0],
        )
        .unwrap()
    }

    /// s0 -> s1 (absorbing), reward 1 in s1.
    fn chain(discount: f64) -> TabularCmdp {
        TabularCmdp::new(
            Dynamics {
                n_states: 2,
                n_actions: 1,
                transition: vec![0.0, 1.0, 0.0, 1.0],
                discount,
                initial_dist: vec![1.0, 0.0],
            },
            vec![0.0, 1.0],
            vec![],
            vec![],
        )
        .unwrap()
    }

    #[test]
    fn geometric_series_value() {
        let m = one_state(1.0, 0.9);
        let ev = evaluate_exact(&m, &PolicyTable::uniform(1, 1), Signal::Reward).unwrap();
        assert!((ev.values[0] - 10.0).abs() < 1e-10);
        assert!((ev.objective - 10.0).abs() < 1e-10);
    }

    #[test]
    fn zero_signal_zero_value() {
        let m = one_state(1.0, 0.9);
        let ev = evaluate_exact(&m, &PolicyTable::uniform(1, 1), Signal::Cost(0)).unwrap();
        assert_eq!(ev.values, vec![0.0]);
        assert_eq!(ev.objective, 0.0);
    }

    #[test]
    fn two_state_chain() {
        let m = chain(0.5);
        let p = PolicyTable::uniform(2, 1);
        let ev = evaluate_exact(&m, &p, Signal::Reward).unwrap();
        assert!((ev.values[0] - 1.0).abs() < 1e-12 && (ev.values[1] - 2.0).abs() < 1e-12);
        assert!((ev.objective - 1.0).abs() < 1e-12);
        let occ = occupancy_exact(&m, &p).unwrap();
        assert!((occ.state_dist[0] - 0.5).abs() < 1e-12 && (occ.state_dist[1] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn bandit_advantage() {
        let m = TabularCmdp::new(
            Dynamics {
                n_states: 1,
                n_actions: 2,
                transition: vec![1.0, 1.0],
                discount: 1e-12,
                initial_dist: vec![1.0],
            },
            vec![1.0, 0.0],
            vec![],
            vec![],
        )
        .unwrap();
        let av = q_and_advantage(&m, &PolicyTable::uniform(1, 2), Signal::Reward).unwrap();
        assert!((av.advantage[0] - 0.5).abs() < 1e-9);
        assert!((av.advantage[1] + 0.5).abs() < 1e-9);
    }

    #[test]
    fn single_state_occupancy_and_sampling() {
        let m = one_state(1.0, 0.5);
        let p = PolicyTable::uniform(1, 1);
        assert_eq!(occupancy_exact(&m, &p).unwrap().state_dist, vec![1.0]);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            assert_eq!(sample_occupancy_pair(&m, &p, &mut rng), (0, 0));
        }
    }

    #[test]
    fn near_zero_discount_samples_initial_distribution() {
        let m = TabularCmdp::new(
            Dynamics {
                n_states: 2,
                n_actions: 1,
                transition: vec![0.0, 1.0, 1.0, 0.0],
                discount: 1e-9,
                initial_dist: vec![0.25, 0.75],
            },
            vec![0.0, 0.0],
            vec![],
            vec![],
        )
        .unwrap();
        let p = PolicyTable::uniform(2, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 20_000;
        let hits = (0..n).filter(|_| sample_occupancy_pair(&m, &p, &mut rng).0 == 1).count();
        let freq = hits as f64 / n as f64;
        let se = (0.75 * 0.25 / n as f64).sqrt();
        assert!((freq - 0.75).abs() < 4.0 * se, "freq {freq}");
    }

    #[test]
    fn geometric_estimate_mean() {
        let m = one_state(1.0, 0.5);
        let p = PolicyTable::uniform(1, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 100_000;
        let xs: Vec<f64> = (0..n)
            .map(|_| geometric_return_estimate(&m, &p, Start::State(0), Signal::Reward, &mut rng).unwrap())
            .collect();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let se = (var / n as f64).sqrt();
        assert!((mean - 2.0).abs() < 3.0 * se, "mean {mean} se {se}");
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let z = geometric_return_estimate(&m, &p, Start::State(0), Signal::Cost(0), &mut rng).unwrap();
        assert_eq!(z, 0.0);
    }

    #[test]
    fn rejects_bad_rows() {
        let err = TabularCmdp::from_json_str(
            r#"{"n_states":1,"n_actions":1,"transition":[[[0.5]]],"reward":[[0.0]],"costs":[],"thresholds":[],"discount":0.9,"initial_dist":[1.0]}"#,
        )
        .unwrap_err();
        assert!(err.to_string().contains("transition[0][0]"), "{err}");
        let err = TabularCmdp::from_json_str(
            r#"{"n_states":1,"n_actions":1,"transition":[[[1.0]]],"reward":[[2.0]],"costs":[],"thresholds":[],"discount":0.9,"initial_dist":[1.0]}"#,
        )
        .unwrap_err();
        assert!(err.to_string().contains("reward[0]"), "{err}");
        let err = TabularCmdp::from_json_str(r#"{"n_states":"x"}"#).unwrap_err();
        assert!(err.to_string().contains("n_states"), "{err}");
    }

    #[test]
    fn json_round_trip() {
        let m = chain(0.7);
        let back = TabularCmdp::from_json_str(&m.to_json_string()).unwrap();
        assert_eq!(m, back);
    }
}
