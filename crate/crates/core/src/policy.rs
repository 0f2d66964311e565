//! Softmax tabular policies and the two aggregation rules used at
//! communication rounds.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::cmdp::PolicyTable;
use crate::error::{Error, Result};

/// Floor applied to averaged probabilities before taking logs.
pub const PROB_FLOOR: f64 = 1e-12;

/// Logits `θ(s, a)`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftmaxParams {
    pub n_states: usize,
    pub n_actions: usize,
    pub theta: Vec<f64>,
}

impl SoftmaxParams {
    /// All-zero logits, i.e. the uniform policy.
    pub fn zeros(n_states: usize, n_actions: usize) -> Self {
        SoftmaxParams {
            n_states,
            n_actions,
            theta: vec![0.0; n_states * n_actions],
        }
    }

    pub fn from_vec(n_states: usize, n_actions: usize, theta: Vec<f64>) -> Result<Self> {
        if theta.len() != n_states * n_actions {
            return Err(Error::ShapeMismatch {
                expected: format!("{}", n_states * n_actions),
                got: format!("{}", theta.len()),
            });
        }
        if let Some(k) = theta.iter().position(|x| !x.is_finite()) {
            return Err(Error::invalid(format!("theta[{k}]"), "not finite"));
        }
        Ok(SoftmaxParams {
            n_states,
            n_actions,
            theta,
        })
    }

    pub fn row(&self, s: usize) -> &[f64] {
        &self.theta[s * self.n_actions..(s + 1) * self.n_actions]
    }

    pub fn policy(&self) -> PolicyTable {
        let mut probs = vec![0.0; self.theta.len()];
        for s in 0..self.n_states {
            softmax_into(self.row(s), &mut probs[s * self.n_actions..(s + 1) * self.n_actions]);
        }
        PolicyTable {
            n_states: self.n_states,
            n_actions: self.n_actions,
            probs,
        }
    }

    /// Checkpoint layout: `{"n_states":…, "n_actions":…, "theta": {"0": [...], ...}}`.
    pub fn to_json_string(&self) -> String {
        let rows: BTreeMap<String, Vec<f64>> =
            (0..self.n_states).map(|s| (s.to_string(), self.row(s).to_vec())).collect();
        serde_json::to_string_pretty(&Checkpoint {
            n_states: self.n_states,
            n_actions: self.n_actions,
            theta: rows,
        })
        .expect("params serialise")
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let ck: Checkpoint = serde_json::from_str(text).map_err(|e| Error::Parse {
            path: "checkpoint".into(),
            message: e.to_string(),
        })?;
        let mut theta = Vec::with_capacity(ck.n_states * ck.n_actions);
        for s in 0..ck.n_states {
            let row = ck
                .theta
                .get(&s.to_string())
                .ok_or_else(|| Error::invalid(format!("theta.{s}"), "missing state row"))?;
            if row.len() != ck.n_actions {
                return Err(Error::invalid(format!("theta.{s}"), format!("expected {} entries", ck.n_actions)));
            }
            theta.extend_from_slice(row);
        }
        Self::from_vec(ck.n_states, ck.n_actions, theta)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json_string()).map_err(|e| Error::io(path, e))
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Checkpoint {
    n_states: usize,
    n_actions: usize,
    theta: BTreeMap<String, Vec<f64>>,
}

/// Max-shifted softmax of `logits` written into `out`.
pub fn softmax_into(logits: &[f64], out: &mut [f64]) {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut z = 0.0;
    for (o, &l) in out.iter_mut().zip(logits) {
        *o = (l - m).exp();
        z += *o;
    }
    out.iter_mut().for_each(|o| *o /= z);
}

pub fn action_probs(params: &SoftmaxParams, s: usize) -> Vec<f64> {
    let mut out = vec![0.0; params.n_actions];
    softmax_into(params.row(s), &mut out);
    out
}

/// `∇_θ log π(a|s)`: zero outside row `s`, `1{a'=a} - π(a'|s)` inside.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreRow {
    pub state: usize,
    pub row: Vec<f64>,
}

impl ScoreRow {
    pub fn to_dense(&self, n_states: usize) -> Vec<f64> {
        let na = self.row.len();
        let mut g = vec![0.0; n_states * na];
        g[self.state * na..(self.state + 1) * na].copy_from_slice(&self.row);
        g
    }

    /// `wᵀ g` for a dense parameter vector `w`.
    pub fn dot(&self, w: &[f64]) -> f64 {
        let na = self.row.len();
        self.row
            .iter()
            .zip(&w[self.state * na..(self.state + 1) * na])
            .map(|(g, x)| g * x)
            .sum()
    }
}

pub fn log_prob_grad(params: &SoftmaxParams, s: usize, a: usize) -> ScoreRow {
    score_from_probs(&action_probs(params, s), s, a)
}

pub(crate) fn score_from_probs(probs: &[f64], s: usize, a: usize) -> ScoreRow {
    let row = probs
        .iter()
        .enumerate()
        .map(|(k, &p)| if k == a { 1.0 - p } else { -p })
        .collect();
    ScoreRow { state: s, row }
}

fn check_same_shape(list: &[SoftmaxParams]) -> Result<()> {
    let first = list.first().ok_or_else(|| Error::invalid("params_list", "empty"))?;
    for p in &list[1..] {
        if p.n_states != first.n_states || p.n_actions != first.n_actions {
            return Err(Error::ShapeMismatch {
                expected: format!("{}x{}", first.n_states, first.n_actions),
                got: format!("{}x{}", p.n_states, p.n_actions),
            });
        }
    }
    Ok(())
}

/// Policy-level averaging: `π̄ = mean_i π_i`, then `θ(s,a) = log π̄(a|s) + C_s`
/// with `C_s = Σ_a log π̄(a|s)`.
pub fn aggregate_softmax(params_list: &[SoftmaxParams]) -> Result<SoftmaxParams> {
    check_same_shape(params_list)?;
    let (ns, na) = (params_list[0].n_states, params_list[0].n_actions);
    let n = params_list.len() as f64;
    let mut mean = vec![0.0; ns * na];
    let mut row = vec![0.0; na];
    for p in params_list {
        for s in 0..ns {
            softmax_into(p.row(s), &mut row);
            for (m, x) in mean[s * na..(s + 1) * na].iter_mut().zip(&row) {
                *m += x / n;
            }
        }
    }
    let mut theta = vec![0.0; ns * na];
    for s in 0..ns {
        let logs: Vec<f64> = mean[s * na..(s + 1) * na].iter().map(|p| p.max(PROB_FLOOR).ln()).collect();
        let c_s: f64 = logs.iter().sum();
        for (t, l) in theta[s * na..(s + 1) * na].iter_mut().zip(&logs) {
            *t = l + c_s;
        }
    }
    Ok(SoftmaxParams {
        n_states: ns,
        n_actions: na,
        theta,
    })
}

/// Elementwise mean of equally-shaped parameter vectors.
pub fn aggregate_params_mean(params_list: &[&[f64]]) -> Result<Vec<f64>> {
    let first = params_list.first().ok_or_else(|| Error::invalid("params_list", "empty"))?;
    let mut out = vec![0.0; first.len()];
    for p in params_list {
        if p.len() != out.len() {
            return Err(Error::ShapeMismatch {
                expected: format!("{}", out.len()),
                got: format!("{}", p.len()),
            });
        }
        for (o, x) in out.iter_mut().zip(p.iter()) {
            *o += x;
        }
    }
    let n = params_list.len() as f64;
    out.iter_mut().for_each(|o| *o /= n);
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "mode", rename_all = "lowercase", deny_unknown_fields)]
pub enum ThetaProjection {
    #[default]
    Identity,
    Box { box_halfwidth: f64 },
}

impl ThetaProjection {
    pub fn validate(&self) -> Result<()> {
        match *self {
            ThetaProjection::Box { box_halfwidth } if !(box_halfwidth > 0.0) => Err(Error::invalid(
                "theta_projection.box_halfwidth",
                "must be positive",
            )),
            _ => Ok(()),
        }
    }

    pub fn apply_in_place(&self, theta: &mut [f64]) {
        if let ThetaProjection::Box { box_halfwidth: h } = *self {
            theta.iter_mut().for_each(|x| *x = x.clamp(-h, h));
        }
    }
}

pub fn project_theta(params: &SoftmaxParams, proj: ThetaProjection) -> SoftmaxParams {
    let mut out = params.clone();
    proj.apply_in_place(&mut out.theta);
    out
}
