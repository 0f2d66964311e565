//! End-to-end runs: build the environment, execute the configured mode,
//! and write the output directory.
//!
//! ```text
//! <out>/run.json          effective config (reloadable)
//! <out>/metrics.csv       per-iteration log
//! <out>/summary.json      final values and metrics
//! <out>/checkpoints/      final parameters
//! ```

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;

use crate::cmdp::{evaluate_all, TabularCmdp};
use crate::envs::{cartpole_constrained, random_mdp_with, windycliff_with, EpisodicEnv, WindyCliff};
use crate::error::{Error, Result};
use crate::fed::{run_baseline_local, run_baseline_omniscient, run_fednpg, RoundLog};
use crate::io::{write_csv, EnvConfig, Mode, RunConfig};
use crate::metrics::{compute_metrics, mean_and_se, MetricsReport};
use crate::ppo::{run_fedppo, run_ppo_local, run_ppo_omniscient, PpoRunOutput};

/// Tabular instance plus, for the windy cliff, the raw-scale signals.
pub struct TabularInstance {
    pub cmdp: TabularCmdp,
    pub windy: Option<WindyCliff>,
}

pub fn build_tabular(env: &EnvConfig, run_seed: u64) -> Result<TabularInstance> {
    match env {
        EnvConfig::RandomMdp(r) => Ok(TabularInstance {
            cmdp: random_mdp_with(r.instance_seed.unwrap_or(run_seed), &r.params())?,
            windy: None,
        }),
        EnvConfig::WindyCliff(p) => {
            let w = windycliff_with(p)?;
            Ok(TabularInstance {
                cmdp: w.cmdp.clone(),
                windy: Some(w),
            })
        }
        EnvConfig::CmdpFile(f) => Ok(TabularInstance {
            cmdp: TabularCmdp::load(&f.path)?,
            windy: None,
        }),
        EnvConfig::CartPole(_) => Err(Error::invalid("env.name", "cartpole-c is not tabular")),
    }
}

/// Final values on the original reward and cost scale (windy cliff only).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RawScale {
    pub j_r: f64,
    pub j_c: Vec<f64>,
    pub thresholds: Vec<f64>,
}

pub enum Checkpoint {
    Tabular {
        params: crate::policy::SoftmaxParams,
        uniform_iterate: Option<crate::policy::SoftmaxParams>,
    },
    Networks(Box<PpoRunOutput>),
}

pub struct RunResult {
    pub logs: Vec<RoundLog>,
    pub n_constraints: usize,
    pub thresholds: Vec<f64>,
    /// Exact values of the final policy (tabular) or mean last-window
    /// episode returns across agents (episodic).
    pub final_j_r: f64,
    pub final_j_c: Vec<f64>,
    pub lambdas: Vec<f64>,
    pub truncations: u64,
    pub raw: Option<RawScale>,
    pub checkpoint: Checkpoint,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSummary {
    pub mode: String,
    pub seed: u64,
    pub j_r: f64,
    pub j_c: Vec<f64>,
    pub thresholds: Vec<f64>,
    pub mvr: f64,
    pub lambdas: Vec<f64>,
    pub truncations: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub raw: Option<RawScale>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub optimizer: Option<String>,
}

fn execute_tabular(cfg: &RunConfig) -> Result<RunResult> {
    let inst = build_tabular(&cfg.env, cfg.federation.seed)?;
    let m = &inst.cmdp;
    let out = match cfg.mode {
        Mode::FedNpg => run_fednpg(m, &cfg.federation)?,
        Mode::Local(k) => run_baseline_local(m, k, &cfg.federation)?,
        Mode::Omniscient => run_baseline_omniscient(m, &cfg.federation)?,
        Mode::FedPpo => return Err(Error::invalid("mode", "fedppo needs an episodic environment")),
    };
    let (j_r, j_c) = evaluate_all(m, &out.params.policy())?;
    let raw = inst.windy.as_ref().map(|_| RawScale {
        j_r: raw_return(j_r, m.discount(), WindyCliff::reward_to_raw),
        j_c: j_c.iter().map(|&c| WindyCliff::cost_to_raw(c)).collect(),
        thresholds: inst.windy.as_ref().unwrap().raw_thresholds.clone(),
    });
    Ok(RunResult {
        logs: out.logs,
        n_constraints: m.n_constraints(),
        thresholds: m.thresholds.clone(),
        final_j_r: j_r,
        final_j_c: j_c,
        lambdas: out.lambdas,
        truncations: out.truncations,
        raw,
        checkpoint: Checkpoint::Tabular {
            params: out.params,
            uniform_iterate: out.uniform_iterate,
        },
    })
}

/// The affine per-step map `x ↦ a x + b` lifts to discounted returns as
/// `J ↦ a J + b / (1 - γ)`.
fn raw_return(j: f64, discount: f64, per_step: fn(f64) -> f64) -> f64 {
    let b = per_step(0.0);
    let a = per_step(1.0) - b;
    a * j + b / (1.0 - discount)
}

fn execute_episodic(cfg: &RunConfig) -> Result<RunResult> {
    let EnvConfig::CartPole(env) = &cfg.env else {
        return Err(Error::invalid("env.name", "not episodic"));
    };
    let ppo = cfg.ppo.clone().ok_or_else(|| Error::invalid("ppo", "missing"))?;
    let factory = |_: usize| -> Box<dyn EpisodicEnv + Send> { Box::new(cartpole_constrained()) };
    let fed = &cfg.federation;
    let out = match cfg.mode {
        Mode::FedPpo => run_fedppo(&factory, &env.budgets, fed, &ppo)?,
        Mode::Local(k) => run_ppo_local(&factory, &env.budgets, k, fed, &ppo)?,
        Mode::Omniscient => run_ppo_omniscient(&factory, &env.budgets, fed, &ppo)?,
        Mode::FedNpg => return Err(Error::invalid("mode", "fednpg needs a tabular environment")),
    };
    let nc = env.budgets.len();
    let means: Vec<(f64, Vec<f64>)> = out.windows.iter().map(|w| w.means(nc)).collect();
    let n = means.len() as f64;
    let final_j_r = means.iter().map(|m| m.0).sum::<f64>() / n;
    let final_j_c = (0..nc).map(|j| means.iter().map(|m| m.1[j]).sum::<f64>() / n).collect();
    Ok(RunResult {
        logs: out.logs.clone(),
        n_constraints: nc,
        thresholds: env.budgets.clone(),
        final_j_r,
        final_j_c,
        lambdas: out.lambdas.clone(),
        truncations: 0,
        raw: None,
        checkpoint: Checkpoint::Networks(Box::new(out)),
    })
}

/// Run the configured mode without touching the filesystem.
pub fn execute(cfg: &RunConfig) -> Result<RunResult> {
    cfg.validate()?;
    if cfg.env.is_episodic() {
        execute_episodic(cfg)
    } else {
        execute_tabular(cfg)
    }
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn summarize(cfg: &RunConfig, r: &RunResult) -> RunSummary {
    let mvr = r
        .final_j_c
        .iter()
        .zip(&r.thresholds)
        .map(|(j, d)| j / d)
        .fold(0.0, f64::max);
    RunSummary {
        mode: cfg.mode.to_string(),
        seed: cfg.federation.seed,
        j_r: r.final_j_r,
        j_c: r.final_j_c.clone(),
        thresholds: r.thresholds.clone(),
        mvr,
        lambdas: r.lambdas.clone(),
        truncations: r.truncations,
        raw: r.raw.clone(),
        optimizer: cfg.ppo.as_ref().map(|p| format!("{:?}", p.optimizer).to_lowercase()),
    }
}

/// Execute and write the output directory. Returns the run result.
pub fn cmd_run(cfg: &RunConfig, outdir: impl AsRef<Path>) -> Result<RunResult> {
    let out = outdir.as_ref();
    cfg.validate()?;
    let ck = out.join("checkpoints");
    std::fs::create_dir_all(&ck).map_err(|e| Error::io(&ck, e))?;
    write_file(&out.join("run.json"), &cfg.to_json_string())?;
    let result = execute(cfg)?;
    write_csv(&result.logs, result.n_constraints, out.join("metrics.csv"))?;
    let summary = summarize(cfg, &result);
    write_file(
        &out.join("summary.json"),
        &serde_json::to_string_pretty(&summary).expect("summary serialises"),
    )?;
    match &result.checkpoint {
        Checkpoint::Tabular { params, uniform_iterate } => {
            params.save(ck.join("policy.json"))?;
            if let Some(u) = uniform_iterate {
                u.save(ck.join("uniform_iterate.json"))?;
            }
        }
        Checkpoint::Networks(o) => {
            write_file(&ck.join("policy.json"), &o.policy.to_json_string())?;
            write_file(&ck.join("reward_critic.json"), &o.reward_critic.to_json_string())?;
        }
    }
    Ok(result)
}

/// Per-seed row of a sweep summary.
#[derive(Debug)]
pub struct SweepEntry {
    pub seed: u64,
    pub report: Result<MetricsReport>,
}

/// Worker slots: `FEDCRL_THREADS` if set, otherwise rayon's default.
pub fn thread_pool() -> Result<rayon::ThreadPool> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Ok(v) = std::env::var("FEDCRL_THREADS") {
        let n: usize = v
            .parse()
            .map_err(|_| Error::invalid("FEDCRL_THREADS", format!("{v:?} is not a positive integer")))?;
        b = b.num_threads(n.max(1));
    }
    b.build().map_err(|e| Error::invalid("FEDCRL_THREADS", e.to_string()))
}

fn run_one_seed(cfg: &RunConfig, seed: u64, dir: &Path) -> Result<MetricsReport> {
    let mut cfg = cfg.clone();
    cfg.federation.seed = seed;
    let result = cmd_run(&cfg, dir)?;
    let reference = if cfg.mode == Mode::Omniscient {
        (result.final_j_r, result.final_j_c.clone())
    } else {
        let mut r = cfg.clone();
        r.mode = Mode::Omniscient;
        let res = execute(&r)?;
        (res.final_j_r, res.final_j_c)
    };
    compute_metrics(result.final_j_r, &result.final_j_c, reference.0, &reference.1, &result.thresholds)
}

fn cell(x: Option<f64>) -> String {
    x.map_or_else(|| "undefined".to_string(), crate::io::fmt_float)
}

/// One run per seed under `<out>/seed_<s>/`, an omniscient reference per
/// seed, and `<out>/summary.csv` with per-seed metrics plus mean and
/// standard-error rows.
pub fn cmd_sweep(cfg: &RunConfig, seeds: &[u64], outdir: impl AsRef<Path>) -> Result<Vec<SweepEntry>> {
    let out = outdir.as_ref();
    if seeds.is_empty() {
        return Err(Error::invalid("--seeds", "need at least one seed"));
    }
    cfg.validate()?;
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let pool = thread_pool()?;
    let entries: Vec<SweepEntry> = pool.install(|| {
        seeds
            .par_iter()
            .map(|&seed| SweepEntry {
                seed,
                report: run_one_seed(cfg, seed, &out.join(format!("seed_{seed}"))),
            })
            .collect()
    });
    write_sweep_summary(&entries, &out.join("summary.csv"))?;
    Ok(entries)
}

fn write_sweep_summary(entries: &[SweepEntry], path: &PathBuf) -> Result<()> {
    let mut text = String::from("seed,j_r,rr,mvr,mrvr,status\n");
    for e in entries {
        match &e.report {
            Ok(m) => text.push_str(&format!(
                "{},{},{},{},{},ok\n",
                e.seed,
                crate::io::fmt_float(m.j_r),
                cell(m.rr),
                crate::io::fmt_float(m.mvr),
                cell(m.mrvr)
            )),
            Err(err) => text.push_str(&format!(
                "{},,,,,\"failed: {}\"\n",
                e.seed,
                err.to_string().replace('"', "'")
            )),
        }
    }
    let ok: Vec<&MetricsReport> = entries.iter().filter_map(|e| e.report.as_ref().ok()).collect();
    if !ok.is_empty() {
        let stat = |f: &dyn Fn(&MetricsReport) -> Option<f64>| -> (Option<f64>, Option<f64>) {
            let xs: Option<Vec<f64>> = ok.iter().map(|m| f(m)).collect();
            match xs {
                Some(xs) => {
                    let (m, se) = mean_and_se(&xs);
                    (Some(m), se)
                }
                None => (None, None),
            }
        };
        let cols = [
            stat(&|m| Some(m.j_r)),
            stat(&|m| m.rr),
            stat(&|m| Some(m.mvr)),
            stat(&|m| m.mrvr),
        ];
        let mean: Vec<String> = cols.iter().map(|c| cell(c.0)).collect();
        let se: Vec<String> = cols
            .iter()
            .map(|c| match (c.0, c.1) {
                (Some(_), Some(se)) => crate::io::fmt_float(se),
                (Some(_), None) => String::new(),
                _ => "undefined".into(),
            })
            .collect();
        text.push_str(&format!("mean,{},ok\n", mean.join(",")));
        text.push_str(&format!("se,{},ok\n", se.join(",")));
    }
    write_file(path, &text)
}

/// Write the tabular CMDP described by `env` as JSON.
pub fn cmd_gen_env(env: &EnvConfig, seed: u64, path: impl AsRef<Path>) -> Result<TabularCmdp> {
    let inst = build_tabular(env, seed)?;
    inst.cmdp.save(path)?;
    Ok(inst.cmdp)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn raw_return_of_constant_signals() {
        // r' = 0 everywhere means raw -1 every step
        let j = raw_return(0.0, 0.9, WindyCliff::reward_to_raw);
        assert!((j + 10.0).abs() < 1e-12);
        let j = raw_return(0.15, 0.9, WindyCliff::cost_to_raw);
        assert!((j - 1.5).abs() < 1e-12);
    }
}
