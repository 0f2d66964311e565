//! End-to-end acceptance suite. Prints one PASS/FAIL line per criterion and
//! fails if any criterion fails.
//!
//! The cart-pole criterion reads finished runs from `results/cartpole-c`
//! (override with `FEDCRL_CARTPOLE_RESULTS`); produce them with
//! `fedcrl run --config configs/cartpole-c.json --seed S --out results/cartpole-c/seed_S`
//! for S in 0, 1, 2.

use std::path::PathBuf;
use std::time::Instant;

use fedcrl::envs::{cartpole_constrained, random_mdp, EpisodicEnv};
use fedcrl::fed::{run_fednpg, Estimator, FederationConfig};
use fedcrl::io::{defaults_for, resolve_config, write_csv, RunConfig};
use fedcrl::metrics::{compute_metrics, max_violation};
use fedcrl::oracle;
use fedcrl::ppo::{run_fedppo_inspect, PpoConfig};
use fedcrl::runner::{execute, RunResult};
use fedcrl::selfcheck::{
    clip_equivalence_gap, clip_gradient_error, critic_gradient_error, decomposition_gap, log_prob_gradient_error,
    npg_oracle_error, sampled_npg_cosine, GRADIENT_TOL,
};
use fedcrl::{Error, Result};
use serde_json::Value;

struct Outcome {
    name: &'static str,
    passed: bool,
    detail: String,
}

fn report(out: &mut Vec<Outcome>, name: &'static str, started: Instant, r: Result<(bool, String)>) {
    let (passed, detail) = r.unwrap_or_else(|e| (false, format!("error: {e}")));
    let line = format!(
        "{} {name}: {detail} [{:.1}s]",
        if passed { "PASS" } else { "FAIL" },
        started.elapsed().as_secs_f64()
    );
    println!("{line}");
    out.push(Outcome { name, passed, detail });
}

fn config(env: &str, overrides: &[&str]) -> Result<RunConfig> {
    let o: Vec<String> = overrides.iter().map(|s| s.to_string()).collect();
    resolve_config(defaults_for(env)?, &o)
}

fn with_seed(cfg: &RunConfig, seed: u64, mode: &str) -> Result<RunConfig> {
    let mut c = cfg.clone();
    c.federation.seed = seed;
    c.mode = mode.parse()?;
    Ok(c)
}

fn npg_oracle() -> Result<(bool, String)> {
    let err = npg_oracle_error(&(0..10).collect::<Vec<_>>())?;
    Ok((err <= 1e-6, format!("max relative error {err:.2e} over 10 instances (tol 1e-6)")))
}

fn npg_fidelity() -> Result<(bool, String)> {
    let c = sampled_npg_cosine(11, 10_000, &[0, 1, 2, 3, 4])?;
    Ok((c >= 0.9, format!("mean cosine {c:.4} at K=10000 over 5 seeds (need >= 0.9)")))
}

fn decomposition() -> Result<(bool, String)> {
    let m = random_mdp(2, 3, 5, 4, 0.7)?;
    let gap = decomposition_gap(&m, 100, 2)?;
    Ok((gap <= 1e-10, format!("max |L0 - sum L_i| {gap:.2e} over 100 draws (tol 1e-10)")))
}

fn unconstrained() -> Result<(bool, String)> {
    let mut worst = f64::INFINITY;
    for seed in 0..3 {
        let m = random_mdp(seed, 3, 5, 1, 0.7)?;
        let cfg = FederationConfig {
            n_agents: 1,
            local_steps: 1,
            total_steps: 5000,
            estimator: Estimator::Exact,
            freeze_lambda: true,
            seed,
            ..FederationConfig::default()
        };
        let out = run_fednpg(&m, &cfg)?;
        let j = fedcrl::cmdp::evaluate_exact(&m, &out.params.policy(), fedcrl::cmdp::Signal::Reward)?.objective;
        let opt = oracle::optimal_value(&m.dynamics, &m.reward, 1e-12);
        worst = worst.min(j / opt);
    }
    Ok((worst >= 0.95, format!("worst J_r / J_r* {worst:.4} over 3 instances at T=5000 (need >= 0.95)")))
}

struct RandomMdpRuns {
    fed: Vec<RunResult>,
    omni: Vec<RunResult>,
}

fn random_mdp_runs() -> Result<RandomMdpRuns> {
    let cfg = config("random-mdp", &["mode=fednpg"])?;
    let mut runs = RandomMdpRuns { fed: Vec::new(), omni: Vec::new() };
    for seed in 0..5 {
        runs.fed.push(execute(&with_seed(&cfg, seed, "fednpg")?)?);
        runs.omni.push(execute(&with_seed(&cfg, seed, "omniscient")?)?);
    }
    Ok(runs)
}

fn random_mdp_reproduction(runs: &RandomMdpRuns) -> Result<(bool, String)> {
    let mut mvr_ok = 0;
    let mut rr_ok = 0;
    let mut rows = Vec::new();
    for (f, o) in runs.fed.iter().zip(&runs.omni) {
        let m = compute_metrics(f.final_j_r, &f.final_j_c, o.final_j_r, &o.final_j_c, &f.thresholds)?;
        let rr = m.rr()?;
        mvr_ok += usize::from(m.mvr <= 1.05);
        rr_ok += usize::from(rr >= 0.85);
        rows.push(format!("{:.3}/{:.3}", m.mvr, rr));
    }
    Ok((
        mvr_ok >= 4 && rr_ok >= 4,
        format!(
            "mVR <= 1.05 on {mvr_ok}/5, RR >= 0.85 on {rr_ok}/5 (need 4 each); mVR/RR per seed {}",
            rows.join(" ")
        ),
    ))
}

fn violation_trend(runs: &RandomMdpRuns) -> Result<(bool, String)> {
    let mut ok = 0;
    let mut rows = Vec::new();
    for r in &runs.fed {
        let series: Vec<f64> = r
            .logs
            .iter()
            .filter_map(|l| l.global.as_ref())
            .map(|g| max_violation(&g.j_c, &r.thresholds))
            .collect();
        let third = series.len() / 3;
        if third == 0 {
            return Err(Error::invalid("logs", "too few aggregated records"));
        }
        let mean = |xs: &[f64]| xs.iter().sum::<f64>() / xs.len() as f64;
        let first = mean(&series[..third]);
        let last = mean(&series[series.len() - third..]);
        ok += usize::from(last <= first);
        rows.push(format!("{first:.4}->{last:.4}"));
    }
    Ok((ok >= 4, format!("last third <= first third on {ok}/5 (need 4); {}", rows.join(" "))))
}

fn windy_cliff() -> Result<(bool, String)> {
    let cfg = config("windy-cliff", &["mode=fednpg"])?;
    let mut ok = 0;
    let mut rows = Vec::new();
    for seed in 0..5 {
        let r = execute(&with_seed(&cfg, seed, "fednpg")?)?;
        let raw = r.raw.ok_or_else(|| Error::invalid("raw", "windy cliff reports raw values"))?;
        let worst = raw.j_c.iter().zip(&raw.thresholds).map(|(j, d)| j / d).fold(0.0, f64::max);
        ok += usize::from(worst <= 1.05);
        rows.push(format!("{worst:.3}"));
        if seed == 0 {
            for k in 0..3 {
                let local = execute(&with_seed(&cfg, seed, &format!("local:{k}"))?)?;
                let lr = local.raw.expect("windy cliff");
                let others: Vec<String> = (0..3)
                    .filter(|&j| j != k)
                    .map(|j| format!("c{j} {:.3} (d {:.2})", lr.j_c[j], lr.thresholds[j]))
                    .collect();
                println!("  info: local baseline {k} unassigned costs: {}", others.join(", "));
            }
        }
    }
    Ok((ok >= 4, format!("max J_c/d <= 1.05 on {ok}/5 (need 4); per seed {}", rows.join(" "))))
}

fn ppo_privacy() -> Result<(bool, String)> {
    let factory = |_: usize| -> Box<dyn EpisodicEnv + Send> { Box::new(cartpole_constrained()) };
    let fed = FederationConfig {
        n_agents: 2,
        local_steps: 2,
        total_steps: 4,
        lambda_max: 1.0,
        ..FederationConfig::default()
    };
    let ppo = PpoConfig {
        horizon: 128,
        hidden: vec![8],
        inner_steps: 2,
        ..PpoConfig::default()
    };
    let mut bad_keys = 0;
    let mut payloads = 0;
    run_fedppo_inspect(&factory, &[20.0, 20.0], &fed, &ppo, &mut |_, p| {
        payloads += 1;
        let v = serde_json::to_value(p).expect("payload serialises");
        let keys: Vec<&str> = v.as_object().map(|o| o.keys().map(String::as_str).collect()).unwrap_or_default();
        if keys != ["policy", "reward_critic"] {
            bad_keys += 1;
        }
    })?;
    let grads = [
        log_prob_gradient_error(3, false)?,
        critic_gradient_error(3, false)?,
        clip_gradient_error(3, false)?,
    ];
    let worst = grads.iter().cloned().fold(0.0, f64::max);
    let gap = clip_equivalence_gap(4, 10_000);
    Ok((
        payloads > 0 && bad_keys == 0 && worst <= GRADIENT_TOL && gap <= 1e-12,
        format!(
            "{payloads} payloads, {bad_keys} with extra keys; worst gradient error {worst:.2e} (tol {GRADIENT_TOL:.0e}); clip gap {gap:.2e}"
        ),
    ))
}

fn cartpole() -> Result<(bool, String)> {
    let dir = std::env::var_os("FEDCRL_CARTPOLE_RESULTS")
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../results/cartpole-c"));
    let mut ok = 0;
    let mut rows = Vec::new();
    for seed in 0..3 {
        let seed_dir = dir.join(format!("seed_{seed}"));
        let read = |name: &str| -> Result<Value> {
            let p = seed_dir.join(name);
            let text = std::fs::read_to_string(&p).map_err(|e| Error::io(&p, e))?;
            serde_json::from_str(&text).map_err(|e| Error::Parse {
                path: p.display().to_string(),
                message: e.to_string(),
            })
        };
        let run = read("run.json")?;
        if run["mode"] != "fedppo" || run["federation"]["n_agents"] != 2 || run["federation"]["seed"] != seed {
            return Err(Error::invalid("run.json", format!("{} is not a 2-agent fedppo run", seed_dir.display())));
        }
        let s = read("summary.json")?;
        let j_r = s["j_r"].as_f64().unwrap_or(f64::NAN);
        let j_c: Vec<f64> = s["j_c"].as_array().map(|a| a.iter().filter_map(Value::as_f64).collect()).unwrap_or_default();
        let pass = j_r >= 150.0 && j_c.len() == 2 && j_c.iter().all(|&c| c <= 25.0);
        ok += usize::from(pass);
        rows.push(format!("r {j_r:.1} c {:.1}/{:.1}", j_c.first().unwrap_or(&f64::NAN), j_c.get(1).unwrap_or(&f64::NAN)));
    }
    Ok((
        ok >= 2,
        format!("reward >= 150 and costs <= 25 on {ok}/3 (need 2); {}", rows.join("; ")),
    ))
}

fn determinism() -> Result<(bool, String)> {
    let dir = tempfile::tempdir().map_err(|e| Error::io("tempdir", e))?;
    let cases = [
        config("random-mdp", &["mode=fednpg", "federation.total_steps=500", "federation.seed=7"])?,
        config("windy-cliff", &["mode=local:1", "federation.total_steps=200", "federation.seed=3"])?,
        config(
            "cartpole-c",
            &["mode=fedppo", "federation.total_steps=3", "ppo.horizon=256", "federation.seed=5"],
        )?,
    ];
    let mut same = 0;
    for (i, cfg) in cases.iter().enumerate() {
        let mut bytes = Vec::new();
        for rep in 0..2 {
            let r = execute(cfg)?;
            let p = dir.path().join(format!("{i}_{rep}.csv"));
            write_csv(&r.logs, r.n_constraints, &p)?;
            bytes.push(std::fs::read(&p).map_err(|e| Error::io(&p, e))?);
        }
        same += usize::from(bytes[0] == bytes[1] && !bytes[0].is_empty());
    }
    Ok((same == cases.len(), format!("{same}/{} configurations byte-identical", cases.len())))
}

#[test]
fn acceptance() {
    let mut out = Vec::new();
    let t = Instant::now();
    report(&mut out, "npg oracle equivalence", t, npg_oracle());
    let t = Instant::now();
    report(&mut out, "sampled npg fidelity", t, npg_fidelity());
    let t = Instant::now();
    report(&mut out, "decomposition identity", t, decomposition());
    let t = Instant::now();
    report(&mut out, "unconstrained reduction", t, unconstrained());
    let t = Instant::now();
    match random_mdp_runs() {
        Ok(runs) => {
            report(&mut out, "random mdp reproduction", t, random_mdp_reproduction(&runs));
            let t = Instant::now();
            report(&mut out, "constraint violation trend", t, violation_trend(&runs));
        }
        Err(e) => {
            let msg = e.to_string();
            report(&mut out, "random mdp reproduction", t, Err(e));
            report(&mut out, "constraint violation trend", t, Err(Error::invalid("runs", msg)));
        }
    }
    let t = Instant::now();
    report(&mut out, "windy cliff", t, windy_cliff());
    let t = Instant::now();
    report(&mut out, "fedppo privacy and mechanics", t, ppo_privacy());
    let t = Instant::now();
    report(&mut out, "fedppo constrained cart-pole", t, cartpole());
    let t = Instant::now();
    report(&mut out, "determinism", t, determinism());

    let failed: Vec<String> = out
        .iter()
        .filter(|o| !o.passed)
        .map(|o| format!("{}: {}", o.name, o.detail))
        .collect();
    println!("{}/{} criteria passed", out.len() - failed.len(), out.len());
    assert!(failed.is_empty(), "failed criteria:\n{}", failed.join("\n"));
}
