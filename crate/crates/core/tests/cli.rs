use std::path::Path;
use std::process::{Command, Output};

use fedcrl::cmdp::TabularCmdp;
use fedcrl::envs::random_mdp;
use fedcrl::fed::{run_fednpg, FederationConfig};
use fedcrl::io::{fmt_float, read_csv, rows_from_logs, write_csv};

fn fedcrl(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fedcrl"))
        .args(args)
        .env("FEDCRL_THREADS", "1")
        .output()
        .expect("binary runs")
}

fn write(path: &Path, text: &str) {
    std::fs::write(path, text).unwrap();
}

const SMALL: &str = r#"{
  "env": {"name": "random-mdp"},
  "mode": "fednpg",
  "federation": {"total_steps": 40, "seed": 3}
}"#;

#[test]
fn csv_round_trip() {
    let m = random_mdp(1, 3, 5, 4, 0.7).unwrap();
    let cfg = FederationConfig {
        total_steps: 12,
        ..FederationConfig::default()
    };
    let out = run_fednpg(&m, &cfg).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("m.csv");
    write_csv(&out.logs, 4, &p).unwrap();
    let back = read_csv(&p).unwrap();
    let rows = rows_from_logs(&out.logs);
    assert_eq!(back.len(), rows.len());
    let digits = |xs: &[f64]| xs.iter().map(|&x| fmt_float(x)).collect::<Vec<_>>();
    for (a, b) in back.iter().zip(&rows) {
        assert_eq!((a.iteration, a.agent, a.aggregated), (b.iteration, b.agent, b.aggregated));
        assert_eq!(fmt_float(a.j_r), fmt_float(b.j_r));
        assert_eq!(digits(&a.j_c), digits(&b.j_c));
        assert_eq!(digits(&a.lambdas), digits(&b.lambdas));
    }
}

#[test]
fn zero_iterations_write_only_the_header() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("m.csv");
    write_csv(&[], 2, &p).unwrap();
    let text = std::fs::read_to_string(&p).unwrap();
    assert_eq!(text.lines().count(), 1);
    assert!(text.starts_with("iteration,"));
    assert!(read_csv(&p).unwrap().is_empty());
}

#[test]
fn run_writes_the_output_directory() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.json");
    write(&cfg, SMALL);
    let out = dir.path().join("run");
    let o = fedcrl(&["run", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["run.json", "metrics.csv", "summary.json", "checkpoints/policy.json"] {
        assert!(out.join(f).exists(), "{f}");
    }
    // the echoed config reloads to the same run
    let again = dir.path().join("again");
    let o = fedcrl(&["run", "--config", out.join("run.json").to_str().unwrap(), "--out", again.to_str().unwrap()]);
    assert!(o.status.success());
    assert_eq!(std::fs::read(out.join("metrics.csv")).unwrap(), std::fs::read(again.join("metrics.csv")).unwrap());
}

#[test]
fn repeated_runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.json");
    write(&cfg, SMALL);
    let mut csvs = Vec::new();
    for name in ["a", "b"] {
        let out = dir.path().join(name);
        let o = fedcrl(&["run", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
        assert!(o.status.success());
        csvs.push(std::fs::read(out.join("metrics.csv")).unwrap());
    }
    assert_eq!(csvs[0], csvs[1]);
    let out = dir.path().join("c");
    let o = fedcrl(&["run", "--config", cfg.to_str().unwrap(), "--seed", "4", "--out", out.to_str().unwrap()]);
    assert!(o.status.success());
    assert_ne!(csvs[0], std::fs::read(out.join("metrics.csv")).unwrap());
}

#[test]
fn config_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o");
    let out = out.to_str().unwrap();
    let cfg = dir.path().join("c.json");
    let cases = [
        r#"{"env": {"name": "random-mdp"}, "mode": "fednpg", "federation": {"lr_theta": -1.0}}"#,
        r#"{"env": {"name": "random-mdp"}, "mode": "fednpg", "federation": {"bogus": 1}}"#,
        r#"{"env": {"name": "nowhere"}, "mode": "fednpg"}"#,
        r#"{"env": {"name": "random-mdp"}, "mode": "fedppo"}"#,
        r#"{"env": {"name": "random-mdp"}, "mode": "fednpg""#,
    ];
    for text in cases {
        write(&cfg, text);
        let o = fedcrl(&["run", "--config", cfg.to_str().unwrap(), "--out", out]);
        assert_eq!(o.status.code(), Some(2), "{text}: {}", String::from_utf8_lossy(&o.stderr));
    }
    let o = fedcrl(&["run", "--config", dir.path().join("missing.json").to_str().unwrap(), "--out", out]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn runtime_failures_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let bad_env = dir.path().join("env.json");
    write(&bad_env, "{\"n_states\": 2}");
    let cfg = dir.path().join("c.json");
    write(
        &cfg,
        &format!(r#"{{"env": {{"name": "cmdp-file", "path": {:?}}}, "mode": "fednpg"}}"#, bad_env.to_str().unwrap()),
    );
    let o = fedcrl(&["run", "--config", cfg.to_str().unwrap(), "--out", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn corrupted_gradients_fail_selfcheck() {
    let o = fedcrl(&["selfcheck", "--corrupt-gradient"]);
    assert_eq!(o.status.code(), Some(1));
    let text = String::from_utf8_lossy(&o.stdout);
    for name in ["policy log-prob gradient", "critic loss gradient", "clip surrogate gradient"] {
        assert!(text.contains(&format!("FAIL {name}")), "{text}");
    }
    assert!(text.contains("PASS decomposition identity"));
}

#[test]
fn gen_env_round_trips_through_a_run() {
    let dir = tempfile::tempdir().unwrap();
    let env = dir.path().join("env.json");
    let o = fedcrl(&["gen-env", "--env", "random-mdp", "--seed", "6", "--out", env.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let loaded = TabularCmdp::load(&env).unwrap();
    assert_eq!(loaded, random_mdp(6, 3, 5, 4, 0.7).unwrap());

    let cfg = dir.path().join("c.json");
    let from_file = format!(
        r#"{{"env": {{"name": "cmdp-file", "path": {:?}}}, "mode": "fednpg", "federation": {{"total_steps": 30}}}}"#,
        env.to_str().unwrap()
    );
    let inline = r#"{"env": {"name": "random-mdp", "instance_seed": 6}, "mode": "fednpg", "federation": {"total_steps": 30}}"#;
    let mut csvs = Vec::new();
    for (i, text) in [from_file.as_str(), inline].into_iter().enumerate() {
        write(&cfg, text);
        let out = dir.path().join(format!("r{i}"));
        let o = fedcrl(&["run", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        csvs.push(std::fs::read(out.join("metrics.csv")).unwrap());
    }
    assert_eq!(csvs[0], csvs[1]);

    let o = fedcrl(&["gen-env", "--env", "cartpole-c", "--out", env.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn sweep_writes_per_seed_runs_and_a_summary() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.json");
    write(&cfg, SMALL);
    let out = dir.path().join("sweep");
    let o = fedcrl(&["sweep", "--config", cfg.to_str().unwrap(), "--seeds", "0,1,2", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let summary = std::fs::read_to_string(out.join("summary.csv")).unwrap();
    let lines: Vec<&str> = summary.lines().collect();
    assert_eq!(lines[0], "seed,j_r,rr,mvr,mrvr,status");
    assert_eq!(lines.len(), 6);
    assert!(lines[4].starts_with("mean,"));
    assert!(lines[5].starts_with("se,"));
    for s in 0..3 {
        assert!(out.join(format!("seed_{s}/metrics.csv")).exists());
    }
}

#[test]
fn zero_step_run_exits_cleanly_with_a_header_only_csv() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.json");
    write(&cfg, SMALL);
    let out = dir.path().join("run");
    let o = fedcrl(&[
        "run",
        "--config",
        cfg.to_str().unwrap(),
        "--set",
        "federation.total_steps=0",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(out.join("metrics.csv")).unwrap();
    assert_eq!(
        text,
        "iteration,agent,j_r,j_c_0,j_c_1,j_c_2,j_c_3,lambda_0,lambda_1,lambda_2,lambda_3,aggregated\n"
    );
}

#[test]
fn single_seed_sweep_has_an_empty_se_row() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.json");
    write(&cfg, SMALL);
    let out = dir.path().join("sweep");
    let o = fedcrl(&["sweep", "--config", cfg.to_str().unwrap(), "--seeds", "2", "--out", out.to_str().unwrap()]);
    assert!(o.status.success());
    let summary = std::fs::read_to_string(out.join("summary.csv")).unwrap();
    let lines: Vec<&str> = summary.lines().collect();
    let seed_row: Vec<&str> = lines[1].split(',').collect();
    let mean_row: Vec<&str> = lines[2].split(',').collect();
    assert_eq!(seed_row[1..5], mean_row[1..5]);
    assert_eq!(lines[3], "se,,,,,ok");
}
