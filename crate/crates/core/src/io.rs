//! Run configuration and CSV logs.
//!
//! A run config is a JSON document
//!
//! ```json
//! {"env": {"name": "random-mdp"}, "mode": "fednpg"}
//! ```
//!
//! Omitted blocks and fields are filled from the per-environment defaults
//! in [`defaults_for`], then dotted-key overrides are applied, and only then
//! is the result parsed strictly. Unknown keys are rejected with their path.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::envs::{RandomMdpParams, WindyCliffParams};
use crate::error::{Error, Result};
use crate::fed::{FederationConfig, RoundLog};
use crate::ppo::PpoConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RandomMdpEnv {
    /// Instance seed; the run seed is used when absent.
    pub instance_seed: Option<u64>,
    pub n_states: usize,
    pub n_actions: usize,
    pub n_constraints: usize,
    pub hardness: f64,
    pub discount: f64,
    pub screen: bool,
    pub max_retries: usize,
}

impl RandomMdpEnv {
    pub fn params(&self) -> RandomMdpParams {
        RandomMdpParams {
            n_states: self.n_states,
            n_actions: self.n_actions,
            n_constraints: self.n_constraints,
            hardness: self.hardness,
            discount: self.discount,
            screen: self.screen,
            max_retries: self.max_retries,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CartPoleEnv {
    pub budgets: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CmdpFileEnv {
    pub path: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name")]
pub enum EnvConfig {
    #[serde(rename = "random-mdp")]
    RandomMdp(RandomMdpEnv),
    #[serde(rename = "windy-cliff")]
    WindyCliff(WindyCliffParams),
    #[serde(rename = "cartpole-c")]
    CartPole(CartPoleEnv),
    /// A tabular CMDP stored in the JSON format of `TabularCmdp::save`.
    #[serde(rename = "cmdp-file")]
    CmdpFile(CmdpFileEnv),
}

impl EnvConfig {
    pub fn is_episodic(&self) -> bool {
        matches!(self, EnvConfig::CartPole(_))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    FedNpg,
    FedPpo,
    /// Single agent trained on constraint `k` only.
    Local(usize),
    Omniscient,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Mode::FedNpg => write!(f, "fednpg"),
            Mode::FedPpo => write!(f, "fedppo"),
            Mode::Local(k) => write!(f, "local:{k}"),
            Mode::Omniscient => write!(f, "omniscient"),
        }
    }
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fednpg" => Ok(Mode::FedNpg),
            "fedppo" => Ok(Mode::FedPpo),
            "omniscient" => Ok(Mode::Omniscient),
            _ => s
                .strip_prefix("local:")
                .and_then(|k| k.parse().ok())
                .map(Mode::Local)
                .ok_or_else(|| Error::invalid("mode", format!("unknown mode {s:?} (fednpg | fedppo | local:k | omniscient)"))),
        }
    }
}

impl Serialize for Mode {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Mode {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub env: EnvConfig,
    pub mode: Mode,
    pub federation: FederationConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ppo: Option<PpoConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        self.federation.validate()?;
        match (&self.env, self.mode) {
            (EnvConfig::CartPole(c), mode) => {
                if mode == Mode::FedNpg {
                    return Err(Error::invalid("mode", "fednpg needs a tabular environment"));
                }
                let ppo = self.ppo.as_ref().ok_or_else(|| Error::invalid("ppo", "missing"))?;
                ppo.validate()?;
                if c.budgets.len() != 2 {
                    return Err(Error::invalid("env.budgets", "cart-pole has two constraints"));
                }
            }
            (_, Mode::FedPpo) => return Err(Error::invalid("mode", "fedppo needs an episodic environment")),
            (EnvConfig::RandomMdp(r), _) => r.params().validate()?,
            (EnvConfig::WindyCliff(w), _) => {
                if !(0.0..=1.0).contains(&w.wind_prob) {
                    return Err(Error::invalid("env.wind_prob", format!("{} not in [0,1]", w.wind_prob)));
                }
                if !(w.discount > 0.0 && w.discount < 1.0) {
                    return Err(Error::invalid("env.discount", format!("{} not in (0,1)", w.discount)));
                }
            }
            (EnvConfig::CmdpFile(_), _) => {}
        }
        if self.ppo.is_some() && !self.env.is_episodic() {
            return Err(Error::invalid("ppo", "only used with episodic environments"));
        }
        Ok(())
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serialises")
    }
}

/// Per-environment defaults used when a config leaves a field out.
pub fn defaults_for(env_name: &str) -> Result<Value> {
    let fed = |v: Value| -> Value {
        let mut base = serde_json::to_value(FederationConfig::default()).expect("serialises");
        merge(&mut base, v);
        base
    };
    Ok(match env_name {
        "random-mdp" => {
            let p = RandomMdpParams::default();
            json!({
                "env": {
                    "name": "random-mdp",
                    "instance_seed": null,
                    "n_states": p.n_states,
                    "n_actions": p.n_actions,
                    "n_constraints": p.n_constraints,
                    "hardness": p.hardness,
                    "discount": p.discount,
                    "screen": p.screen,
                    "max_retries": p.max_retries,
                },
                "federation": fed(json!({})),
            })
        }
        "windy-cliff" => {
            let p = WindyCliffParams::default();
            json!({
                "env": {"name": "windy-cliff", "wind_prob": p.wind_prob, "discount": p.discount},
                "federation": fed(json!({
                    "n_agents": 3,
                    "lr_theta": 3e-4,
                    "lr_lambda": 3e-4,
                    "total_steps": 20000,
                })),
            })
        }
        "cartpole-c" => {
            let mut ppo = serde_json::to_value(PpoConfig::default()).expect("serialises");
            ppo["optimizer"] = json!("adam");
            json!({
                "env": {"name": "cartpole-c", "budgets": [20.0, 20.0]},
                "federation": fed(json!({
                    "n_agents": 2,
                    "local_steps": 1,
                    "total_steps": 600,
                    "lr_theta": 1e-4,
                    "lr_lambda": 1e-3,
                    "lambda_max": 1.0,
                })),
                "ppo": ppo,
            })
        }
        "cmdp-file" => json!({
            "env": {"name": "cmdp-file"},
            "federation": fed(json!({})),
        }),
        other => {
            return Err(Error::invalid(
                "env.name",
                format!("unknown environment {other:?} (random-mdp | windy-cliff | cartpole-c | cmdp-file)"),
            ))
        }
    })
}

/// Recursively overlay `top` onto `base`; objects merge, everything else replaces.
fn merge(base: &mut Value, top: Value) {
    match (base, top) {
        (Value::Object(b), Value::Object(t)) => {
            for (k, v) in t {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

/// Apply `key.path=value`; the value is parsed as JSON, falling back to a
/// plain string.
pub fn apply_override(doc: &mut Value, assignment: &str) -> Result<()> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| Error::invalid("--set", format!("{assignment:?} is not key=value")))?;
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let mut slot = doc;
    for part in key.split('.') {
        let obj = slot
            .as_object_mut()
            .ok_or_else(|| Error::invalid(key, format!("{part:?} is not inside an object")))?;
        slot = obj.entry(part).or_insert(Value::Null);
    }
    *slot = value;
    Ok(())
}

/// Fill defaults, apply overrides, parse strictly, and validate.
pub fn resolve_config(doc: Value, overrides: &[String]) -> Result<RunConfig> {
    let mut doc = doc;
    for o in overrides.iter().filter(|o| o.starts_with("env.name=")) {
        apply_override(&mut doc, o)?;
    }
    let name = doc
        .pointer("/env/name")
        .and_then(Value::as_str)
        .ok_or_else(|| Error::invalid("env.name", "missing"))?
        .to_string();
    let mut full = defaults_for(&name)?;
    merge(&mut full, doc);
    for o in overrides {
        apply_override(&mut full, o)?;
    }
    let cfg: RunConfig = serde_path_to_error::deserialize(full).map_err(|e| Error::Invalid {
        field: e.path().to_string(),
        message: e.inner().to_string(),
    })?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn parse_config(text: &str, overrides: &[String]) -> Result<RunConfig> {
    let doc: Value = serde_json::from_str(text).map_err(|e| Error::Parse {
        path: "config".into(),
        message: e.to_string(),
    })?;
    resolve_config(doc, overrides)
}

pub fn load_config(path: impl AsRef<Path>, overrides: &[String]) -> Result<RunConfig> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let doc: Value = serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    resolve_config(doc, overrides)
}

/// One CSV line. `agent == None` marks the aggregated policy.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvRow {
    pub iteration: usize,
    pub agent: Option<usize>,
    pub j_r: f64,
    pub j_c: Vec<f64>,
    pub lambdas: Vec<f64>,
    pub aggregated: bool,
}

pub fn rows_from_logs(logs: &[RoundLog]) -> Vec<CsvRow> {
    let mut rows = Vec::new();
    for log in logs {
        for a in &log.agents {
            rows.push(CsvRow {
                iteration: log.iteration,
                agent: Some(a.agent),
                j_r: a.j_r,
                j_c: a.j_c.clone(),
                lambdas: log.lambdas.clone(),
                aggregated: false,
            });
        }
        if let Some(g) = &log.global {
            rows.push(CsvRow {
                iteration: log.iteration,
                agent: None,
                j_r: g.j_r,
                j_c: g.j_c.clone(),
                lambdas: log.lambdas.clone(),
                aggregated: true,
            });
        }
    }
    rows
}

fn header(n_constraints: usize) -> Vec<String> {
    let mut h = vec!["iteration".to_string(), "agent".into(), "j_r".into()];
    h.extend((0..n_constraints).map(|i| format!("j_c_{i}")));
    h.extend((0..n_constraints).map(|i| format!("lambda_{i}")));
    h.push("aggregated".into());
    h
}

/// Nine significant digits.
pub fn fmt_float(x: f64) -> String {
    format!("{x:.8e}")
}

pub fn write_csv(logs: &[RoundLog], n_constraints: usize, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let wrap = |e: csv::Error| Error::io(path, std::io::Error::other(e));
    let mut w = csv::Writer::from_path(path).map_err(wrap)?;
    w.write_record(header(n_constraints)).map_err(wrap)?;
    for row in rows_from_logs(logs) {
        let mut rec = vec![
            row.iteration.to_string(),
            row.agent.map_or_else(|| "global".to_string(), |a| a.to_string()),
            fmt_float(row.j_r),
        ];
        rec.extend(row.j_c.iter().map(|&x| fmt_float(x)));
        rec.extend(row.lambdas.iter().map(|&x| fmt_float(x)));
        rec.push((row.aggregated as u8).to_string());
        w.write_record(rec).map_err(wrap)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_csv(path: impl AsRef<Path>) -> Result<Vec<CsvRow>> {
    let path = path.as_ref();
    let bad = |line: usize, msg: String| Error::Parse {
        path: format!("{}:{line}", path.display()),
        message: msg,
    };
    let mut r = csv::Reader::from_path(path).map_err(|e| Error::io(path, std::io::Error::other(e)))?;
    let headers = r.headers().map_err(|e| bad(1, e.to_string()))?.clone();
    if headers.len() < 4 || (headers.len() - 4) % 2 != 0 {
        return Err(bad(1, format!("unexpected header {headers:?}")));
    }
    let n = (headers.len() - 4) / 2;
    if headers.iter().collect::<Vec<_>>() != header(n) {
        return Err(bad(1, format!("unexpected header {headers:?}")));
    }
    let mut rows = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| bad(line, e.to_string()))?;
        let float = |k: usize| rec[k].parse::<f64>().map_err(|e| bad(line, format!("column {k}: {e}")));
        rows.push(CsvRow {
            iteration: rec[0].parse().map_err(|e| bad(line, format!("iteration: {e}")))?,
            agent: match &rec[1] {
                "global" => None,
                a => Some(a.parse().map_err(|e| bad(line, format!("agent: {e}")))?),
            },
            j_r: float(2)?,
            j_c: (0..n).map(|k| float(3 + k)).collect::<Result<_>>()?,
            lambdas: (0..n).map(|k| float(3 + n + k)).collect::<Result<_>>()?,
            aggregated: &rec[3 + 2 * n] == "1",
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_random_mdp_defaults() {
        let cfg = parse_config(r#"{"env": {"name": "random-mdp"}, "mode": "fednpg"}"#, &[]).unwrap();
        let f = &cfg.federation;
        assert_eq!((f.local_steps, f.k_samples, f.lr_theta, f.lr_lambda, f.lambda_max), (5, 10, 1e-3, 1e-3, 10.0));
        assert_eq!(f.n_agents, 4);
    }

    #[test]
    fn windy_and_cartpole_defaults() {
        let cfg = parse_config(r#"{"env": {"name": "windy-cliff"}, "mode": "fednpg"}"#, &[]).unwrap();
        assert_eq!((cfg.federation.lr_theta, cfg.federation.lr_lambda), (3e-4, 3e-4));
        let cfg = parse_config(r#"{"env": {"name": "cartpole-c"}, "mode": "fedppo"}"#, &[]).unwrap();
        let ppo = cfg.ppo.unwrap();
        assert_eq!((cfg.federation.local_steps, ppo.horizon, cfg.federation.lambda_max), (1, 10_000, 1.0));
        assert_eq!((ppo.lr_theta, ppo.lr_phi, ppo.lr_psi, ppo.lr_lambda), (1e-4, 1e-4, 1e-4, 1e-3));
    }

    #[test]
    fn rejects_with_field_path() {
        let e = parse_config(
            r#"{"env": {"name": "random-mdp"}, "mode": "fednpg", "federation": {"lr_theta": -1}}"#,
            &[],
        )
        .unwrap_err();
        assert!(e.to_string().contains("federation.lr_theta"), "{e}");
        let e = parse_config(
            r#"{"env": {"name": "random-mdp"}, "mode": "fednpg", "federation": {"lr_thetta": 1}}"#,
            &[],
        )
        .unwrap_err();
        assert!(e.to_string().contains("lr_thetta"), "{e}");
        assert!(parse_config(r#"{"env": {"name": "random-mdp"}, "mode": "fednpg", "extra": 1}"#, &[]).is_err());
        assert!(parse_config(r#"{"env": {"name": "random-mdp", "colour": 1}, "mode": "fednpg"}"#, &[]).is_err());
    }

    #[test]
    fn overrides_are_typed() {
        let base = r#"{"env": {"name": "random-mdp"}, "mode": "fednpg"}"#;
        let cfg = parse_config(base, &["federation.lr_theta=0.01".into(), "mode=local:2".into()]).unwrap();
        assert_eq!(cfg.federation.lr_theta, 0.01);
        assert_eq!(cfg.mode, Mode::Local(2));
        let e = parse_config(base, &["federation.n_agents=many".into()]).unwrap_err();
        assert!(e.to_string().contains("federation.n_agents"), "{e}");
    }

    #[test]
    fn echo_is_idempotent() {
        let cfg = parse_config(r#"{"env": {"name": "windy-cliff"}, "mode": "local:1"}"#, &[]).unwrap();
        let again = parse_config(&cfg.to_json_string(), &[]).unwrap();
        assert_eq!(cfg, again);
    }

    #[test]
    fn mode_strings() {
        for m in ["fednpg", "fedppo", "local:3", "omniscient"] {
            assert_eq!(m.parse::<Mode>().unwrap().to_string(), m);
        }
        assert!("local:x".parse::<Mode>().is_err());
    }
}
