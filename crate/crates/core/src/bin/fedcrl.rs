use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use fedcrl::io::{load_config, parse_config, RunConfig};
use fedcrl::runner::{cmd_gen_env, cmd_run, cmd_sweep, thread_pool};
use fedcrl::selfcheck::{run_selfcheck, SelfcheckOptions};
use fedcrl::Error;

#[derive(Parser)]
#[command(name = "fedcrl", version, about = "Federated constrained RL experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArgs {
    /// Run configuration (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Dotted-key override, e.g. federation.lr_theta=0.001.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Override the configured mode.
    #[arg(long)]
    mode: Option<String>,
}

impl ConfigArgs {
    fn load(&self, seed: Option<u64>) -> Result<RunConfig, Error> {
        let mut o = self.overrides.clone();
        if let Some(m) = &self.mode {
            o.push(format!("mode={m}"));
        }
        if let Some(s) = seed {
            o.push(format!("federation.seed={s}"));
        }
        load_config(&self.config, &o)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Execute one run and write its output directory.
    Run {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// One run per seed plus a summary of final metrics.
    Sweep {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        out: PathBuf,
        /// Comma-separated seeds.
        #[arg(long, value_delimiter = ',', required = true)]
        seeds: Vec<u64>,
    },
    /// Fast invariant suite.
    Selfcheck {
        /// Perturb analytic gradients (the gradient checks must then fail).
        #[arg(long, hide = true)]
        corrupt_gradient: bool,
    },
    /// Write a tabular environment as CMDP JSON.
    GenEnv {
        /// random-mdp | windy-cliff
        #[arg(long)]
        env: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
        #[arg(long)]
        out: PathBuf,
    },
}

fn is_config_error(e: &Error) -> bool {
    matches!(e, Error::Invalid { .. } | Error::Parse { .. } | Error::Io { .. })
}

fn fail(e: Error, config_stage: bool) -> ExitCode {
    eprintln!("error: {e}");
    ExitCode::from(if config_stage && is_config_error(&e) { 2 } else { 1 })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let pool = match thread_pool() {
        Ok(p) => p,
        Err(e) => return fail(e, true),
    };
    pool.install(|| dispatch(cli.command))
}

fn dispatch(command: Command) -> ExitCode {
    match command {
        Command::Run { cfg, out, seed } => {
            let config = match cfg.load(seed) {
                Ok(c) => c,
                Err(e) => return fail(e, true),
            };
            let Some(out) = out.or_else(|| config.output.clone()) else {
                return fail(Error::Invalid {
                    field: "output".into(),
                    message: "pass --out or set output in the config".into(),
                }, true);
            };
            match cmd_run(&config, &out) {
                Ok(r) => {
                    println!("wrote {} (final j_r {:.6}, j_c {:?})", out.display(), r.final_j_r, r.final_j_c);
                    ExitCode::SUCCESS
                }
                Err(e) => fail(e, false),
            }
        }
        Command::Sweep { cfg, out, seeds } => {
            let config = match cfg.load(None) {
                Ok(c) => c,
                Err(e) => return fail(e, true),
            };
            match cmd_sweep(&config, &seeds, &out) {
                Ok(entries) => {
                    let failed = entries.iter().filter(|e| e.report.is_err()).count();
                    for e in &entries {
                        if let Err(err) = &e.report {
                            eprintln!("seed {}: {err}", e.seed);
                        }
                    }
                    println!("wrote {}", out.join("summary.csv").display());
                    if failed > 0 {
                        ExitCode::from(1)
                    } else {
                        ExitCode::SUCCESS
                    }
                }
                Err(e) => fail(e, true),
            }
        }
        Command::Selfcheck { corrupt_gradient } => {
            let results = run_selfcheck(SelfcheckOptions { corrupt_gradient });
            let mut ok = true;
            for r in &results {
                println!("{} {}: {}", if r.passed { "PASS" } else { "FAIL" }, r.name, r.detail);
                ok &= r.passed;
            }
            if ok {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Command::GenEnv { env, seed, overrides, out } => {
            let doc = format!(r#"{{"env": {{"name": {env:?}}}, "mode": "fednpg"}}"#);
            let config = match parse_config(&doc, &overrides) {
                Ok(c) => c,
                Err(e) => return fail(e, true),
            };
            match cmd_gen_env(&config.env, seed, &out) {
                Ok(m) => {
                    println!("wrote {} ({} states, {} actions, {} constraints)", out.display(), m.n_states(), m.n_actions(), m.n_constraints());
                    ExitCode::SUCCESS
                }
                Err(e) => fail(e, true),
            }
        }
    }
}
