//! Federated primal-dual policy optimization for constrained reinforcement
//! learning where each agent observes only its own constraint signals.
//!
//! The crate is organised by layer:
//!
//! - [`cmdp`]: tabular constrained MDPs, exact and sampled evaluation.
//! - [`envs`]: random CMDPs, the windy cliff gridworld, constrained cart-pole.
//! - [`policy`]: softmax parameterisation and aggregation rules.
//! - [`npg`]: exact and sample-based natural policy gradient directions.
//! - [`fed`]: the federated primal-dual NPG driver and its baselines.
//! - [`nn`] and [`ppo`]: small feedforward networks and federated PPO.
//! - [`metrics`], [`io`]: reward and violation ratios, CSV logs, run configuration.
//! - [`runner`]: end-to-end runs and seed sweeps used by the CLI.
//! - [`oracle`]: independent reference computations used by checks.

pub mod cmdp;
pub mod envs;
pub mod error;
pub mod fed;
pub mod io;
pub mod metrics;
pub mod nn;
pub mod npg;
pub mod oracle;
pub mod policy;
pub mod ppo;
pub mod runner;
pub mod selfcheck;

pub use error::{Error, Result};
