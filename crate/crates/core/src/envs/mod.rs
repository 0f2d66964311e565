//! Experimental environments: seeded random CMDPs, the windy cliff
//! gridworld, and a constrained cart-pole.

mod cartpole;
mod random_mdp;
mod windy_cliff;

pub use cartpole::{cartpole_constrained, zone_costs, CartPole, CartPoleParams, Z1, Z2};
pub use random_mdp::{random_mdp, random_mdp_with, RandomMdpParams};
pub use windy_cliff::{windycliff, windycliff_with, GridSpec, WindyCliff, WindyCliffParams};

use rand::RngCore;

use crate::error::Result;

/// Names accepted in run configurations.
pub const ENV_NAMES: [&str; 3] = ["random-mdp", "windy-cliff", "cartpole-c"];

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub observation: Vec<f64>,
    pub reward: f64,
    /// One entry per constraint.
    pub costs: Vec<f64>,
    pub done: bool,
}

/// Episodic environment with a finite action set and vector-valued costs.
///
/// After a step reports `done`, further steps fail until `reset`.
pub trait EpisodicEnv {
    fn observation_dim(&self) -> usize;
    fn n_actions(&self) -> usize;
    fn n_costs(&self) -> usize;
    fn reset(&mut self, rng: &mut dyn RngCore) -> Vec<f64>;
    fn step(&mut self, action: usize) -> Result<StepOutcome>;
}

impl<E: EpisodicEnv + ?Sized> EpisodicEnv for Box<E> {
    fn observation_dim(&self) -> usize {
        (**self).observation_dim()
    }
    fn n_actions(&self) -> usize {
        (**self).n_actions()
    }
    fn n_costs(&self) -> usize {
        (**self).n_costs()
    }
    fn reset(&mut self, rng: &mut dyn RngCore) -> Vec<f64> {
        (**self).reset(rng)
    }
    fn step(&mut self, action: usize) -> Result<StepOutcome> {
        (**self).step(action)
    }
}
