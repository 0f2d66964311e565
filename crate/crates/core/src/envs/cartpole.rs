use rand::{Rng, RngCore};

use super::{EpisodicEnv, StepOutcome};
use crate::error::{Error, Result};

/// Hazard zone 1 for the cart position.
pub const Z1: [(f64, f64); 5] = [(-2.4, -2.3), (-1.3, -1.2), (-0.1, 0.0), (1.1, 1.2), (2.2, 2.3)];
/// Hazard zone 2 for the cart position.
pub const Z2: [(f64, f64); 5] = [(-2.3, -2.2), (-1.2, -1.1), (0.0, 0.1), (1.2, 1.3), (2.3, 2.4)];

fn in_union(x: f64, zone: &[(f64, f64)]) -> bool {
    zone.iter().any(|&(lo, hi)| x >= lo && x <= hi)
}

/// Zone-membership costs for a cart position.
pub fn zone_costs(x: f64) -> [f64; 2] {
    [in_union(x, &Z1) as u8 as f64, in_union(x, &Z2) as u8 as f64]
}

/// Classic cart-pole constants (Euler integration).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CartPoleParams {
    pub gravity: f64,
    pub cart_mass: f64,
    pub pole_mass: f64,
    pub half_length: f64,
    pub force: f64,
    pub tau: f64,
    pub angle_limit: f64,
    pub x_limit: f64,
    pub max_steps: usize,
}

impl Default for CartPoleParams {
    fn default() -> Self {
        CartPoleParams {
            gravity: 9.8,
            cart_mass: 1.0,
            pole_mass: 0.1,
            half_length: 0.5,
            force: 10.0,
            tau: 0.02,
            angle_limit: 12.0 * 2.0 * std::f64::consts::PI / 360.0,
            x_limit: 2.4,
            max_steps: 200,
        }
    }
}

/// Cart-pole with two position-zone costs. State is `[x, ẋ, θ, θ̇]`.
#[derive(Debug, Clone)]
pub struct CartPole {
    pub params: CartPoleParams,
    state: [f64; 4],
    steps: usize,
    done: bool,
}

pub fn cartpole_constrained() -> CartPole {
    CartPole::new(CartPoleParams::default())
}

impl CartPole {
    pub fn new(params: CartPoleParams) -> Self {
        CartPole {
            params,
            state: [0.0; 4],
            steps: 0,
            done: true,
        }
    }

    pub fn state(&self) -> [f64; 4] {
        self.state
    }

    /// Place the system in an arbitrary state and start a fresh episode.
    pub fn set_state(&mut self, state: [f64; 4]) {
        self.state = state;
        self.steps = 0;
        self.done = false;
    }

    /// Total mechanical energy, relative to the pole hanging at rest.
    pub fn energy(&self) -> f64 {
        let p = &self.params;
        let [_, v, th, om] = self.state;
        let l = p.half_length;
        // cart kinetic + pole (point mass at half length) kinetic + potential
        let pole_vx = v + l * om * th.cos();
        let pole_vy = -l * om * th.sin();
        0.5 * p.cart_mass * v * v
            + 0.5 * p.pole_mass * (pole_vx * pole_vx + pole_vy * pole_vy)
            + p.pole_mass * p.gravity * l * (1.0 + th.cos())
    }

    fn integrate(&mut self, action: usize) {
        let p = &self.params;
        let [x, x_dot, theta, theta_dot] = self.state;
        let force = if action == 1 { p.force } else { -p.force };
        let total_mass = p.cart_mass + p.pole_mass;
        let polemass_length = p.pole_mass * p.half_length;
        let (sin, cos) = theta.sin_cos();
        let temp = (force + polemass_length * theta_dot * theta_dot * sin) / total_mass;
        let theta_acc = (p.gravity * sin - cos * temp)
            / (p.half_length * (4.0 / 3.0 - p.pole_mass * cos * cos / total_mass));
        let x_acc = temp - polemass_length * theta_acc * cos / total_mass;
        self.state = [
            x + p.tau * x_dot,
            x_dot + p.tau * x_acc,
            theta + p.tau * theta_dot,
            theta_dot + p.tau * theta_acc,
        ];
    }
}

impl EpisodicEnv for CartPole {
    fn observation_dim(&self) -> usize {
        4
    }

    fn n_actions(&self) -> usize {
        2
    }

    fn n_costs(&self) -> usize {
        2
    }

    fn reset(&mut self, rng: &mut dyn RngCore) -> Vec<f64> {
        for v in self.state.iter_mut() {
            *v = rng.gen_range(-0.05..0.05);
        }
        self.steps = 0;
        self.done = false;
        self.state.to_vec()
    }

    fn step(&mut self, action: usize) -> Result<StepOutcome> {
        if self.done {
            return Err(Error::Env("step called on a finished episode; call reset".into()));
        }
        if action >= 2 {
            return Err(Error::Env(format!("action {action} out of range")));
        }
        self.integrate(action);
        self.steps += 1;
        let [x, _, theta, _] = self.state;
        let p = &self.params;
        let failed = x.abs() > p.x_limit || theta.abs() > p.angle_limit;
        self.done = failed || self.steps >= p.max_steps;
        Ok(StepOutcome {
            observation: self.state.to_vec(),
            reward: 1.0,
            costs: zone_costs(x).to_vec(),
            done: self.done,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zone_examples() {
        assert_eq!(zone_costs(-2.35), [1.0, 0.0]);
        assert_eq!(zone_costs(0.05), [0.0, 1.0]);
        assert_eq!(zone_costs(0.6), [0.0, 0.0]);
        assert_eq!(zone_costs(1.25), [0.0, 1.0]);
        assert_eq!(zone_costs(-1.15), [0.0, 1.0]);
    }

    #[test]
    fn step_after_done_fails() {
        let mut env = cartpole_constrained();
        assert!(env.step(0).is_err());
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        env.reset(&mut rng);
        let mut n = 0;
        loop {
            n += 1;
            if env.step(1).unwrap().done {
                break;
            }
        }
        assert!(n < 200);
        assert!(env.step(0).is_err());
    }

    #[test]
    fn episode_capped_at_max_steps() {
        let mut env = cartpole_constrained();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        env.reset(&mut rng);
        env.params.angle_limit = f64::INFINITY;
        env.params.x_limit = f64::INFINITY;
        let mut steps = 0;
        while !env.step(steps % 2).unwrap().done {
            steps += 1;
        }
        assert_eq!(steps + 1, 200);
    }
}
