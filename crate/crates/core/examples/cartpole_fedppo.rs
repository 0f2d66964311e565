//! A short FedPPO run on constrained cart-pole with two agents. Prints the
//! keys of agent 0's payloads and the mean episode statistics per iteration.

use fedcrl::envs::{cartpole_constrained, EpisodicEnv};
use fedcrl::fed::FederationConfig;
use fedcrl::nn::OptimizerKind;
use fedcrl::ppo::{run_fedppo_inspect, PpoConfig};

fn main() -> fedcrl::Result<()> {
    let factory = |_: usize| -> Box<dyn EpisodicEnv + Send> { Box::new(cartpole_constrained()) };
    let fed = FederationConfig {
        n_agents: 2,
        local_steps: 1,
        total_steps: 20,
        lambda_max: 1.0,
        ..FederationConfig::default()
    };
    let ppo = PpoConfig {
        horizon: 2000,
        optimizer: OptimizerKind::Adam,
        ..PpoConfig::default()
    };
    let out = run_fedppo_inspect(&factory, &[20.0, 20.0], &fed, &ppo, &mut |agent, p| {
        let keys = serde_json::to_value(p).expect("serialises");
        let keys: Vec<&String> = keys.as_object().expect("object").keys().collect();
        if agent == 0 {
            println!("payload keys {keys:?}");
        }
    })?;
    for l in &out.logs {
        let n = l.agents.len() as f64;
        let reward = l.agents.iter().map(|a| a.j_r).sum::<f64>() / n;
        let costs: Vec<f64> = (0..2).map(|j| l.agents.iter().map(|a| a.j_c[j]).sum::<f64>() / n).collect();
        println!("iteration {:>3}: reward {reward:>7.2} costs {costs:.2?} lambda {:.3?}", l.iteration, l.lambdas);
    }
    Ok(())
}
