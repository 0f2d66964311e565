//! With one agent and the multiplier frozen at zero, FedNPG is plain NPG.
//! Prints the fraction of the optimal return reached for several step sizes.

use fedcrl::cmdp::{evaluate_exact, Signal};
use fedcrl::envs::random_mdp;
use fedcrl::fed::{run_fednpg, Estimator, FederationConfig};
use fedcrl::oracle;

fn main() -> fedcrl::Result<()> {
    println!("seed  lr_theta  J_r/J_r*");
    for seed in 0..3 {
        let m = random_mdp(seed, 3, 5, 1, 0.7)?;
        let opt = oracle::optimal_value(&m.dynamics, &m.reward, 1e-12);
        for lr in [1e-3, 1e-2, 1e-1] {
            let cfg = FederationConfig {
                n_agents: 1,
                local_steps: 1,
                total_steps: 5000,
                lr_theta: lr,
                estimator: Estimator::Exact,
                freeze_lambda: true,
                seed,
                ..FederationConfig::default()
            };
            let out = run_fednpg(&m, &cfg)?;
            let j = evaluate_exact(&m, &out.params.policy(), Signal::Reward)?.objective;
            println!("{seed:<5} {lr:<9} {:.4}", j / opt);
        }
    }
    Ok(())
}
