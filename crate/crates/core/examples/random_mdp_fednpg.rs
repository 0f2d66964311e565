//! FedNPG on a random CMDP with four agents, one constraint each, compared
//! with the omniscient single agent.

use fedcrl::cmdp::evaluate_all;
use fedcrl::envs::random_mdp;
use fedcrl::fed::{run_baseline_omniscient, run_fednpg, FederationConfig};
use fedcrl::metrics::compute_metrics;

fn main() -> fedcrl::Result<()> {
    let seed = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(0);
    let m = random_mdp(seed, 3, 5, 4, 0.7)?;
    let cfg = FederationConfig { seed, ..FederationConfig::default() };
    let fed = run_fednpg(&m, &cfg)?;
    let omni = run_baseline_omniscient(&m, &cfg)?;
    let (jr, jc) = evaluate_all(&m, &fed.params.policy())?;
    let (or, oc) = evaluate_all(&m, &omni.params.policy())?;
    let r = compute_metrics(jr, &jc, or, &oc, &m.thresholds)?;
    println!("thresholds {:?}", m.thresholds);
    println!("fednpg     J_r {jr:.4} J_c {jc:.4?}");
    println!("omniscient J_r {or:.4} J_c {oc:.4?}");
    println!("RR {:.4} mVR {:.4} mRVR {:?}", r.rr()?, r.mvr, r.mrvr);
    println!("final multipliers {:.3?}", fed.lambdas);
    Ok(())
}
