//! Exact policy evaluation and occupancy measures on a random CMDP, checked
//! against dense elimination and a truncated series.

use fedcrl::cmdp::{evaluate_exact, occupancy_exact, PolicyTable, Signal};
use fedcrl::envs::random_mdp;
use fedcrl::oracle;

fn main() -> fedcrl::Result<()> {
    let m = random_mdp(0, 3, 5, 2, 0.7)?;
    let pi = PolicyTable::uniform(3, 5);
    for sig in [Signal::Reward, Signal::Cost(0), Signal::Cost(1)] {
        let e = evaluate_exact(&m, &pi, sig)?;
        let dense = oracle::values(&m.dynamics, &pi, m.signal(sig)?)?;
        println!("{sig:?}: J = {:.6}, V = {:?}", e.objective, e.values);
        println!("  dense elimination V = {dense:?}");
    }
    let occ = occupancy_exact(&m, &pi)?;
    println!("d(s) = {:?}", occ.state_dist);
    println!("series d(s) = {:?}", oracle::occupancy_series(&m.dynamics, &pi, 1e-14));
    println!("thresholds = {:?}", m.thresholds);
    Ok(())
}
