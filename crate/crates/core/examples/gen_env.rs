//! Generate a random CMDP, save it as JSON, and load it back.

use fedcrl::cmdp::TabularCmdp;
use fedcrl::envs::random_mdp;

fn main() -> fedcrl::Result<()> {
    let m = random_mdp(4, 3, 5, 4, 0.7)?;
    let path = std::env::temp_dir().join("fedcrl-random-mdp.json");
    m.save(&path)?;
    let back = TabularCmdp::load(&path)?;
    assert_eq!(m, back);
    println!("wrote {} ({} states, {} actions, thresholds {:?})", path.display(), back.n_states(), back.n_actions(), back.thresholds);
    Ok(())
}
