//! Windy cliff: FedNPG against each local NPG_k and the omniscient agent,
//! reported on the original reward and cost scale.

use fedcrl::io::{defaults_for, resolve_config};
use fedcrl::runner::execute;

fn main() -> fedcrl::Result<()> {
    let steps = std::env::args().nth(1).unwrap_or_else(|| "20000".into());
    for mode in ["fednpg", "local:0", "local:1", "local:2", "omniscient"] {
        let cfg = resolve_config(
            defaults_for("windy-cliff")?,
            &[format!("mode={mode}"), format!("federation.total_steps={steps}")],
        )?;
        let r = execute(&cfg)?;
        let raw = r.raw.expect("windy cliff reports raw values");
        println!("{mode:<11} J_r {:>8.3}  J_c {:.3?}  d {:?}", raw.j_r, raw.j_c, raw.thresholds);
    }
    Ok(())
}
