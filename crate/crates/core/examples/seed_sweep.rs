//! Sweep a short random-CMDP configuration over three seeds and print the
//! summary table.

use fedcrl::io::{defaults_for, resolve_config};
use fedcrl::runner::cmd_sweep;

fn main() -> fedcrl::Result<()> {
    let cfg = resolve_config(
        defaults_for("random-mdp")?,
        &["mode=fednpg".into(), "federation.total_steps=2000".into()],
    )?;
    let out = std::env::temp_dir().join("fedcrl-sweep-example");
    cmd_sweep(&cfg, &[0, 1, 2], &out)?;
    let summary = out.join("summary.csv");
    print!("{}", std::fs::read_to_string(&summary).map_err(|e| fedcrl::Error::io(&summary, e))?);
    Ok(())
}
