//! Closed-form NPG direction against the Fisher pseudoinverse, and the
//! sample-based direction as the number of SGD samples grows.

use fedcrl::cmdp::Signal;
use fedcrl::envs::{random_mdp, RandomMdpParams, random_mdp_with};
use fedcrl::npg::{exact_npg_direction, sgd_compatible, CompatSgdConfig};
use fedcrl::oracle;
use fedcrl::policy::SoftmaxParams;
use fedcrl::selfcheck::cosine;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> fedcrl::Result<()> {
    let m = random_mdp(3, 3, 5, 1, 0.7)?;
    let p = SoftmaxParams::zeros(3, 5);
    let ours = exact_npg_direction(&m, &p, Signal::Reward)?;
    let fisher = oracle::fisher_npg_direction(&m, &p, &m.reward)?;
    let diff: f64 = ours.iter().zip(&fisher).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    println!("closed form vs Fisher pseudoinverse: max abs diff {diff:.2e}");

    println!("discount  K       mean cosine (5 seeds)");
    for discount in [0.5, 0.9] {
        let m = random_mdp_with(
            0,
            &RandomMdpParams {
                n_constraints: 1,
                discount,
                ..RandomMdpParams::default()
            },
        )?;
        let exact = exact_npg_direction(&m, &p, Signal::Reward)?;
        for k in [100, 1_000, 10_000, 100_000] {
            let cfg = CompatSgdConfig { k_samples: k, ..CompatSgdConfig::default() };
            let mean = (0..5u64)
                .map(|s| {
                    let mut rng = ChaCha8Rng::seed_from_u64(s);
                    sgd_compatible(&m, &p, Signal::Reward, &cfg, &mut rng).map(|w| cosine(&w, &exact))
                })
                .sum::<fedcrl::Result<f64>>()?
                / 5.0;
            println!("{discount:<9} {k:<7} {mean:.4}");
        }
    }
    Ok(())
}
