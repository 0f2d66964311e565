//! Fast invariant suite behind `fedcrl selfcheck`.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::cmdp::{occupancy_exact, PolicyEvaluator, Signal, TabularCmdp};
use crate::envs::random_mdp;
use crate::error::Result;
use crate::fed::lagrangian_value;
use crate::nn::FeedforwardNet;
use crate::npg::{exact_npg_direction, sgd_compatible, CompatSgdConfig};
use crate::oracle;
use crate::policy::{aggregate_params_mean, aggregate_softmax, SoftmaxParams};
use crate::ppo::{clip_objective, clip_surrogate, critic_objective, log_prob_objective};

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct SelfcheckOptions {
    /// Perturb analytic gradients before comparing them (negative control).
    pub corrupt_gradient: bool,
}

pub const GRADIENT_TOL: f64 = 1e-4;

/// Elementwise `|a - n| / max(|a|, |n|, floor)`, maximised.
pub fn max_relative_error(analytic: &[f64], numeric: &[f64], floor: f64) -> f64 {
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n).abs() / a.abs().max(n.abs()).max(floor))
        .fold(0.0, f64::max)
}

fn random_theta(ns: usize, na: usize, scale: f64, rng: &mut ChaCha8Rng) -> SoftmaxParams {
    SoftmaxParams::from_vec(ns, na, (0..ns * na).map(|_| rng.gen_range(-scale..scale)).collect()).expect("finite")
}

fn relative(a: &[f64], b: &[f64]) -> f64 {
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let norm: f64 = b.iter().map(|y| y * y).sum::<f64>().sqrt();
    diff / norm.max(f64::MIN_POSITIVE)
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    dot / (na * nb)
}

/// Largest `|L₀ - Σ L_i|` over `draws` random `(λ, θ)`.
pub fn decomposition_gap(cmdp: &TabularCmdp, draws: usize, seed: u64) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..draws {
        let p = random_theta(cmdp.n_states(), cmdp.n_actions(), 3.0, &mut rng);
        let lambdas: Vec<f64> = (0..cmdp.n_constraints()).map(|_| rng.gen_range(0.0..10.0)).collect();
        let v = lagrangian_value(cmdp, &p, &lambdas)?;
        worst = worst.max((v.global - v.local.iter().sum::<f64>()).abs());
    }
    Ok(worst)
}

/// Worst relative error between the closed-form direction and the
/// explicit Fisher pseudoinverse over `seeds`, for a random policy per seed.
pub fn npg_oracle_error(seeds: &[u64]) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for &seed in seeds {
        let m = random_mdp(seed, 3, 5, 4, 0.7)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = random_theta(3, 5, 2.0, &mut rng);
        let exact = exact_npg_direction(&m, &p, Signal::Reward)?;
        let reference = oracle::fisher_npg_direction(&m, &p, &m.reward)?;
        worst = worst.max(relative(&exact, &reference));
    }
    Ok(worst)
}

/// Mean cosine between `sgd_compatible` with `k` samples and the exact
/// minimiser, over `seeds`, on the instance built from `instance_seed`.
pub fn sampled_npg_cosine(instance_seed: u64, k: usize, seeds: &[u64]) -> Result<f64> {
    let m = random_mdp(instance_seed, 3, 5, 4, 0.7)?;
    let mut rng = ChaCha8Rng::seed_from_u64(instance_seed);
    let p = random_theta(3, 5, 1.0, &mut rng);
    let exact = exact_npg_direction(&m, &p, Signal::Reward)?;
    let cfg = CompatSgdConfig {
        k_samples: k,
        ..CompatSgdConfig::default()
    };
    let mut total = 0.0;
    for &s in seeds {
        let mut r = ChaCha8Rng::seed_from_u64(s);
        let w = sgd_compatible(&m, &p, Signal::Reward, &cfg, &mut r)?;
        total += cosine(&w, &exact);
    }
    Ok(total / seeds.len() as f64)
}

fn numeric_gradient(params: &[f64], h: f64, mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    let mut p = params.to_vec();
    (0..p.len())
        .map(|k| {
            let orig = p[k];
            p[k] = orig + h;
            let up = f(&p);
            p[k] = orig - h;
            let down = f(&p);
            p[k] = orig;
            (up - down) / (2.0 * h)
        })
        .collect()
}

fn corrupt(g: &mut [f64], on: bool) {
    if on {
        g.iter_mut().for_each(|x| *x = *x * 1.01 + 1e-3);
    }
}

struct GradFixture {
    net: FeedforwardNet,
    critic: FeedforwardNet,
    obs: DMatrix<f64>,
    actions: Vec<usize>,
    old_log_probs: Vec<f64>,
    advantages: Vec<f64>,
    targets: Vec<f64>,
}

fn grad_fixture(seed: u64) -> Result<GradFixture> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let net = FeedforwardNet::new(&[4, 16, 16, 3], 1.0, &mut rng)?;
    let critic = FeedforwardNet::new(&[4, 16, 16, 1], 1.0, &mut rng)?;
    let batch = 24;
    let obs = DMatrix::from_fn(4, batch, |_, _| rng.gen_range(-1.0..1.0));
    let actions: Vec<usize> = (0..batch).map(|_| rng.gen_range(0..3)).collect();
    let advantages: Vec<f64> = (0..batch).map(|_| rng.gen_range(-2.0..2.0)).collect();
    let targets: Vec<f64> = (0..batch).map(|_| rng.gen_range(-3.0..3.0)).collect();
    // Old log-probs offset from the current ones so that ratios land on
    // both sides of the clip range, away from the kinks.
    let mut old_log_probs = Vec::with_capacity(batch);
    for (l, &a) in actions.iter().enumerate() {
        let x: Vec<f64> = obs.column(l).iter().copied().collect();
        let (lp, _) = log_prob_objective(&net, &x, a)?;
        let mut shift: f64 = rng.gen_range(-0.5..0.5);
        while [(0.8f64).ln(), (1.2f64).ln()].iter().any(|k| (shift - k).abs() < 0.02) {
            shift = rng.gen_range(-0.5..0.5);
        }
        old_log_probs.push(lp - shift);
    }
    Ok(GradFixture {
        net,
        critic,
        obs,
        actions,
        old_log_probs,
        advantages,
        targets,
    })
}

/// Max relative error of the clip-objective gradient against central differences.
pub fn clip_gradient_error(seed: u64, corrupt_gradient: bool) -> Result<f64> {
    let fx = grad_fixture(seed)?;
    let (_, mut g) = clip_objective(&fx.net, &fx.obs, &fx.actions, &fx.old_log_probs, &fx.advantages, 0.2)?;
    corrupt(&mut g, corrupt_gradient);
    let sizes = fx.net.sizes().to_vec();
    let num = numeric_gradient(fx.net.params(), 1e-6, |p| {
        let n = FeedforwardNet::from_params(&sizes, p.to_vec()).expect("sizes");
        clip_objective(&n, &fx.obs, &fx.actions, &fx.old_log_probs, &fx.advantages, 0.2)
            .expect("shapes")
            .0
    });
    Ok(max_relative_error(&g, &num, 1e-4))
}

pub fn critic_gradient_error(seed: u64, corrupt_gradient: bool) -> Result<f64> {
    let fx = grad_fixture(seed)?;
    let (_, mut g) = critic_objective(&fx.critic, &fx.obs, &fx.targets)?;
    corrupt(&mut g, corrupt_gradient);
    let sizes = fx.critic.sizes().to_vec();
    let num = numeric_gradient(fx.critic.params(), 1e-6, |p| {
        let n = FeedforwardNet::from_params(&sizes, p.to_vec()).expect("sizes");
        critic_objective(&n, &fx.obs, &fx.targets).expect("shapes").0
    });
    Ok(max_relative_error(&g, &num, 1e-4))
}

pub fn log_prob_gradient_error(seed: u64, corrupt_gradient: bool) -> Result<f64> {
    let fx = grad_fixture(seed)?;
    let x: Vec<f64> = fx.obs.column(0).iter().copied().collect();
    let a = fx.actions[0];
    let (_, mut g) = log_prob_objective(&fx.net, &x, a)?;
    corrupt(&mut g, corrupt_gradient);
    let sizes = fx.net.sizes().to_vec();
    let num = numeric_gradient(fx.net.params(), 1e-6, |p| {
        let n = FeedforwardNet::from_params(&sizes, p.to_vec()).expect("sizes");
        log_prob_objective(&n, &x, a).expect("shapes").0
    });
    Ok(max_relative_error(&g, &num, 1e-4))
}

/// Largest gap between the min/max clip form and the textbook
/// `min(rA, clip(r, 1-ε, 1+ε) A)` on a random grid.
pub fn clip_equivalence_gap(seed: u64, n: usize) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let r: f64 = rng.gen_range(0.0..3.0);
            let a: f64 = rng.gen_range(-5.0..5.0);
            let eps: f64 = rng.gen_range(0.01..0.99);
            let textbook = (r * a).min(r.clamp(1.0 - eps, 1.0 + eps) * a);
            (clip_surrogate(r, a, eps) - textbook).abs()
        })
        .fold(0.0, f64::max)
}

fn check(name: &'static str, passed: bool, detail: String) -> CheckResult {
    CheckResult { name, passed, detail }
}

pub fn run_selfcheck(opts: SelfcheckOptions) -> Vec<CheckResult> {
    let mut out = Vec::new();
    let mut push = |name: &'static str, r: Result<(bool, String)>| {
        out.push(match r {
            Ok((p, d)) => check(name, p, d),
            Err(e) => check(name, false, format!("error: {e}")),
        })
    };

    push(
        "evaluation matches dense elimination",
        (|| {
            let m = random_mdp(1, 3, 5, 4, 0.7)?;
            let mut rng = ChaCha8Rng::seed_from_u64(1);
            let pi = random_theta(3, 5, 2.0, &mut rng).policy();
            let v = PolicyEvaluator::new(&m.dynamics, &pi)?.evaluate(&m.reward)?.values;
            let w = oracle::values(&m.dynamics, &pi, &m.reward)?;
            let occ = occupancy_exact(&m, &pi)?.state_dist;
            let series = oracle::occupancy_series(&m.dynamics, &pi, 1e-15);
            let err = relative(&v, &w).max(relative(&occ, &series));
            Ok((err < 1e-10, format!("relative error {err:.2e}")))
        })(),
    );
    push(
        "decomposition identity",
        (|| {
            let m = random_mdp(2, 3, 5, 4, 0.7)?;
            let gap = decomposition_gap(&m, 100, 2)?;
            Ok((gap <= 1e-10, format!("max |L0 - sum L_i| = {gap:.2e}")))
        })(),
    );
    push(
        "npg direction matches fisher pseudoinverse",
        (|| {
            let err = npg_oracle_error(&(0..10).collect::<Vec<_>>())?;
            Ok((err <= 1e-6, format!("max relative error {err:.2e}")))
        })(),
    );
    push(
        "sampled npg direction",
        (|| {
            let c = sampled_npg_cosine(11, 10_000, &[0, 1, 2, 3, 4])?;
            Ok((c >= 0.9, format!("mean cosine {c:.4}")))
        })(),
    );
    for (name, f) in [
        ("policy log-prob gradient", log_prob_gradient_error as fn(u64, bool) -> Result<f64>),
        ("critic loss gradient", critic_gradient_error),
        ("clip surrogate gradient", clip_gradient_error),
    ] {
        push(
            name,
            f(3, opts.corrupt_gradient).map(|e| (e <= GRADIENT_TOL, format!("max relative error {e:.2e}"))),
        );
    }
    push(
        "clip form equivalence",
        Ok({
            let gap = clip_equivalence_gap(4, 10_000);
            (gap <= 1e-12, format!("max gap {gap:.2e}"))
        }),
    );
    push(
        "aggregation fixed points",
        (|| {
            let mut rng = ChaCha8Rng::seed_from_u64(5);
            let p = random_theta(3, 5, 2.0, &mut rng);
            let agg = aggregate_softmax(&[p.clone(), p.clone(), p.clone()])?;
            let e1 = relative(&agg.policy().probs, &p.policy().probs);
            let mean = aggregate_params_mean(&[&p.theta, &p.theta])?;
            let e2 = relative(&mean, &p.theta);
            let err = e1.max(e2);
            Ok((err < 1e-12, format!("relative error {err:.2e}")))
        })(),
    );
    out
}
