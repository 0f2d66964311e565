//! Reference computations built from different numerical routes than the
//! main code paths. Checks and tests compare the two.
//!
//! - dense Gaussian elimination for `V` (instead of LU with refinement);
//! - truncated power series for the occupancy measure;
//! - explicit Fisher matrix and SVD pseudoinverse for the natural gradient;
//! - value iteration for the unconstrained optimum;
//! - least squares for the compatible regression problem.

use nalgebra::{DMatrix, DVector};

use crate::cmdp::{Dynamics, PolicyTable, TabularCmdp};
use crate::error::{Error, Result};
use crate::policy::SoftmaxParams;

/// Solve `A x = b` by Gaussian elimination with partial pivoting.
pub fn gauss_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Result<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .expect("non-empty range");
        if a[pivot][col].abs() < 1e-300 {
            return Err(Error::Solver {
                residual: f64::INFINITY,
                tolerance: 0.0,
            });
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            if f != 0.0 {
                for k in col..n {
                    a[row][k] -= f * a[col][k];
                }
                b[row] -= f * b[col];
            }
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let s: f64 = (row + 1..n).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - s) / a[row][row];
    }
    Ok(x)
}

fn policy_matrix(d: &Dynamics, pi: &PolicyTable) -> Vec<Vec<f64>> {
    let (ns, na) = (d.n_states, d.n_actions);
    let mut p = vec![vec![0.0; ns]; ns];
    for (s, row) in p.iter_mut().enumerate() {
        for a in 0..na {
            let w = pi.row(s)[a];
            for (s2, q) in d.next_state_probs(s, a).iter().enumerate() {
                row[s2] += w * q;
            }
        }
    }
    p
}

/// `V^π` by dense elimination on `(I - γ P_π) V = r_π`.
pub fn values(d: &Dynamics, pi: &PolicyTable, table: &[f64]) -> Result<Vec<f64>> {
    let (ns, na) = (d.n_states, d.n_actions);
    let p = policy_matrix(d, pi);
    let a: Vec<Vec<f64>> = (0..ns)
        .map(|s| (0..ns).map(|s2| (s == s2) as u8 as f64 - d.discount * p[s][s2]).collect())
        .collect();
    let b: Vec<f64> = (0..ns).map(|s| (0..na).map(|a| pi.row(s)[a] * table[s * na + a]).sum()).collect();
    gauss_solve(a, b)
}

/// `Q^π(s, a) = r(s, a) + γ Σ P(s'|s,a) V(s')`.
pub fn q_values(d: &Dynamics, pi: &PolicyTable, table: &[f64]) -> Result<Vec<f64>> {
    let v = values(d, pi, table)?;
    let (ns, na) = (d.n_states, d.n_actions);
    let mut q = vec![0.0; ns * na];
    for s in 0..ns {
        for a in 0..na {
            let next: f64 = d.next_state_probs(s, a).iter().zip(&v).map(|(p, v)| p * v).sum();
            q[s * na + a] = table[s * na + a] + d.discount * next;
        }
    }
    Ok(q)
}

/// `d_ρ(s) = (1-γ) Σ_t γ^t Pr(s_t = s)`, summed until `γ^t < tol`.
pub fn occupancy_series(d: &Dynamics, pi: &PolicyTable, tol: f64) -> Vec<f64> {
    let p = policy_matrix(d, pi);
    let ns = d.n_states;
    let mut dist = d.initial_dist.clone();
    let mut out = vec![0.0; ns];
    let mut weight = 1.0 - d.discount;
    while weight > tol * (1.0 - d.discount) {
        for (o, x) in out.iter_mut().zip(&dist) {
            *o += weight * x;
        }
        let mut next = vec![0.0; ns];
        for (s, x) in dist.iter().enumerate() {
            for (s2, q) in p[s].iter().enumerate() {
                next[s2] += x * q;
            }
        }
        dist = next;
        weight *= d.discount;
    }
    out
}

fn dense_score(pi: &PolicyTable, s: usize, a: usize) -> DVector<f64> {
    let na = pi.n_actions;
    let mut g = DVector::zeros(pi.n_states * na);
    for b in 0..na {
        g[s * na + b] = (a == b) as u8 as f64 - pi.row(s)[b];
    }
    g
}

/// Natural gradient assembled term by term:
/// `F = E_{s~d_ρ, a~π} ∇log π ∇log πᵀ`,
/// `∇J = (1-γ)⁻¹ E_{s~d_ρ, a~π} Q(s,a) ∇log π`, direction `F†∇J`.
pub fn fisher_npg_direction(cmdp: &TabularCmdp, params: &SoftmaxParams, table: &[f64]) -> Result<Vec<f64>> {
    let pi = params.policy();
    let d = &cmdp.dynamics;
    let (ns, na) = (d.n_states, d.n_actions);
    let occ = occupancy_series(d, &pi, 1e-16);
    let q = q_values(d, &pi, table)?;
    let dim = ns * na;
    let mut fisher = DMatrix::zeros(dim, dim);
    let mut grad = DVector::zeros(dim);
    for s in 0..ns {
        for a in 0..na {
            let w = occ[s] * pi.row(s)[a];
            let g = dense_score(&pi, s, a);
            fisher += w * &g * g.transpose();
            grad += (w * q[s * na + a] / (1.0 - d.discount)) * &g;
        }
    }
    let pinv = fisher
        .pseudo_inverse(1e-12)
        .map_err(|e| Error::invalid("fisher", e.to_string()))?;
    Ok((pinv * grad).iter().copied().collect())
}

/// Policy gradient by central differences of `J(θ)`.
pub fn finite_difference_gradient(cmdp: &TabularCmdp, params: &SoftmaxParams, table: &[f64], h: f64) -> Result<Vec<f64>> {
    let objective = |theta: Vec<f64>| -> Result<f64> {
        let p = SoftmaxParams::from_vec(params.n_states, params.n_actions, theta)?;
        let v = values(&cmdp.dynamics, &p.policy(), table)?;
        Ok(v.iter().zip(&cmdp.dynamics.initial_dist).map(|(v, r)| v * r).sum())
    };
    (0..params.theta.len())
        .map(|k| {
            let mut up = params.theta.clone();
            let mut down = params.theta.clone();
            up[k] += h;
            down[k] -= h;
            Ok((objective(up)? - objective(down)?) / (2.0 * h))
        })
        .collect()
}

/// `max_π ρᵀ V^π` by value iteration to sup-norm tolerance `tol`.
pub fn optimal_value(d: &Dynamics, table: &[f64], tol: f64) -> f64 {
    let (ns, na) = (d.n_states, d.n_actions);
    let mut v = vec![0.0; ns];
    loop {
        let next: Vec<f64> = (0..ns)
            .map(|s| {
                (0..na)
                    .map(|a| {
                        let cont: f64 = d.next_state_probs(s, a).iter().zip(&v).map(|(p, v)| p * v).sum();
                        table[s * na + a] + d.discount * cont
                    })
                    .fold(f64::NEG_INFINITY, f64::max)
            })
            .collect();
        let delta = next.iter().zip(&v).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        v = next;
        if delta * d.discount / (1.0 - d.discount) < tol {
            break;
        }
    }
    v.iter().zip(&d.initial_dist).map(|(v, r)| v * r).sum()
}

/// Minimum of the compatible regression loss by weighted least squares.
/// Returns `(w, loss)`.
pub fn compat_least_squares(cmdp: &TabularCmdp, params: &SoftmaxParams, table: &[f64]) -> Result<(Vec<f64>, f64)> {
    let pi = params.policy();
    let d = &cmdp.dynamics;
    let (ns, na) = (d.n_states, d.n_actions);
    let occ = occupancy_series(d, &pi, 1e-16);
    let q = q_values(d, &pi, table)?;
    let v = values(d, &pi, table)?;
    let dim = ns * na;
    let mut x = DMatrix::zeros(dim, dim);
    let mut y = DVector::zeros(dim);
    for s in 0..ns {
        for a in 0..na {
            let k = s * na + a;
            let w = (occ[s] * pi.row(s)[a]).sqrt();
            x.set_row(k, &(w * dense_score(&pi, s, a)).transpose());
            y[k] = w * (q[k] - v[s]);
        }
    }
    let pinv = x.clone().pseudo_inverse(1e-12).map_err(|e| Error::invalid("design", e.to_string()))?;
    let sol = pinv * &y;
    let loss = (&x * &sol - &y).norm_squared();
    Ok((sol.iter().copied().collect(), loss))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::random_mdp;

    #[test]
    fn gauss_small_system() {
        let x = gauss_solve(vec![vec![0.0, 2.0], vec![1.0, 1.0]], vec![4.0, 3.0]).unwrap();
        assert!((x[0] - 1.0).abs() < 1e-15 && (x[1] - 2.0).abs() < 1e-15);
    }

    #[test]
    fn series_is_a_distribution() {
        let m = random_mdp(5, 3, 5, 4, 0.7).unwrap();
        let d = occupancy_series(&m.dynamics, &PolicyTable::uniform(3, 5), 1e-14);
        assert!((d.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn policy_gradient_theorem_matches_differences() {
        let m = random_mdp(8, 3, 5, 4, 0.7).unwrap();
        let p = SoftmaxParams::from_vec(3, 5, (0..15).map(|k| (k as f64 * 0.37).sin()).collect()).unwrap();
        let fd = finite_difference_gradient(&m, &p, &m.reward, 1e-5).unwrap();
        // F·(F†∇J) = ∇J since ∇J lies in the range of F
        let pi = p.policy();
        let occ = occupancy_series(&m.dynamics, &pi, 1e-16);
        let q = q_values(&m.dynamics, &pi, &m.reward).unwrap();
        for s in 0..3 {
            for a in 0..5 {
                let mut g = 0.0;
                for b in 0..5 {
                    let score = (a == b) as u8 as f64 - pi.row(s)[a];
                    g += occ[s] * pi.row(s)[b] * q[s * 5 + b] * score / (1.0 - m.discount());
                }
                assert!((g - fd[s * 5 + a]).abs() < 1e-7, "{g} vs {}", fd[s * 5 + a]);
            }
        }
    }

    #[test]
    fn value_iteration_dominates_uniform() {
        let m = random_mdp(9, 3, 5, 4, 0.7).unwrap();
        let v = values(&m.dynamics, &PolicyTable::uniform(3, 5), &m.reward).unwrap();
        let uniform: f64 = v.iter().zip(&m.dynamics.initial_dist).map(|(v, r)| v * r).sum();
        assert!(optimal_value(&m.dynamics, &m.reward, 1e-12) >= uniform);
    }
}
