//! Exact value iteration and policy evaluation, used as ground truth when
//! auditing learners.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::TabularMdp;

/// Deterministic stationary policy: one action per state.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Policy {
    pub action: Vec<usize>,
}

impl Policy {
    pub fn check(&self, mdp: &TabularMdp) -> Result<()> {
        if self.action.len() != mdp.num_states {
            return Err(Error::DimensionMismatch(format!(
                "policy has {} entries, MDP has {} states",
                self.action.len(),
                mdp.num_states
            )));
        }
        for &a in &self.action {
            if a >= mdp.num_actions {
                return Err(Error::ActionOutOfRange { action: a, num_actions: mdp.num_actions });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ValueKind {
    Optimal,
    Policy(Policy),
}

/// Exact Q/V tables together with the final Bellman residual of the solve.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ValueTables {
    /// Row-major `S x A`.
    pub q: Vec<f64>,
    pub v: Vec<f64>,
    pub residual: f64,
    pub kind: ValueKind,
    pub iterations: usize,
}

impl ValueTables {
    #[inline]
    pub fn q_at(&self, s: usize, a: usize, num_actions: usize) -> f64 {
        self.q[s * num_actions + a]
    }
}

/// Default solver tolerance for a given discount.
pub fn default_tol(gamma: f64) -> f64 {
    1e-10 / (1.0 - gamma)
}

/// Argmax with ties broken by lowest action index, the convention used
/// everywhere in the toolkit.
#[inline]
pub fn argmax_row(row: &[f64]) -> usize {
    let mut best = 0;
    for (a, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = a;
        }
    }
    best
}

/// One application of the Bellman optimality operator: `(T q)(s,a) = r(s,a) +
/// gamma * sum_s' p(s'|s,a) max_a' q(s',a')`.
pub fn bellman_backup(mdp: &TabularMdp, q: &[f64]) -> Vec<f64> {
    let (ns, na) = (mdp.num_states, mdp.num_actions);
    let v: Vec<f64> = (0..ns)
        .map(|s| {
            let row = &q[s * na..(s + 1) * na];
            row.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
        })
        .collect();
    let mut out = vec![0.0; ns * na];
    for s in 0..ns {
        for a in 0..na {
            let exp: f64 = mdp
                .transition_row(s, a)
                .iter()
                .zip(&v)
                .map(|(&p, &vs)| p * vs)
                .sum();
            out[s * na + a] = mdp.reward_at(s, a) + mdp.discount * exp;
        }
    }
    out
}

fn check_solver_inputs(mdp: &TabularMdp, tol: f64) -> Result<()> {
    if mdp.discount >= 1.0 {
        return Err(Error::InvalidParameter(format!("discount {} >= 1", mdp.discount)));
    }
    if tol <= 0.0 {
        return Err(Error::InvalidParameter(format!("tol {tol} must be positive")));
    }
    Ok(())
}

/// Compute `Q*`, `V*` by value iteration from the zero table.
///
/// The returned tables have Bellman-optimality residual at most `tol`; the
/// iteration count is bounded by `ceil(ln(1/((1-gamma) tol)) / ln(1/gamma)) + 1`.
pub fn value_iteration(mdp: &TabularMdp, tol: f64) -> Result<ValueTables> {
    check_solver_inputs(mdp, tol)?;
    let (ns, na) = (mdp.num_states, mdp.num_actions);
    let gamma = mdp.discount;
    let mut q = vec![0.0; ns * na];
    let mut iterations = 0;
    loop {
        let next = bellman_backup(mdp, &q);
        let delta = sup_diff(&q, &next);
        q = next;
        iterations += 1;
        // residual(T q) <= gamma * ||T q - q||_inf by contraction
        if gamma * delta <= tol || gamma == 0.0 {
            break;
        }
    }
    let v: Vec<f64> = (0..ns).map(|s| q[s * na + argmax_row(&q[s * na..(s + 1) * na])]).collect();
    let residual = bellman_residual(mdp, &q)?;
    Ok(ValueTables { q, v, residual, kind: ValueKind::Optimal, iterations })
}

/// Compute `Q^pi`, `V^pi` for a stationary policy by iterating the policy
/// Bellman operator.
pub fn evaluate_policy(mdp: &TabularMdp, policy: &Policy, tol: f64) -> Result<ValueTables> {
    check_solver_inputs(mdp, tol)?;
    policy.check(mdp)?;
    let (ns, na) = (mdp.num_states, mdp.num_actions);
    let gamma = mdp.discount;
    let mut q = vec![0.0; ns * na];
    loop {
        let v: Vec<f64> = (0..ns).map(|s| q[s * na + policy.action[s]]).collect();
        let mut next = vec![0.0; ns * na];
        for s in 0..ns {
            for a in 0..na {
                let exp: f64 = mdp
                    .transition_row(s, a)
                    .iter()
                    .zip(&v)
                    .map(|(&p, &vs)| p * vs)
                    .sum();
                next[s * na + a] = mdp.reward_at(s, a) + gamma * exp;
            }
        }
        let delta = sup_diff(&q, &next);
        q = next;
        if gamma * delta <= tol || gamma == 0.0 {
            break;
        }
    }
    let v: Vec<f64> = (0..ns).map(|s| q[s * na + policy.action[s]]).collect();
    // residual of the policy Bellman equation
    let mut residual = 0.0f64;
    for s in 0..ns {
        for a in 0..na {
            let exp: f64 =
                mdp.transition_row(s, a).iter().zip(&v).map(|(&p, &vs)| p * vs).sum();
            residual = residual.max((q[s * na + a] - mdp.reward_at(s, a) - gamma * exp).abs());
        }
    }
    Ok(ValueTables { q, v, residual, kind: ValueKind::Policy(policy.clone()), iterations: 0 })
}

/// Sup-norm of `q - T q` where `T` is the Bellman optimality operator.
/// Zero iff `q = Q*`.
pub fn bellman_residual(mdp: &TabularMdp, q: &[f64]) -> Result<f64> {
    if q.len() != mdp.num_states * mdp.num_actions {
        return Err(Error::DimensionMismatch(format!(
            "q table has {} entries, expected {}",
            q.len(),
            mdp.num_states * mdp.num_actions
        )));
    }
    let backup = bellman_backup(mdp, q);
    Ok(sup_diff(q, &backup))
}

fn sup_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Greedy policy with respect to a `S x A` table.
pub fn greedy_from_table(q: &[f64], num_actions: usize) -> Policy {
    let action = q.chunks(num_actions).map(argmax_row).collect();
    Policy { action }
}
