//! Benchmark MDP constructors: the three-state hard family, seeded random
//! MDPs, reward-at-the-end chains, and the episodic-to-discounted lift.

use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::{Seed, TabularMdp};
use crate::planner::Policy;

/// The three-state, two-action family on which batched-update learners get
/// stuck: states `{a,b,c} -> {0,1,2}`, actions `{x,y} -> {0,1}`. Action x
/// from a always reaches b; action y reaches the zero-reward trap c with
/// probability `10 epsilon`.
pub fn hard_instance(epsilon: f64, gamma: f64) -> Result<TabularMdp> {
    if !(epsilon > 0.0 && epsilon < 0.1) {
        return Err(Error::InvalidParameter(format!("epsilon {epsilon} outside (0, 1/10)")));
    }
    if !(gamma > 0.5 && gamma < 1.0) {
        return Err(Error::InvalidParameter(format!("gamma {gamma} outside (1/2, 1)")));
    }
    let p = 10.0 * epsilon;
    let mut transition = vec![0.0; 3 * 2 * 3];
    let mut set = |s: usize, a: usize, sp: usize, v: f64| {
        transition[(s * 2 + a) * 3 + sp] = v;
    };
    set(0, 0, 1, 1.0); // (a,x) -> b
    set(0, 1, 1, 1.0 - p); // (a,y) -> b
    set(0, 1, 2, p); // (a,y) -> c
    for a in 0..2 {
        set(1, a, 0, 1.0); // b -> a
        set(2, a, 0, 1.0); // c -> a
    }
    let reward = vec![1.0, 1.0, 1.0, 1.0, 0.0, 0.0];
    Ok(TabularMdp { num_states: 3, num_actions: 2, discount: gamma, start_state: 0, reward, transition })
}

/// Seeded random MDP: every `(s,a)` row is supported on `branching` distinct
/// states with Dirichlet(1,...,1) weights; rewards uniform in `[0,1]`.
pub fn random_mdp(
    num_states: usize,
    num_actions: usize,
    gamma: f64,
    branching: usize,
    seed: Seed,
) -> Result<TabularMdp> {
    if branching == 0 || branching > num_states {
        return Err(Error::InvalidParameter(format!(
            "branching {branching} outside 1..={num_states}"
        )));
    }
    if !(0.0..1.0).contains(&gamma) {
        return Err(Error::InvalidParameter(format!("gamma {gamma} outside [0,1)")));
    }
    let mut rng = seed.child("random_mdp").rng();
    let mut transition = vec![0.0; num_states * num_actions * num_states];
    let mut reward = vec![0.0; num_states * num_actions];
    for s in 0..num_states {
        for a in 0..num_actions {
            let support = sample(&mut rng, num_states, branching);
            // Dirichlet(1,..,1) via normalized Exp(1) draws
            let mut weights: Vec<f64> =
                (0..branching).map(|_| -rng.random::<f64>().max(1e-300).ln()).collect();
            let total: f64 = weights.iter().sum();
            for w in weights.iter_mut() {
                *w /= total;
            }
            let base = (s * num_actions + a) * num_states;
            for (idx, sp) in support.into_iter().enumerate() {
                transition[base + sp] = weights[idx];
            }
            // renormalize so the row sums to 1 exactly within tolerance
            let row_sum: f64 = transition[base..base + num_states].iter().sum();
            for v in transition[base..base + num_states].iter_mut() {
                *v /= row_sum;
            }
            reward[s * num_actions + a] = rng.random();
        }
    }
    Ok(TabularMdp { num_states, num_actions, discount: gamma, start_state: 0, reward, transition })
}

/// Chain of `n` states: action 0 steps right (self-loop with reward 1 at the
/// far end), action 1 resets to state 0. Every other reward is zero.
pub fn chain_mdp(n: usize, gamma: f64) -> Result<TabularMdp> {
    if n < 2 {
        return Err(Error::InvalidParameter(format!("chain needs n >= 2, got {n}")));
    }
    if !(0.0..1.0).contains(&gamma) {
        return Err(Error::InvalidParameter(format!("gamma {gamma} outside [0,1)")));
    }
    let mut transition = vec![0.0; n * 2 * n];
    let mut reward = vec![0.0; n * 2];
    for s in 0..n {
        let right = if s + 1 < n { s + 1 } else { s };
        transition[(s * 2) * n + right] = 1.0;
        transition[(s * 2 + 1) * n] = 1.0;
    }
    reward[(n - 1) * 2] = 1.0;
    Ok(TabularMdp { num_states: n, num_actions: 2, discount: gamma, start_state: 0, reward, transition })
}

/// A finite-horizon episodic MDP with step-indexed dynamics.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FiniteHorizonMdp {
    pub num_states: usize,
    pub num_actions: usize,
    pub horizon: usize,
    /// Row-major `H x S x A`.
    pub reward: Vec<f64>,
    /// Row-major `H x S x A x S`.
    pub transition: Vec<f64>,
    pub start_state: usize,
}

impl FiniteHorizonMdp {
    #[inline]
    pub fn reward_at(&self, h: usize, s: usize, a: usize) -> f64 {
        self.reward[(h * self.num_states + s) * self.num_actions + a]
    }

    #[inline]
    pub fn transition_row(&self, h: usize, s: usize, a: usize) -> &[f64] {
        let base = ((h * self.num_states + s) * self.num_actions + a) * self.num_states;
        &self.transition[base..base + self.num_states]
    }
}

/// Seeded random episodic MDP with full-support Dirichlet rows.
pub fn random_finite_horizon(
    num_states: usize,
    num_actions: usize,
    horizon: usize,
    seed: Seed,
) -> Result<FiniteHorizonMdp> {
    if horizon < 2 {
        return Err(Error::InvalidParameter("horizon must be >= 2".into()));
    }
    let mut rng = seed.child("random_fh").rng();
    let n = horizon * num_states * num_actions;
    let mut reward = vec![0.0; n];
    let mut transition = vec![0.0; n * num_states];
    for i in 0..n {
        reward[i] = rng.random();
        let mut weights: Vec<f64> =
            (0..num_states).map(|_| -rng.random::<f64>().max(1e-300).ln()).collect();
        let total: f64 = weights.iter().sum();
        for (sp, w) in weights.iter_mut().enumerate() {
            *w /= total;
            transition[i * num_states + sp] = *w;
        }
    }
    Ok(FiniteHorizonMdp { num_states, num_actions, horizon, reward, transition, start_state: 0 })
}

/// Embed an `H`-step episodic MDP into a discounted one with
/// `gamma = 1 - 1/H`. Lifted state `(h, s)` gets index `(h-1)*S + s`
/// (layer-major); step-`h` rewards are scaled by `gamma^(H-h+1)`, the last
/// layer's reward is zeroed, and the last layer resets deterministically to
/// the start state in layer 1.
pub fn lift_finite_horizon(fh: &FiniteHorizonMdp) -> Result<TabularMdp> {
    let (s_n, a_n, h_n) = (fh.num_states, fh.num_actions, fh.horizon);
    let gamma = 1.0 - 1.0 / h_n as f64;
    let ns = s_n * h_n;
    let mut transition = vec![0.0; ns * a_n * ns];
    let mut reward = vec![0.0; ns * a_n];
    for h in 0..h_n {
        for s in 0..s_n {
            let bar_s = h * s_n + s;
            for a in 0..a_n {
                let base = (bar_s * a_n + a) * ns;
                if h + 1 < h_n {
                    reward[bar_s * a_n + a] =
                        gamma.powi((h_n - h) as i32) * fh.reward_at(h, s, a);
                    let row = fh.transition_row(h, s, a);
                    for sp in 0..s_n {
                        transition[base + (h + 1) * s_n + sp] = row[sp];
                    }
                } else {
                    // terminal layer: reward zeroed, deterministic reset
                    transition[base + fh.start_state] = 1.0;
                }
            }
        }
    }
    let lifted = TabularMdp {
        num_states: ns,
        num_actions: a_n,
        discount: gamma,
        start_state: fh.start_state,
        reward,
        transition,
    };
    let report = lifted.validate();
    if !report.is_valid() {
        return Err(Error::InvalidMdp(format!("lift produced invalid MDP: {report:?}")));
    }
    Ok(lifted)
}

/// Project a stationary policy on the lifted MDP back to a per-step policy
/// table, row-major `H x S`.
pub fn project_policy(bar_policy: &Policy, num_states: usize, horizon: usize) -> Result<Vec<usize>> {
    if bar_policy.action.len() != num_states * horizon {
        return Err(Error::DimensionMismatch(format!(
            "policy has {} entries, expected {}",
            bar_policy.action.len(),
            num_states * horizon
        )));
    }
    Ok(bar_policy.action.clone())
}
