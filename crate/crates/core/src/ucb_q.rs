//! Online Q-learning with a UCB exploration bonus for discounted MDPs.
//!
//! The learner keeps two tables: `q` is the running optimistic estimate and
//! `q_hat` its historical minimum; actions are greedy on `q_hat`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::planner::{argmax_row, greedy_from_table, Policy};
use crate::schedule::{alpha, bonus, DerivedParams};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct UcbQState {
    pub num_states: usize,
    pub num_actions: usize,
    /// Running estimate `Q`, row-major `S x A`.
    pub q: Vec<f64>,
    /// Historical minimum `Q-hat`, row-major `S x A`.
    pub q_hat: Vec<f64>,
    /// Visit counts `N(s,a)`.
    pub visits: Vec<u64>,
    pub params: DerivedParams,
    /// Test hook: replace the derived rate horizon H. Off by default.
    pub h_override: Option<f64>,
    /// Test hook: force `b_k = 0`, recovering plain Q-learning with
    /// optimistic initialization. Off by default.
    pub zero_bonus: bool,
}

impl UcbQState {
    /// All `q` and `q_hat` entries start at `1/(1-gamma)`, visits at zero.
    pub fn init(num_states: usize, num_actions: usize, params: DerivedParams) -> Result<UcbQState> {
        if num_states == 0 || num_actions == 0 {
            return Err(Error::InvalidParameter("state/action counts must be >= 1".into()));
        }
        let vmax = 1.0 / (1.0 - params.gamma);
        Ok(UcbQState {
            num_states,
            num_actions,
            q: vec![vmax; num_states * num_actions],
            q_hat: vec![vmax; num_states * num_actions],
            visits: vec![0; num_states * num_actions],
            params,
            h_override: None,
            zero_bonus: false,
        })
    }

    fn h(&self) -> f64 {
        self.h_override.unwrap_or(self.params.h_rate)
    }

    #[inline]
    fn idx(&self, s: usize, a: usize) -> usize {
        s * self.num_actions + a
    }

    fn check_state(&self, s: usize) -> Result<()> {
        if s >= self.num_states {
            return Err(Error::StateOutOfRange { state: s, num_states: self.num_states });
        }
        Ok(())
    }

    /// Greedy action on `q_hat`, ties broken by lowest action index.
    pub fn select_action(&self, s: usize) -> Result<usize> {
        self.check_state(s)?;
        let row = &self.q_hat[s * self.num_actions..(s + 1) * self.num_actions];
        Ok(argmax_row(row))
    }

    /// Apply one transition `(s, a, r, s_next)`.
    ///
    /// `V-hat(s_next)` is read from `q_hat` before any mutation, which also
    /// pins down the self-loop case `s == s_next`.
    pub fn observe(&mut self, s: usize, a: usize, r: f64, s_next: usize) -> Result<()> {
        self.check_state(s)?;
        self.check_state(s_next)?;
        if a >= self.num_actions {
            return Err(Error::ActionOutOfRange { action: a, num_actions: self.num_actions });
        }
        let v_next = {
            let row = &self.q_hat[s_next * self.num_actions..(s_next + 1) * self.num_actions];
            row.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
        };
        let i = self.idx(s, a);
        self.visits[i] += 1;
        let k = self.visits[i];
        let h = self.h();
        let b = if self.zero_bonus {
            0.0
        } else {
            bonus(k, h, self.num_states, self.num_actions, self.params.delta, self.params.gamma)?
        };
        let a_k = alpha(k, h)?;
        self.q[i] =
            (1.0 - a_k) * self.q[i] + a_k * (r + b + self.params.gamma * v_next);
        if self.q[i] < self.q_hat[i] {
            self.q_hat[i] = self.q[i];
        }
        Ok(())
    }

    /// Freeze the current greedy rule into a stationary policy.
    pub fn greedy_policy(&self) -> Policy {
        greedy_from_table(&self.q_hat, self.num_actions)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env_zoo::random_mdp;
    use crate::mdp::Seed;
    use crate::planner::value_iteration;
    use crate::schedule::derive_params;

    fn params(gamma: f64, delta: f64) -> DerivedParams {
        let mut p = derive_params(0.1, gamma, delta).unwrap();
        p.delta = delta;
        p
    }

    #[test]
    fn init_values() {
        let st = UcbQState::init(3, 2, params(0.5, 0.1)).unwrap();
        assert!(st.q.iter().all(|&x| x == 2.0));
        assert!(st.q_hat.iter().all(|&x| x == 2.0));
        assert!(st.visits.iter().all(|&n| n == 0));
        let st = UcbQState::init(2, 2, params(0.9, 0.1)).unwrap();
        assert!(st.q.iter().all(|&x| (x - 10.0).abs() < 1e-12));
    }

    #[test]
    fn select_action_tie_break_and_argmax() {
        let mut st = UcbQState::init(2, 2, params(0.9, 0.1)).unwrap();
        assert_eq!(st.select_action(0).unwrap(), 0);
        st.q_hat[0] = 1.0;
        st.q_hat[1] = 3.0;
        assert_eq!(st.select_action(0).unwrap(), 1);
        // strict comparison, no tolerance
        st.q_hat[2] = 3.0;
        st.q_hat[3] = 3.0 - 1e-15;
        assert_eq!(st.select_action(1).unwrap(), 0);
        assert!(st.select_action(2).is_err());
    }

    #[test]
    fn first_observe_hand_computed() {
        // S=A=1, gamma=0.5, delta=0.1, H forced to 2
        let mut p = params(0.51, 0.1);
        p.gamma = 0.5;
        let mut st = UcbQState::init(1, 1, p).unwrap();
        st.h_override = Some(2.0);
        st.observe(0, 0, 1.0, 0).unwrap();
        let iota1 = 60.0f64.ln();
        let b1 = 4.0 * 2.0f64.sqrt() / 0.5 * (2.0 * iota1).sqrt();
        assert!((b1 - 32.375).abs() < 1e-2);
        assert!((st.q[0] - (1.0 + b1 + 0.5 * 2.0)).abs() < 1e-9);
        assert!((st.q_hat[0] - 2.0).abs() < 1e-12, "clamp must bind");
        assert_eq!(st.visits[0], 1);
    }

    #[test]
    fn zero_bonus_hook_recovers_bellman_backup() {
        let mut p = params(0.51, 0.1);
        p.gamma = 0.6;
        let mut st = UcbQState::init(2, 1, p).unwrap();
        st.zero_bonus = true;
        st.h_override = Some(1e12); // alpha_1 = 1 regardless; k=1 path
        st.observe(0, 0, 0.25, 1).unwrap();
        let vmax = 1.0 / (1.0 - 0.6);
        assert!((st.q[0] - (0.25 + 0.6 * vmax)).abs() < 1e-9);
    }

    #[test]
    fn visits_strictly_increase() {
        let mut st = UcbQState::init(1, 1, params(0.9, 0.1)).unwrap();
        for k in 1..=10u64 {
            st.observe(0, 0, 0.5, 0).unwrap();
            assert_eq!(st.visits[0], k);
        }
    }

    #[test]
    fn q_hat_monotone_and_dominated_by_q() {
        let mdp = random_mdp(5, 2, 0.9, 3, Seed::new(11)).unwrap();
        let p = params(0.9, 0.1);
        let mut st = UcbQState::init(5, 2, p).unwrap();
        st.h_override = Some(2.0);
        st.zero_bonus = true; // forces movement so the clamp is exercised
        let mut rng = Seed::new(11).child("traj").rng();
        let mut s = mdp.start_state;
        let mut prev_q_hat = st.q_hat.clone();
        for _ in 0..20_000 {
            let a = st.select_action(s).unwrap();
            let (next, r) = mdp.sample_transition(s, a, &mut rng).unwrap();
            let before = st.q.clone();
            let before_hat = st.q_hat.clone();
            st.observe(s, a, r, next).unwrap();
            // update locality: exactly one q cell, at most one q_hat cell
            let changed_q: Vec<_> =
                (0..10).filter(|&i| st.q[i] != before[i]).collect();
            let changed_hat: Vec<_> =
                (0..10).filter(|&i| st.q_hat[i] != before_hat[i]).collect();
            assert_eq!(changed_q.len(), 1);
            assert!(changed_hat.len() <= 1);
            for i in 0..10 {
                assert!(st.q_hat[i] <= st.q[i] + 1e-12);
                assert!(st.q_hat[i] <= prev_q_hat[i] + 1e-15);
            }
            prev_q_hat = st.q_hat.clone();
            s = next;
        }
    }

    #[test]
    fn q_hat_equals_historical_q_or_initial() {
        let mdp = random_mdp(4, 2, 0.8, 2, Seed::new(3)).unwrap();
        let mut st = UcbQState::init(4, 2, params(0.8, 0.1)).unwrap();
        st.h_override = Some(3.0);
        st.zero_bonus = true;
        let mut rng = Seed::new(3).child("hist").rng();
        let mut s = 0;
        let mut history: Vec<Vec<f64>> = vec![st.q.clone()];
        for _ in 0..5_000 {
            let a = st.select_action(s).unwrap();
            let (next, r) = mdp.sample_transition(s, a, &mut rng).unwrap();
            st.observe(s, a, r, next).unwrap();
            history.push(st.q.clone());
            s = next;
        }
        let vmax = 1.0 / (1.0 - 0.8);
        for i in 0..8 {
            let hat = st.q_hat[i];
            let seen = hat == vmax || history.iter().any(|q| q[i] == hat);
            assert!(seen, "q_hat[{i}] = {hat} never appeared in history");
        }
    }

    #[test]
    fn optimism_on_default_schedule_short_run() {
        // with the untouched schedule the bonus dominates, so q_hat >= Q*
        let mdp = random_mdp(5, 2, 0.9, 3, Seed::new(21)).unwrap();
        let vt = value_iteration(&mdp, 1e-10).unwrap();
        let mut st = UcbQState::init(5, 2, params(0.9, 0.1)).unwrap();
        let mut rng = Seed::new(21).child("opt").rng();
        let mut s = mdp.start_state;
        for _ in 0..10_000 {
            let a = st.select_action(s).unwrap();
            let (next, r) = mdp.sample_transition(s, a, &mut rng).unwrap();
            st.observe(s, a, r, next).unwrap();
            s = next;
        }
        for i in 0..10 {
            assert!(st.q_hat[i] >= vt.q[i] - 1e-9);
        }
    }

    #[test]
    fn greedy_policy_matches_select_action() {
        let mut st = UcbQState::init(3, 2, params(0.9, 0.1)).unwrap();
        assert_eq!(st.greedy_policy().action, vec![0, 0, 0]);
        for s in 0..3 {
            st.q_hat[s * 2 + 1] = 1.0; // push action 1 below action 0
        }
        let pol = st.greedy_policy();
        for s in 0..3 {
            assert_eq!(pol.action[s], st.select_action(s).unwrap());
        }
        assert_eq!(pol.action, vec![0, 0, 0]);
    }
}
