//! Delayed Q-learning baseline.
//!
//! Updates are batched: a state-action pair gathers `m` targets, then attempts
//! a single update that must decrease `q_hat` by a margin to succeed. The
//! learn flags implement the standard blocking rule: a pair that attempts and
//! fails stops gathering until some successful update happens anywhere.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::planner::{greedy_from_table, Policy};

/// Outcome of one `observe` call.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UpdateEvent {
    None,
    Attempted,
    Successful,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DelayedQState {
    pub num_states: usize,
    pub num_actions: usize,
    /// Maintained value estimate, row-major `S x A`, nonincreasing per cell.
    pub q_hat: Vec<f64>,
    /// Running sum of batched targets per cell.
    pub accum: Vec<f64>,
    /// Samples gathered toward the next attempted update per cell.
    pub count: Vec<u64>,
    pub learn_flag: Vec<bool>,
    /// Timestep of the most recent attempted update per cell (0 = never).
    pub last_attempt: Vec<u64>,
    /// Timestep of the most recent successful update anywhere (0 = never).
    pub last_success: u64,
    /// Timestep of the first successful update per cell, if any.
    pub first_success: Vec<Option<u64>>,
    /// Samples per attempted update. `None` means "never update" (the
    /// infinite-m limit).
    pub m: Option<u64>,
    pub eps1: f64,
    pub gamma: f64,
    pub delta: f64,
    /// Global timestep counter, incremented by each observe.
    pub t: u64,
    /// Action preference order used for tie-breaking; `tie_break[0]` wins
    /// all-equal rows.
    pub tie_break: Vec<usize>,
}

impl DelayedQState {
    /// Initialize with the standard parameter prescription:
    /// `eps1 = epsilon (1-gamma) / 9` and
    /// `m = ceil(ln(3SA(1 + SA/(delta eps1 (1-gamma))) / delta) / (2 eps1^2 (1-gamma)^2))`,
    /// unless overridden.
    pub fn init(
        num_states: usize,
        num_actions: usize,
        gamma: f64,
        epsilon: f64,
        delta: f64,
        m_override: Option<u64>,
    ) -> Result<DelayedQState> {
        if !(gamma > 0.0 && gamma < 1.0) {
            return Err(Error::InvalidParameter(format!("gamma {gamma} outside (0,1)")));
        }
        if !(epsilon > 0.0) {
            return Err(Error::InvalidParameter(format!("epsilon {epsilon} must be positive")));
        }
        let eps1 = epsilon * (1.0 - gamma) / 9.0;
        let sa = (num_states * num_actions) as f64;
        let m = match m_override {
            Some(m) => m,
            None => {
                let inner = 3.0 * sa * (1.0 + sa / (delta * eps1 * (1.0 - gamma))) / delta;
                (inner.ln() / (2.0 * eps1 * eps1 * (1.0 - gamma) * (1.0 - gamma))).ceil() as u64
            }
        };
        let n = num_states * num_actions;
        Ok(DelayedQState {
            num_states,
            num_actions,
            q_hat: vec![1.0 / (1.0 - gamma); n],
            accum: vec![0.0; n],
            count: vec![0; n],
            learn_flag: vec![true; n],
            last_attempt: vec![0; n],
            last_success: 0,
            first_success: vec![None; n],
            m: Some(m),
            eps1,
            gamma,
            delta,
            t: 0,
            tie_break: (0..num_actions).collect(),
        })
    }

    /// Replace the tie-break order (a permutation of actions).
    pub fn with_tie_break(mut self, order: Vec<usize>) -> Result<DelayedQState> {
        let mut seen = vec![false; self.num_actions];
        if order.len() != self.num_actions {
            return Err(Error::InvalidParameter("tie-break order must be a permutation".into()));
        }
        for &a in &order {
            if a >= self.num_actions || seen[a] {
                return Err(Error::InvalidParameter("tie-break order must be a permutation".into()));
            }
            seen[a] = true;
        }
        self.tie_break = order;
        Ok(self)
    }

    /// Disable updates entirely (the `m = infinity` limit).
    pub fn never_update(mut self) -> DelayedQState {
        self.m = None;
        self
    }

    pub fn override_eps1(mut self, eps1: f64) -> DelayedQState {
        self.eps1 = eps1;
        self
    }

    fn check_state(&self, s: usize) -> Result<()> {
        if s >= self.num_states {
            return Err(Error::StateOutOfRange { state: s, num_states: self.num_states });
        }
        Ok(())
    }

    /// Greedy on `q_hat` under the configured tie-break order: the first
    /// action in the order whose value is within nothing of the max — ties
    /// are exact, comparison is strict.
    pub fn select_action(&self, s: usize) -> Result<usize> {
        self.check_state(s)?;
        let row = &self.q_hat[s * self.num_actions..(s + 1) * self.num_actions];
        let mut best = self.tie_break[0];
        for &a in &self.tie_break[1..] {
            if row[a] > row[best] {
                best = a;
            }
        }
        Ok(best)
    }

    /// Process one transition; returns which update event occurred.
    pub fn observe(&mut self, s: usize, a: usize, r: f64, s_next: usize) -> Result<UpdateEvent> {
        self.check_state(s)?;
        self.check_state(s_next)?;
        if a >= self.num_actions {
            return Err(Error::ActionOutOfRange { action: a, num_actions: self.num_actions });
        }
        self.t += 1;
        let i = s * self.num_actions + a;
        // re-enable a blocked pair once a successful update happened after
        // its last attempt
        if !self.learn_flag[i] && self.last_attempt[i] < self.last_success {
            self.learn_flag[i] = true;
        }
        let Some(m) = self.m else {
            return Ok(UpdateEvent::None);
        };
        if !self.learn_flag[i] {
            return Ok(UpdateEvent::None);
        }
        let v_next = {
            let row = &self.q_hat[s_next * self.num_actions..(s_next + 1) * self.num_actions];
            row.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
        };
        self.accum[i] += r + self.gamma * v_next;
        self.count[i] += 1;
        if self.count[i] < m {
            return Ok(UpdateEvent::None);
        }
        // attempted update
        let target = self.accum[i] / m as f64 + self.eps1;
        self.accum[i] = 0.0;
        self.count[i] = 0;
        let event = if self.q_hat[i] - target >= 2.0 * self.eps1 {
            self.q_hat[i] = target;
            self.last_success = self.t;
            if self.first_success[i].is_none() {
                self.first_success[i] = Some(self.t);
            }
            UpdateEvent::Successful
        } else {
            if self.last_attempt[i] >= self.last_success {
                self.learn_flag[i] = false;
            }
            UpdateEvent::Attempted
        };
        self.last_attempt[i] = self.t;
        Ok(event)
    }

    pub fn greedy_policy(&self) -> Policy {
        let action = (0..self.num_states).map(|s| self.select_action(s).unwrap()).collect();
        Policy { action }
    }
}
