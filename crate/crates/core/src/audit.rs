//! Trajectory auditing: count timesteps at which the learner's current
//! greedy policy is not epsilon-optimal at the visited state.

use std::collections::HashMap;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::{Seed, TabularMdp};
use crate::planner::{default_tol, evaluate_policy, greedy_from_table, value_iteration, Policy};

/// Anything that can act on a tabular MDP and expose its optimistic table.
pub trait Learner {
    fn select_action(&self, s: usize) -> Result<usize>;
    fn observe(&mut self, s: usize, a: usize, r: f64, s_next: usize) -> Result<()>;
    fn greedy_policy(&self) -> Policy;
    fn q_hat(&self) -> &[f64];
}

impl Learner for crate::ucb_q::UcbQState {
    fn select_action(&self, s: usize) -> Result<usize> {
        crate::ucb_q::UcbQState::select_action(self, s)
    }
    fn observe(&mut self, s: usize, a: usize, r: f64, s_next: usize) -> Result<()> {
        crate::ucb_q::UcbQState::observe(self, s, a, r, s_next)
    }
    fn greedy_policy(&self) -> Policy {
        crate::ucb_q::UcbQState::greedy_policy(self)
    }
    fn q_hat(&self) -> &[f64] {
        &self.q_hat
    }
}

impl Learner for crate::delayed_q::DelayedQState {
    fn select_action(&self, s: usize) -> Result<usize> {
        crate::delayed_q::DelayedQState::select_action(self, s)
    }
    fn observe(&mut self, s: usize, a: usize, r: f64, s_next: usize) -> Result<()> {
        crate::delayed_q::DelayedQState::observe(self, s, a, r, s_next).map(|_| ())
    }
    fn greedy_policy(&self) -> Policy {
        crate::delayed_q::DelayedQState::greedy_policy(self)
    }
    fn q_hat(&self) -> &[f64] {
        &self.q_hat
    }
}

/// A learner that never updates: it acts greedily on a fixed table. Used for
/// audit calibration (pin a policy, or pre-seed with exact `Q*`).
#[derive(Debug, Clone)]
pub struct PinnedPolicyLearner {
    pub q_hat: Vec<f64>,
    pub num_actions: usize,
}

impl PinnedPolicyLearner {
    /// Greedy on the given table forever.
    pub fn from_table(q_hat: Vec<f64>, num_actions: usize) -> Result<PinnedPolicyLearner> {
        if num_actions == 0 || q_hat.len() % num_actions != 0 {
            return Err(Error::DimensionMismatch(format!(
                "table of {} entries not divisible into rows of {num_actions}",
                q_hat.len()
            )));
        }
        Ok(PinnedPolicyLearner { q_hat, num_actions })
    }

    /// Always play `policy`, via a one-hot table.
    pub fn from_policy(policy: &Policy, num_actions: usize) -> Result<PinnedPolicyLearner> {
        policy.check(num_actions)?;
        let mut q_hat = vec![0.0; policy.action.len() * num_actions];
        for (s, &a) in policy.action.iter().enumerate() {
            q_hat[s * num_actions + a] = 1.0;
        }
        Ok(PinnedPolicyLearner { q_hat, num_actions })
    }
}

impl Learner for PinnedPolicyLearner {
    fn select_action(&self, s: usize) -> Result<usize> {
        let n = self.q_hat.len() / self.num_actions;
        if s >= n {
            return Err(Error::StateOutOfRange { state: s, num_states: n });
        }
        let row = &self.q_hat[s * self.num_actions..(s + 1) * self.num_actions];
        Ok(crate::planner::argmax_row(row))
    }
    fn observe(&mut self, _s: usize, _a: usize, _r: f64, _s_next: usize) -> Result<()> {
        Ok(())
    }
    fn greedy_policy(&self) -> Policy {
        greedy_from_table(&self.q_hat, self.num_actions)
    }
    fn q_hat(&self) -> &[f64] {
        &self.q_hat
    }
}

/// One audited timestep.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AuditRecord {
    pub t: u64,
    pub s: usize,
    pub a: usize,
    /// `V*(s_t) - V^{pi_t}(s_t)` with `pi_t` the learner's frozen greedy
    /// policy at time t.
    pub gap_policy: f64,
    /// `Delta_t = V*(s_t) - Q*(s_t, a_t)`, exact.
    pub gap_action: f64,
    pub mistake: bool,
}

/// Header object written as the first JSONL line of a trace.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TraceHeader {
    pub horizon_run: u64,
    pub epsilon_audit: f64,
    pub eval_cadence: u64,
    pub record_every: u64,
    pub num_states: usize,
    pub num_actions: usize,
    pub gamma: f64,
    pub total_mistakes: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AuditTrace {
    pub header: TraceHeader,
    /// Retained records; every `record_every`-th step (always including the
    /// final step). With `record_every = 1` nothing is dropped.
    pub records: Vec<AuditRecord>,
    /// `(t, mistakes so far)` at the same cadence as `records`.
    pub cumulative_mistakes: Vec<(u64, u64)>,
    /// Exact count over all T steps, never downsampled.
    pub total_mistakes: u64,
}

impl AuditTrace {
    /// Serialize as JSONL: the header object, then one object per record.
    pub fn write_jsonl<W: Write>(&self, mut w: W) -> Result<()> {
        serde_json::to_writer(&mut w, &self.header)?;
        w.write_all(b"\n")?;
        for rec in &self.records {
            serde_json::to_writer(&mut w, rec)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn read_jsonl<R: BufRead>(r: R) -> Result<AuditTrace> {
        let mut lines = r.lines();
        let first = lines
            .next()
            .ok_or_else(|| Error::Config("empty trace file".into()))??;
        let header: TraceHeader = serde_json::from_str(&first)?;
        let mut records = Vec::new();
        let mut cumulative = Vec::new();
        let mut count = 0u64;
        for line in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: AuditRecord = serde_json::from_str(&line)?;
            if rec.mistake {
                count += 1;
            }
            records.push(rec.clone());
            cumulative.push((rec.t, count));
        }
        Ok(AuditTrace {
            total_mistakes: header.total_mistakes,
            header,
            records,
            cumulative_mistakes: cumulative,
        })
    }
}

/// Run one audited trajectory of `T` steps from `mdp.start_state`.
///
/// Ground-truth `Q*, V*` are solved once up front. `gap_action` is exact at
/// every step; `gap_policy` comes from a cache keyed on the frozen greedy
/// policy, so its value is independent of `eval_cadence` (the cadence only
/// forces a cache refresh). `record_every` controls record retention; pass 1
/// to keep every step (required by [`mistake_count_by_threshold`]).
pub fn run_experiment(
    mdp: &TabularMdp,
    learner: &mut dyn Learner,
    t_steps: u64,
    epsilon_audit: f64,
    seed: Seed,
    eval_cadence: u64,
    record_every: u64,
) -> Result<AuditTrace> {
    if t_steps < 1 {
        return Err(Error::InvalidParameter("T must be >= 1".into()));
    }
    if eval_cadence < 1 || record_every < 1 {
        return Err(Error::InvalidParameter("cadences must be >= 1".into()));
    }
    let report = mdp.validate();
    if !report.is_valid() {
        return Err(Error::InvalidMdp(format!("{report:?}")));
    }
    let tol = default_tol(mdp.discount);
    let star = value_iteration(mdp, tol)?;

    let mut cache: HashMap<Vec<usize>, Vec<f64>> = HashMap::new();
    let mut rng = seed.child("trajectory").rng();
    let mut s = mdp.start_state;
    let mut records = Vec::new();
    let mut cumulative = Vec::new();
    let mut total_mistakes = 0u64;
    let mut current_policy: Option<Vec<usize>> = None;
    let mut v_pi: Vec<f64> = Vec::new();

    for t in 1..=t_steps {
        let a = learner.select_action(s)?;
        let gap_action = (star.v[s] - star.q[s * mdp.num_actions + a]).max(0.0);

        let pol = learner.greedy_policy();
        let stale = current_policy.as_ref() != Some(&pol.action);
        if stale || t % eval_cadence == 0 {
            v_pi = match cache.get(&pol.action) {
                Some(v) => v.clone(),
                None => {
                    let vt = evaluate_policy(mdp, &pol, tol)?;
                    cache.insert(pol.action.clone(), vt.v.clone());
                    vt.v
                }
            };
            current_policy = Some(pol.action.clone());
        }
        let gap_policy = (star.v[s] - v_pi[s]).max(0.0);
        let mistake = gap_policy > epsilon_audit;
        if mistake {
            total_mistakes += 1;
        }

        if t % record_every == 0 || t == t_steps {
            records.push(AuditRecord { t, s, a, gap_policy, gap_action, mistake });
            cumulative.push((t, total_mistakes));
        }

        let (s_next, r) = mdp.sample_transition(s, a, &mut rng)?;
        learner.observe(s, a, r, s_next)?;
        s = s_next;
    }

    Ok(AuditTrace {
        header: TraceHeader {
            horizon_run: t_steps,
            epsilon_audit,
            eval_cadence,
            record_every,
            num_states: mdp.num_states,
            num_actions: mdp.num_actions,
            gamma: mdp.discount,
            total_mistakes,
        },
        records,
        cumulative_mistakes: cumulative,
        total_mistakes,
    })
}

/// Count, per threshold, the steps whose `gap_policy` exceeded it. Requires a
/// trace retained at `record_every = 1`.
pub fn mistake_count_by_threshold(
    trace: &AuditTrace,
    thresholds: &[f64],
) -> Result<Vec<(f64, u64)>> {
    if trace.header.record_every != 1 {
        return Err(Error::Config(
            "mistake_count_by_threshold needs a full trace (record_every = 1)".into(),
        ));
    }
    Ok(thresholds
        .iter()
        .map(|&th| (th, trace.records.iter().filter(|r| r.gap_policy > th).count() as u64))
        .collect())
}
