//! Finite discounted MDPs with deterministic seeded sampling.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};
use std::path::Path;

use crate::error::{Error, Result};

/// Tolerance for transition-row probability sums. Generators renormalize
/// before emitting, so anything beyond this is a construction bug.
pub const PROB_SUM_TOL: f64 = 1e-12;

/// A finite MDP: `S` states, `A` actions, transition kernel, deterministic
/// rewards in `[0,1]`, and discount `gamma` in `[0,1)`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TabularMdp {
    pub num_states: usize,
    pub num_actions: usize,
    pub discount: f64,
    pub start_state: usize,
    /// Row-major `S x A` reward table.
    pub reward: Vec<f64>,
    /// Row-major `S x A x S` transition table.
    pub transition: Vec<f64>,
}

/// One invariant violation found by [`TabularMdp::validate`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Violation {
    ProbabilitySum { state: usize, action: usize, sum: f64 },
    RewardOutOfRange { state: usize, action: usize, value: f64 },
    DiscountOutOfRange { value: f64 },
    StartStateOutOfRange { value: usize },
    TableSize { name: &'static str, expected: usize, actual: usize },
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Violation::ProbabilitySum { state, action, sum } => {
                write!(f, "transition row ({state},{action}) sums to {sum}")
            }
            Violation::RewardOutOfRange { state, action, value } => {
                write!(f, "reward({state},{action}) = {value} outside [0,1]")
            }
            Violation::DiscountOutOfRange { value } => {
                write!(f, "discount {value} outside [0,1)")
            }
            Violation::StartStateOutOfRange { value } => {
                write!(f, "start_state {value} out of range")
            }
            Violation::TableSize { name, expected, actual } => {
                write!(f, "{name} table has {actual} entries, expected {expected}")
            }
        }
    }
}

/// Diagnostic output of validation; empty iff all invariants hold.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

impl TabularMdp {
    #[inline]
    pub fn reward_at(&self, s: usize, a: usize) -> f64 {
        self.reward[s * self.num_actions + a]
    }

    #[inline]
    pub fn transition_row(&self, s: usize, a: usize) -> &[f64] {
        let base = (s * self.num_actions + a) * self.num_states;
        &self.transition[base..base + self.num_states]
    }

    /// Check every invariant; never aborts, just reports.
    pub fn validate(&self) -> ValidationReport {
        let mut report = ValidationReport::default();
        let sa = self.num_states * self.num_actions;
        if self.reward.len() != sa {
            report.violations.push(Violation::TableSize {
                name: "reward",
                expected: sa,
                actual: self.reward.len(),
            });
        }
        if self.transition.len() != sa * self.num_states {
            report.violations.push(Violation::TableSize {
                name: "transition",
                expected: sa * self.num_states,
                actual: self.transition.len(),
            });
        }
        if !report.violations.is_empty() {
            return report;
        }
        for s in 0..self.num_states {
            for a in 0..self.num_actions {
                let sum: f64 = self.transition_row(s, a).iter().sum();
                if (sum - 1.0).abs() > PROB_SUM_TOL
                    || self.transition_row(s, a).iter().any(|&p| !(0.0..=1.0).contains(&p))
                {
                    report.violations.push(Violation::ProbabilitySum { state: s, action: a, sum });
                }
                let r = self.reward_at(s, a);
                if !(0.0..=1.0).contains(&r) {
                    report.violations.push(Violation::RewardOutOfRange {
                        state: s,
                        action: a,
                        value: r,
                    });
                }
            }
        }
        if !(0.0..1.0).contains(&self.discount) {
            report.violations.push(Violation::DiscountOutOfRange { value: self.discount });
        }
        if self.start_state >= self.num_states {
            report.violations.push(Violation::StartStateOutOfRange { value: self.start_state });
        }
        report
    }

    fn check_indices(&self, s: usize, a: usize) -> Result<()> {
        if s >= self.num_states {
            return Err(Error::StateOutOfRange { state: s, num_states: self.num_states });
        }
        if a >= self.num_actions {
            return Err(Error::ActionOutOfRange { action: a, num_actions: self.num_actions });
        }
        Ok(())
    }

    /// Sample `(next_state, reward)` for `(s, a)`.
    ///
    /// Next state is drawn by inverse CDF over ascending state index, so the
    /// mapping from uniform draw to outcome is fixed across platforms.
    pub fn sample_transition(&self, s: usize, a: usize, rng: &mut impl Rng) -> Result<(usize, f64)> {
        self.check_indices(s, a)?;
        let u: f64 = rng.random();
        let row = self.transition_row(s, a);
        let mut cum = 0.0;
        let mut next = self.num_states - 1;
        for (sp, &p) in row.iter().enumerate() {
            cum += p;
            if u < cum {
                next = sp;
                break;
            }
        }
        Ok((next, self.reward_at(s, a)))
    }

    /// Load from the JSON file format, rejecting files that fail validation.
    pub fn load(path: impl AsRef<Path>) -> Result<TabularMdp> {
        let data = std::fs::read_to_string(path)?;
        let mdp: TabularMdp = serde_json::from_str(&data)?;
        let report = mdp.validate();
        if !report.is_valid() {
            return Err(Error::InvalidMdp(
                report
                    .violations
                    .iter()
                    .map(|v| v.to_string())
                    .collect::<Vec<_>>()
                    .join("; "),
            ));
        }
        Ok(mdp)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }
}

/// A reproducible random-stream seed with a stable splitting rule: a child
/// stream is identified by the parent value and a label string.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Seed {
    pub value: u64,
}

impl Seed {
    pub fn new(value: u64) -> Seed {
        Seed { value }
    }

    /// Derive a child seed. FNV-1a over (parent value, label) keeps the rule
    /// portable; identical (seed, label) always yields the same stream.
    pub fn child(&self, label: &str) -> Seed {
        const OFFSET: u64 = 0xcbf29ce484222325;
        const PRIME: u64 = 0x00000100000001b3;
        let mut h = OFFSET;
        for b in self.value.to_le_bytes() {
            h = (h ^ b as u64).wrapping_mul(PRIME);
        }
        for b in label.as_bytes() {
            h = (h ^ *b as u64).wrapping_mul(PRIME);
        }
        Seed { value: h }
    }

    pub fn rng(&self) -> ChaCha12Rng {
        ChaCha12Rng::seed_from_u64(self.value)
    }
}
