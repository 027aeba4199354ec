//! Bandit environments and the preprocessing primitives they need.
//!
//! An environment produces rounds. Each round carries the candidate arms,
//! the noiseless expected reward of every candidate (the oracle used for
//! pseudo-regret), and the realized observable reward of every candidate.
//! Realized rewards are drawn when the round is generated, so the candidate
//! stream and payoffs under a fixed seed are identical no matter which
//! policy plays, which makes cross-policy comparisons paired.

pub mod classification;
pub mod kmeans;
pub mod recommendation;
pub mod svd;
pub mod synthetic;

use crate::embedding::ArmContext;
use crate::error::{Error, Result};

/// One interaction round.
#[derive(Debug, Clone)]
pub struct Round {
    pub candidates: Vec<ArmContext>,
    /// Noiseless expected reward per candidate.
    pub oracle: Vec<f64>,
    /// Realized reward per candidate (what the learner sees on pulling it).
    pub observed: Vec<f64>,
}

impl Round {
    pub fn new(candidates: Vec<ArmContext>, oracle: Vec<f64>, observed: Vec<f64>) -> Result<Self> {
        if candidates.is_empty() {
            return Err(Error::EmptyCandidates);
        }
        if oracle.len() != candidates.len() || observed.len() != candidates.len() {
            return Err(Error::DimensionMismatch {
                context: "round reward vectors",
                expected: candidates.len(),
                got: oracle.len().min(observed.len()),
            });
        }
        Ok(Self {
            candidates,
            oracle,
            observed,
        })
    }

    /// Index of the candidate an oracle-following policy would pick.
    pub fn best_index(&self) -> usize {
        let mut best = 0;
        for (i, v) in self.oracle.iter().enumerate().skip(1) {
            if *v > self.oracle[best] {
                best = i;
            }
        }
        best
    }

    /// Expected-reward gap of choosing `index` instead of the oracle best.
    pub fn regret_of(&self, index: usize) -> f64 {
        self.oracle[self.best_index()] - self.oracle[index]
    }
}

/// A seeded, sequential source of rounds.
pub trait Environment {
    fn n_groups(&self) -> usize;
    fn context_dim(&self) -> usize;
    fn next_round(&mut self) -> Result<Round>;
}
