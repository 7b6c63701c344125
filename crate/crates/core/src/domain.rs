//! Identifiers, transitions and trajectories shared by every module.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::num::Real;

/// Dense state index in `[0, num_states)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct StateId(pub usize);

/// Dense action index in `[0, num_actions)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ActionId(pub usize);

/// Trainer identifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TrainerId(pub usize);

impl StateId {
    #[inline]
    pub fn index(self) -> usize {
        self.0
    }
}

impl ActionId {
    #[inline]
    pub fn index(self) -> usize {
        self.0
    }
}

impl std::fmt::Display for StateId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl std::fmt::Display for ActionId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// One environment step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub state: StateId,
    pub action: ActionId,
    pub reward: f64,
    pub next_state: StateId,
    pub terminal: bool,
}

/// Ordered steps of one episode.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub episode_index: usize,
    pub steps: Vec<Transition>,
}

impl Trajectory {
    pub fn new(episode_index: usize) -> Self {
        Self {
            episode_index,
            steps: Vec::new(),
        }
    }

    pub fn push(&mut self, t: Transition) {
        self.steps.push(t);
    }

    pub fn total_reward(&self) -> f64 {
        self.steps.iter().map(|t| t.reward).sum()
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// True when each step starts where the previous one ended.
    pub fn is_chained(&self) -> bool {
        self.steps
            .windows(2)
            .all(|w| w[0].terminal || w[0].next_state == w[1].state)
    }

    /// Distinct (state, action) pairs in order of first occurrence.
    pub fn distinct_pairs(&self) -> Vec<(StateId, ActionId)> {
        let mut seen = std::collections::HashSet::new();
        self.steps
            .iter()
            .map(|t| (t.state, t.action))
            .filter(|p| seen.insert(*p))
            .collect()
    }
}

/// The one-hot vector `e_a` of length `n`.
pub fn one_hot<T: Real>(a: ActionId, n: usize) -> Result<Vec<T>> {
    if a.0 >= n {
        return Err(Error::ActionOutOfRange { index: a.0, n });
    }
    let mut v = vec![T::zero(); n];
    v[a.0] = T::one();
    Ok(v)
}
