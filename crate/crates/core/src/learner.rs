//! Tabular Q-learning and the policies derived from a Q row.

use serde::{Deserialize, Serialize};

use crate::domain::{ActionId, StateId, Transition};
use crate::error::{Error, Result};
use crate::num::{lit, softmax_from_logs, Real};

/// Estimated action values and visit counts, both dense `state × action`.
#[derive(Debug, Clone, PartialEq)]
pub struct QTable<T> {
    num_states: usize,
    num_actions: usize,
    values: Vec<T>,
    visits: Vec<u64>,
}

impl<T: Real> QTable<T> {
    pub fn new(num_states: usize, num_actions: usize) -> Self {
        Self::filled(num_states, num_actions, T::zero())
    }

    pub fn filled(num_states: usize, num_actions: usize, value: T) -> Self {
        Self {
            num_states,
            num_actions,
            values: vec![value; num_states * num_actions],
            visits: vec![0; num_states * num_actions],
        }
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    #[inline]
    fn idx(&self, s: StateId, a: ActionId) -> usize {
        s.0 * self.num_actions + a.0
    }

    pub fn check(&self, s: StateId, a: ActionId) -> Result<()> {
        if s.0 >= self.num_states {
            return Err(Error::StateOutOfRange {
                index: s.0,
                n: self.num_states,
            });
        }
        if a.0 >= self.num_actions {
            return Err(Error::ActionOutOfRange {
                index: a.0,
                n: self.num_actions,
            });
        }
        Ok(())
    }

    #[inline]
    pub fn value(&self, s: StateId, a: ActionId) -> T {
        self.values[self.idx(s, a)]
    }

    #[inline]
    pub fn set_value(&mut self, s: StateId, a: ActionId, v: T) {
        let i = self.idx(s, a);
        self.values[i] = v;
    }

    #[inline]
    pub fn visits(&self, s: StateId, a: ActionId) -> u64 {
        self.visits[self.idx(s, a)]
    }

    pub fn set_visits(&mut self, s: StateId, a: ActionId, n: u64) {
        let i = self.idx(s, a);
        self.visits[i] = n;
    }

    #[inline]
    pub fn row(&self, s: StateId) -> &[T] {
        let start = s.0 * self.num_actions;
        &self.values[start..start + self.num_actions]
    }

    #[inline]
    pub fn visit_row(&self, s: StateId) -> &[u64] {
        let start = s.0 * self.num_actions;
        &self.visits[start..start + self.num_actions]
    }

    pub fn max_value(&self, s: StateId) -> T {
        self.row(s)
            .iter()
            .copied()
            .fold(T::neg_infinity(), |m, x| if x > m { x } else { m })
    }

    pub fn total_visits(&self) -> u64 {
        self.visits.iter().sum()
    }
}

fn default_alpha() -> f64 {
    0.05
}
fn default_gamma() -> f64 {
    0.9
}
fn default_tau() -> f64 {
    1.5
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound(deserialize = "T: Real + Deserialize<'de>"))]
pub struct LearnerConfig<T> {
    /// Learning rate in (0, 1].
    #[serde(default = "default_alpha_t")]
    pub alpha: T,
    /// Discount in [0, 1).
    #[serde(default = "default_gamma_t")]
    pub gamma: T,
    /// Boltzmann temperature, positive.
    #[serde(default = "default_tau_t")]
    pub tau_b: T,
}

fn default_alpha_t<T: Real>() -> T {
    lit(default_alpha())
}
fn default_gamma_t<T: Real>() -> T {
    lit(default_gamma())
}
fn default_tau_t<T: Real>() -> T {
    lit(default_tau())
}

impl<T: Real> Default for LearnerConfig<T> {
    fn default() -> Self {
        Self {
            alpha: default_alpha_t(),
            gamma: default_gamma_t(),
            tau_b: default_tau_t(),
        }
    }
}

impl<T: Real> LearnerConfig<T> {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha >= T::zero() && self.alpha <= T::one()) {
            return Err(Error::InvalidConfig(format!("alpha {} outside [0, 1]", self.alpha)));
        }
        if !(self.gamma >= T::zero() && self.gamma < T::one()) {
            return Err(Error::InvalidConfig(format!("gamma {} outside [0, 1)", self.gamma)));
        }
        if !(self.tau_b > T::zero()) {
            return Err(Error::InvalidConfig(format!("tau_b {} must be positive", self.tau_b)));
        }
        Ok(())
    }
}

/// A probability vector over the actions of one state.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyDistribution<T> {
    pub probs: Vec<T>,
}

impl<T: Real> PolicyDistribution<T> {
    pub fn uniform(n: usize) -> Self {
        let p = T::one() / lit(n as f64);
        Self { probs: vec![p; n] }
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn is_valid(&self, tol: T) -> bool {
        let sum: T = self.probs.iter().copied().sum();
        self.probs.iter().all(|&p| p >= T::zero()) && (sum - T::one()).abs() <= tol
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.probs.iter().map(|p| p.to_f64().unwrap()).collect()
    }
}

/// Classical one-step Q-learning update; terminal transitions bootstrap with 0.
pub fn q_update<T: Real>(q: &mut QTable<T>, t: &Transition, cfg: &LearnerConfig<T>) {
    let bootstrap = if t.terminal {
        T::zero()
    } else {
        q.max_value(t.next_state)
    };
    let target = lit::<T>(t.reward) + cfg.gamma * bootstrap;
    let i = q.idx(t.state, t.action);
    let old = q.values[i];
    q.values[i] = old + cfg.alpha * (target - old);
    q.visits[i] += 1;
}

/// Log-probabilities of the softmax of `q_row / tau_b`.
pub fn boltzmann_log_probs<T: Real>(q_row: &[T], tau_b: T) -> Vec<T> {
    let max = q_row
        .iter()
        .copied()
        .fold(T::neg_infinity(), |m, x| if x > m { x } else { m });
    let shifted: Vec<T> = q_row.iter().map(|&x| (x - max) / tau_b).collect();
    let log_z = shifted.iter().map(|&x| x.exp()).sum::<T>().ln();
    shifted.into_iter().map(|x| x - log_z).collect()
}

/// Boltzmann (softmax) exploration policy over a Q row.
pub fn boltzmann_policy<T: Real>(q_row: &[T], tau_b: T) -> PolicyDistribution<T> {
    let logits: Vec<T> = q_row.iter().map(|&x| x / tau_b).collect();
    PolicyDistribution {
        probs: softmax_from_logs(&logits),
    }
}

/// Argmax with ties going to the lowest action index.
pub fn greedy_policy<T: Real>(q_row: &[T]) -> ActionId {
    let mut best = 0;
    for (i, &v) in q_row.iter().enumerate().skip(1) {
        if v > q_row[best] {
            best = i;
        }
    }
    ActionId(best)
}
