//! Entropy-driven query selection: fuse feedback and trajectory evidence on
//! optimality, then ask about the (state, action) pairs the agent is least sure of.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::crowd_vi::Beliefs;
use crate::domain::{ActionId, StateId, Trajectory};
use crate::error::{Error, Result};
use crate::feedback::FeedbackLedger;
use crate::learner::QTable;
use crate::num::{from_count, lit, normalize_in_place, softmax_from_logs, Real};
use crate::rng::RngStream;
use crate::special::{normal_cdf, normal_inv_cdf};

/// Gaussian belief over one Q-value; the spread shrinks with visits.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QValueBelief<T> {
    pub mean: T,
    pub std: T,
}

impl<T: Real> QValueBelief<T> {
    /// `N(Q̂(s,a), σ_base / √max(N, 1))`.
    pub fn from_q(q: &QTable<T>, s: StateId, a: ActionId, sigma_base: T) -> Self {
        let n: T = from_count(q.visits(s, a).max(1));
        Self {
            mean: q.value(s, a),
            std: sigma_base / n.sqrt(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ActiveConfig {
    pub sigma_base: f64,
    pub mc_samples: usize,
    pub queries_per_episode: usize,
}

impl Default for ActiveConfig {
    fn default() -> Self {
        Self {
            sigma_base: 10.0,
            mc_samples: 64,
            queries_per_episode: 10,
        }
    }
}

impl ActiveConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma_base > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "sigma_base {} must be positive",
                self.sigma_base
            )));
        }
        if self.mc_samples == 0 {
            return Err(Error::InvalidConfig("mc_samples must be at least 1".into()));
        }
        Ok(())
    }
}

/// Feedback-only optimality posterior of state `s`, normalised over actions:
/// `∝ Π_l Ĉ_l^{δ_l} (1−Ĉ_l)^{−δ_l}` with Ĉ_l the trainer's point consistency.
pub fn feedback_posterior<T: Real>(
    ledger: &FeedbackLedger,
    beliefs: &Beliefs<T>,
    s: StateId,
    num_actions: usize,
    delta_cap: T,
) -> Vec<T> {
    let mut logs = vec![T::zero(); num_actions];
    for (l, a, c) in ledger.state_entries(s) {
        if let Some(b) = beliefs.get(&l) {
            let c_hat = b.point_consistency();
            let delta = lit::<T>(c.delta() as f64).max(-delta_cap).min(delta_cap);
            logs[a.0] += delta * (c_hat.ln() - (T::one() - c_hat).ln());
        }
    }
    softmax_from_logs(&logs)
}

/// Probability that each action has the largest Q-value, by stratified
/// quadrature over the inverse CDF of that action's belief:
/// `(1/M) Σ_i Π_{a'≠a} F_{a'}(F_a⁻¹(p_i))`, `p_i = (i + ½)/M`.
pub fn trajectory_posterior<T: Real>(beliefs: &[QValueBelief<T>], mc_samples: usize) -> Vec<T> {
    let m = mc_samples.max(1);
    let inv_m = T::one() / lit(m as f64);
    let half = lit::<T>(0.5);
    (0..beliefs.len())
        .map(|a| {
            let mut acc = T::zero();
            for i in 0..m {
                let p = (lit::<T>(i as f64) + half) * inv_m;
                let x = normal_inv_cdf(p, beliefs[a].mean, beliefs[a].std);
                let mut prod = T::one();
                for (b, other) in beliefs.iter().enumerate() {
                    if b != a {
                        prod *= normal_cdf(x, other.mean, other.std);
                    }
                }
                acc += prod;
            }
            acc * inv_m
        })
        .collect()
}

/// [`trajectory_posterior`] for state `s` of a Q-table.
pub fn state_trajectory_posterior<T: Real>(q: &QTable<T>, s: StateId, cfg: &ActiveConfig) -> Vec<T> {
    let sigma: T = lit(cfg.sigma_base);
    let beliefs: Vec<_> = (0..q.num_actions())
        .map(|a| QValueBelief::from_q(q, s, ActionId(a), sigma))
        .collect();
    trajectory_posterior(&beliefs, cfg.mc_samples)
}

/// Combines the two posteriors, dividing out the uniform prior `1/N_a`, and
/// renormalises. If the product vanishes everywhere the feedback posterior is kept.
pub fn fuse<T: Real>(feedback: &[T], trajectory: &[T]) -> Vec<T> {
    assert_eq!(
        feedback.len(),
        trajectory.len(),
        "posteriors over different action sets"
    );
    let n: T = lit(feedback.len() as f64);
    let mut out: Vec<T> = feedback.iter().zip(trajectory).map(|(&f, &t)| f * t * n).collect();
    if normalize_in_place(&mut out) {
        out
    } else {
        feedback.to_vec()
    }
}

/// One-vs-all entropy in bits: the probability is first rescaled so that the
/// uniform value `1/N_a` maps to ½, then the binary entropy is taken.
pub fn ova_entropy<T: Real>(p: T, n_actions: usize) -> T {
    assert!(n_actions >= 2, "one-vs-all entropy needs at least two actions");
    let rest = (T::one() - p) / lit((n_actions - 1) as f64);
    let denom = p + rest;
    if denom <= T::zero() {
        return T::zero();
    }
    let q = p / denom;
    let h = |x: T| if x <= T::zero() { T::zero() } else { -x * x.log2() };
    h(q) + h(T::one() - q)
}

/// Fused optimality probabilities per visited state.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FusedPosterior<T> {
    rows: BTreeMap<StateId, Vec<T>>,
}

impl<T: Real> FusedPosterior<T> {
    pub fn new() -> Self {
        Self { rows: BTreeMap::new() }
    }

    pub fn insert(&mut self, s: StateId, probs: Vec<T>) {
        self.rows.insert(s, probs);
    }

    pub fn row(&self, s: StateId) -> Option<&[T]> {
        self.rows.get(&s).map(Vec::as_slice)
    }

    pub fn p(&self, s: StateId, a: ActionId) -> Option<T> {
        self.rows.get(&s).and_then(|r| r.get(a.0)).copied()
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

/// Builds the fused posterior for every state visited by `trajectory`.
pub fn fused_for_trajectory<T: Real>(
    trajectory: &Trajectory,
    q: &QTable<T>,
    ledger: &FeedbackLedger,
    beliefs: &Beliefs<T>,
    cfg: &ActiveConfig,
    delta_cap: T,
) -> FusedPosterior<T> {
    let mut fused = FusedPosterior::new();
    for t in &trajectory.steps {
        if fused.row(t.state).is_none() {
            let fb = feedback_posterior(ledger, beliefs, t.state, q.num_actions(), delta_cap);
            let tr = state_trajectory_posterior(q, t.state, cfg);
            fused.insert(t.state, fuse(&fb, &tr));
        }
    }
    fused
}

/// A selected query with the score it was ranked by.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Query {
    pub state: StateId,
    pub action: ActionId,
    pub entropy: f64,
    pub p_fused: f64,
}

fn score<T: Real>(trajectory: &Trajectory, fused: &FusedPosterior<T>, n_actions: usize) -> Result<Vec<Query>> {
    trajectory
        .distinct_pairs()
        .into_iter()
        .map(|(s, a)| {
            let p = fused.p(s, a).ok_or(Error::StateOutOfRange {
                index: s.0,
                n: fused.len(),
            })?;
            Ok(Query {
                state: s,
                action: a,
                entropy: ova_entropy(p, n_actions).to_f64().unwrap_or(0.0),
                p_fused: p.to_f64().unwrap_or(0.0),
            })
        })
        .collect()
}

/// Top-`n` distinct trajectory pairs by OvA entropy; ties keep trajectory order.
pub fn select_queries<T: Real>(
    trajectory: &Trajectory,
    fused: &FusedPosterior<T>,
    n_actions: usize,
    n: usize,
) -> Result<Vec<Query>> {
    let mut scored = score(trajectory, fused, n_actions)?;
    // stable sort: equal entropies stay in first-occurrence order
    scored.sort_by(|x, y| y.entropy.total_cmp(&x.entropy));
    scored.truncate(n);
    Ok(scored)
}

/// `n` distinct trajectory pairs drawn uniformly without replacement.
pub fn random_queries<T: Real>(
    trajectory: &Trajectory,
    fused: &FusedPosterior<T>,
    n_actions: usize,
    n: usize,
    rng: &mut RngStream,
) -> Result<Vec<Query>> {
    let mut pool = score(trajectory, fused, n_actions)?;
    let k = n.min(pool.len());
    for i in 0..k {
        let j = i + rng.below(pool.len() - i);
        pool.swap(i, j);
    }
    pool.truncate(k);
    Ok(pool)
}
