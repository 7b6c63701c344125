//! Variational inference over trainer consistency and per-state optimality.
//!
//! Two factors are alternated: a Beta posterior over each trainer's
//! consistency `C_l`, and a categorical posterior `q(O_s)` over which action
//! is optimal in each state that has received feedback.

use std::collections::BTreeMap;

use crate::domain::{ActionId, StateId, TrainerId};
use crate::error::{Error, Result};
use crate::feedback::FeedbackLedger;
use crate::learner::{boltzmann_log_probs, PolicyDistribution, QTable};
use crate::num::{from_count, lit, softmax_from_logs, Real};
use crate::special::digamma;

/// Beta prior over a trainer's consistency.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BetaParams<T> {
    pub alpha: T,
    pub beta: T,
}

impl<T: Real> BetaParams<T> {
    pub fn new(alpha: T, beta: T) -> Result<Self> {
        if !(alpha > T::zero() && beta > T::zero()) {
            return Err(Error::InvalidConfig(format!(
                "beta prior parameters must be positive, got ({alpha}, {beta})"
            )));
        }
        Ok(Self { alpha, beta })
    }

    pub fn mean(&self) -> T {
        self.alpha / (self.alpha + self.beta)
    }
}

/// Variational factor `q(C_l)` of one trainer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainerBelief<T> {
    pub trainer_id: TrainerId,
    pub prior: BetaParams<T>,
    /// Expected number of right answers.
    pub h_r: T,
    /// Expected number of wrong answers.
    pub h_w: T,
    pub e_log_c: T,
    pub e_log_1mc: T,
    /// Set when consistency is assumed known rather than estimated.
    pub fixed_c: Option<T>,
}

impl<T: Real> TrainerBelief<T> {
    /// Belief before any feedback: the prior itself.
    pub fn from_prior(trainer_id: TrainerId, prior: BetaParams<T>) -> Result<Self> {
        update_trainer_belief(
            &Self {
                trainer_id,
                prior,
                h_r: T::zero(),
                h_w: T::zero(),
                e_log_c: T::zero(),
                e_log_1mc: T::zero(),
                fixed_c: None,
            },
            T::zero(),
            T::zero(),
        )
    }

    /// A trainer whose consistency is taken as exactly `c`.
    pub fn known(trainer_id: TrainerId, c: T) -> Result<Self> {
        if !(c > T::zero() && c < T::one()) {
            return Err(Error::InvalidConfig(format!(
                "assumed consistency {c} must lie in (0, 1)"
            )));
        }
        Ok(Self {
            trainer_id,
            prior: BetaParams {
                alpha: c,
                beta: T::one() - c,
            },
            h_r: T::zero(),
            h_w: T::zero(),
            e_log_c: c.ln(),
            e_log_1mc: (T::one() - c).ln(),
            fixed_c: Some(c),
        })
    }

    /// Posterior mean of `C_l`.
    pub fn mean(&self) -> T {
        if let Some(c) = self.fixed_c {
            return c;
        }
        (self.h_r + self.prior.alpha) / (self.h_r + self.h_w + self.prior.alpha + self.prior.beta)
    }

    /// Consistency implied by the two expected logs, `exp E log C` renormalised
    /// against `exp E log(1−C)`.
    pub fn point_consistency(&self) -> T {
        let d = self.e_log_c - self.e_log_1mc;
        T::one() / (T::one() + (-d).exp())
    }

    /// Log-odds weight one net vote from this trainer contributes.
    pub fn log_odds(&self) -> T {
        self.e_log_c - self.e_log_1mc
    }
}

pub type Beliefs<T> = BTreeMap<TrainerId, TrainerBelief<T>>;

/// Factor `q(O_s)`, stored for states that have feedback.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimalityPosterior<T> {
    num_actions: usize,
    rows: BTreeMap<StateId, Vec<T>>,
}

impl<T: Real> OptimalityPosterior<T> {
    pub fn new(num_actions: usize) -> Self {
        Self {
            num_actions,
            rows: BTreeMap::new(),
        }
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn insert(&mut self, s: StateId, probs: Vec<T>) {
        assert_eq!(probs.len(), self.num_actions, "posterior row has the wrong width");
        self.rows.insert(s, probs);
    }

    pub fn get(&self, s: StateId) -> Option<&[T]> {
        self.rows.get(&s).map(Vec::as_slice)
    }

    /// `q(O_{s,a} = 1)`; uniform for states without a row.
    pub fn prob(&self, s: StateId, a: ActionId) -> T {
        match self.rows.get(&s) {
            Some(r) => r[a.0],
            None => T::one() / lit(self.num_actions as f64),
        }
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (StateId, &[T])> + '_ {
        self.rows.iter().map(|(&s, r)| (s, r.as_slice()))
    }
}

/// The reinforcement-learning policy `π_R` that acts as prior over optimality.
pub trait PriorPolicy<T> {
    fn num_actions(&self) -> usize;
    fn log_probs(&self, s: StateId) -> Vec<T>;
}

/// Boltzmann policy over a Q-table.
#[derive(Debug, Clone, Copy)]
pub struct BoltzmannPrior<'a, T> {
    pub q: &'a QTable<T>,
    pub tau_b: T,
}

impl<T: Real> PriorPolicy<T> for BoltzmannPrior<'_, T> {
    fn num_actions(&self) -> usize {
        self.q.num_actions()
    }

    fn log_probs(&self, s: StateId) -> Vec<T> {
        boltzmann_log_probs(self.q.row(s), self.tau_b)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct UniformPrior {
    pub num_actions: usize,
}

impl<T: Real> PriorPolicy<T> for UniformPrior {
    fn num_actions(&self) -> usize {
        self.num_actions
    }

    fn log_probs(&self, _s: StateId) -> Vec<T> {
        vec![-lit::<T>(self.num_actions as f64).ln(); self.num_actions]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ViConfig<T> {
    pub i_max: usize,
    /// Stop once max over trainers of |Δ E log C_l| falls below this.
    pub convergence_tol: T,
    /// Net votes per (trainer, state, action) are clamped to ±`delta_cap`.
    pub delta_cap: T,
    /// Prior for trainers without an explicit one.
    pub default_prior: BetaParams<T>,
    /// When set, every trainer's consistency is fixed at this value and only
    /// `q(O_s)` is inferred.
    pub known_consistency: Option<T>,
}

impl<T: Real> Default for ViConfig<T> {
    fn default() -> Self {
        Self {
            i_max: 100,
            convergence_tol: lit(1e-6),
            delta_cap: lit(50.0),
            default_prior: BetaParams {
                alpha: lit(90.0),
                beta: lit(10.0),
            },
            known_consistency: None,
        }
    }
}

impl<T: Real> ViConfig<T> {
    pub fn validate(&self) -> Result<()> {
        if self.i_max == 0 {
            return Err(Error::InvalidConfig("i_max must be at least 1".into()));
        }
        if !(self.convergence_tol > T::zero()) {
            return Err(Error::InvalidConfig("convergence tolerance must be positive".into()));
        }
        if !(self.delta_cap > T::zero()) {
            return Err(Error::InvalidConfig("delta cap must be positive".into()));
        }
        BetaParams::new(self.default_prior.alpha, self.default_prior.beta)?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ViOutcome<T> {
    pub optimality: OptimalityPosterior<T>,
    pub beliefs: Beliefs<T>,
    pub iterations: usize,
    pub converged: bool,
    /// [`elbo`] at the returned factors.
    pub elbo: T,
}

/// Expected right/wrong counts `(h_r, h_w)` per trainer under `q(O)`.
pub fn expected_counts<T: Real>(ledger: &FeedbackLedger, q_o: &OptimalityPosterior<T>) -> BTreeMap<TrainerId, (T, T)> {
    let mut out: BTreeMap<TrainerId, (T, T)> = ledger.trainers().map(|l| (l, (T::zero(), T::zero()))).collect();
    for (l, s, a, c) in ledger.iter() {
        let q = q_o.prob(s, a);
        let plus: T = from_count(c.plus);
        let minus: T = from_count(c.minus);
        let e = out.entry(l).or_insert((T::zero(), T::zero()));
        e.0 += q * plus + (T::one() - q) * minus;
        e.1 += (T::one() - q) * plus + q * minus;
    }
    out
}

/// Replaces the expected counts of `belief` and recomputes `E log C` and `E log(1−C)`.
pub fn update_trainer_belief<T: Real>(belief: &TrainerBelief<T>, h_r: T, h_w: T) -> Result<TrainerBelief<T>> {
    if !(h_r >= T::zero() && h_w >= T::zero()) {
        return Err(Error::InvalidConfig(format!(
            "expected counts must be non-negative, got ({h_r}, {h_w})"
        )));
    }
    let mut next = *belief;
    next.h_r = h_r;
    next.h_w = h_w;
    if let Some(c) = belief.fixed_c {
        next.e_log_c = c.ln();
        next.e_log_1mc = (T::one() - c).ln();
        return Ok(next);
    }
    let BetaParams { alpha, beta } = belief.prior;
    let total = digamma(h_r + h_w + alpha + beta)?;
    next.e_log_c = digamma(h_r + alpha)? - total;
    next.e_log_1mc = digamma(h_w + beta)? - total;
    Ok(next)
}

/// Summed feedback log-weights `Σ_l clamp(δ_{l,s,a}) (E log C_l − E log(1−C_l))` for every action of `s`.
///
/// Trainers absent from `beliefs` contribute nothing.
pub fn feedback_log_weights<T: Real>(
    ledger: &FeedbackLedger,
    beliefs: &Beliefs<T>,
    s: StateId,
    num_actions: usize,
    delta_cap: T,
) -> Vec<T> {
    let mut w = vec![T::zero(); num_actions];
    for (l, a, c) in ledger.state_entries(s) {
        if let Some(b) = beliefs.get(&l) {
            let delta = lit::<T>(c.delta() as f64).max(-delta_cap).min(delta_cap);
            w[a.0] += delta * b.log_odds();
        }
    }
    w
}

/// Policy that combines `π_R` with the feedback on `s`: `softmax(log π_R + feedback log-weights)`.
pub fn shaped_policy<T: Real, P: PriorPolicy<T> + ?Sized>(
    ledger: &FeedbackLedger,
    beliefs: &Beliefs<T>,
    prior: &P,
    s: StateId,
    delta_cap: T,
) -> PolicyDistribution<T> {
    let n = prior.num_actions();
    let w = feedback_log_weights(ledger, beliefs, s, n, delta_cap);
    let logs: Vec<T> = prior.log_probs(s).into_iter().zip(w).map(|(p, f)| p + f).collect();
    PolicyDistribution {
        probs: softmax_from_logs(&logs),
    }
}

/// Recomputes `q(O_s)` for every state that has feedback.
pub fn update_optimality<T: Real, P: PriorPolicy<T> + ?Sized>(
    ledger: &FeedbackLedger,
    beliefs: &Beliefs<T>,
    prior: &P,
    delta_cap: T,
) -> OptimalityPosterior<T> {
    let mut q_o = OptimalityPosterior::new(prior.num_actions());
    for s in ledger.states() {
        q_o.insert(s, shaped_policy(ledger, beliefs, prior, s, delta_cap).probs);
    }
    q_o
}

fn ln_beta<T: Real>(a: T, b: T) -> T {
    a.ln_gamma() + b.ln_gamma() - (a + b).ln_gamma()
}

/// Evidence lower bound of the factorisation (up to the constant binomial
/// coefficients of the feedback likelihood):
///
/// `Σ_l [h_r E log C_l + h_w E log(1−C_l) − KL(q(C_l) ‖ Beta(α, β))] − Σ_s KL(q(O_s) ‖ π_R(·|s))`
///
/// with `h_r, h_w` the expected counts under `q_o`. Trainers with a fixed
/// consistency contribute no KL term. Used to choose between fixed points
/// reached from different starts.
pub fn elbo<T: Real, P: PriorPolicy<T> + ?Sized>(
    ledger: &FeedbackLedger,
    beliefs: &Beliefs<T>,
    q_o: &OptimalityPosterior<T>,
    prior_policy: &P,
) -> T {
    let counts = expected_counts(ledger, q_o);
    let mut total = T::zero();
    for (l, b) in beliefs {
        let (h_r, h_w) = counts.get(l).copied().unwrap_or((T::zero(), T::zero()));
        total += h_r * b.e_log_c + h_w * b.e_log_1mc;
        if b.fixed_c.is_none() {
            let BetaParams { alpha: a0, beta: b0 } = b.prior;
            let (a1, b1) = (a0 + b.h_r, b0 + b.h_w);
            let kl = ln_beta(a0, b0) - ln_beta(a1, b1) + b.h_r * b.e_log_c + b.h_w * b.e_log_1mc;
            total -= kl;
        }
    }
    for (s, row) in q_o.iter() {
        let log_prior = prior_policy.log_probs(s);
        for (&q, &lp) in row.iter().zip(&log_prior) {
            if q > T::zero() {
                total -= q * (q.ln() - lp);
            }
        }
    }
    total
}

/// Alternates the two factor updates until `E log C_l` settles or `i_max` is reached.
///
/// The cold start follows the textbook initialisation: beliefs at their
/// priors and `q(O_s) = π_R`. When `warm` supplies beliefs from a previous
/// call, a second run starts from them and the fixed point with the larger
/// [`elbo`] is kept (the warm one on ties). The two starts can land in
/// different modes of the mirrored-consistency ambiguity, and neither is
/// reliably the right one on its own.
///
/// Trainers that appear in the ledger but not in `priors` use `cfg.default_prior`.
pub fn run_vi<T: Real, P: PriorPolicy<T> + ?Sized>(
    ledger: &FeedbackLedger,
    priors: &BTreeMap<TrainerId, BetaParams<T>>,
    prior_policy: &P,
    cfg: &ViConfig<T>,
    warm: Option<&Beliefs<T>>,
) -> Result<ViOutcome<T>> {
    cfg.validate()?;
    let mut ids: Vec<TrainerId> = priors.keys().copied().collect();
    ids.extend(ledger.trainers());
    ids.sort();
    ids.dedup();
    let prior_of = |l: &TrainerId| priors.get(l).copied().unwrap_or(cfg.default_prior);

    if let Some(c) = cfg.known_consistency {
        let mut beliefs = Beliefs::new();
        for &l in &ids {
            beliefs.insert(l, TrainerBelief::known(l, c)?);
        }
        let optimality = update_optimality(ledger, &beliefs, prior_policy, cfg.delta_cap);
        let elbo = elbo(ledger, &beliefs, &optimality, prior_policy);
        return Ok(ViOutcome {
            optimality,
            beliefs,
            iterations: 1,
            converged: true,
            elbo,
        });
    }

    let mut cold = Beliefs::new();
    for &l in &ids {
        cold.insert(l, TrainerBelief::from_prior(l, prior_of(&l))?);
    }
    let pi_r = update_optimality(ledger, &Beliefs::new(), prior_policy, cfg.delta_cap);
    let cold_out = iterate(ledger, prior_policy, cfg, cold, pi_r)?;
    let Some(warm) = warm else {
        return Ok(cold_out);
    };

    let mut start = Beliefs::new();
    for &l in &ids {
        let fresh = TrainerBelief::from_prior(l, prior_of(&l))?;
        let b = match warm.get(&l) {
            // keep the previous expected counts, but under the current prior
            Some(prev) if prev.fixed_c.is_none() => update_trainer_belief(&fresh, prev.h_r, prev.h_w)?,
            _ => fresh,
        };
        start.insert(l, b);
    }
    let q_start = update_optimality(ledger, &start, prior_policy, cfg.delta_cap);
    let warm_out = iterate(ledger, prior_policy, cfg, start, q_start)?;
    Ok(if cold_out.elbo > warm_out.elbo {
        cold_out
    } else {
        warm_out
    })
}

fn iterate<T: Real, P: PriorPolicy<T> + ?Sized>(
    ledger: &FeedbackLedger,
    prior_policy: &P,
    cfg: &ViConfig<T>,
    mut beliefs: Beliefs<T>,
    mut q_o: OptimalityPosterior<T>,
) -> Result<ViOutcome<T>> {
    let mut iterations = 0;
    let mut converged = false;
    while iterations < cfg.i_max {
        iterations += 1;
        let counts = expected_counts(ledger, &q_o);
        let mut shift = T::zero();
        for (l, b) in beliefs.iter_mut() {
            let (h_r, h_w) = counts.get(l).copied().unwrap_or((T::zero(), T::zero()));
            let next = update_trainer_belief(b, h_r.max(T::zero()), h_w.max(T::zero()))?;
            shift = shift.max((next.e_log_c - b.e_log_c).abs());
            *b = next;
        }
        q_o = update_optimality(ledger, &beliefs, prior_policy, cfg.delta_cap);
        if shift < cfg.convergence_tol {
            converged = true;
            break;
        }
    }
    let elbo = elbo(ledger, &beliefs, &q_o, prior_policy);
    Ok(ViOutcome {
        optimality: q_o,
        beliefs,
        iterations,
        converged,
        elbo,
    })
}

/// Acting distribution for `s`: the posterior `q(O_s)` where known, else `π_R`.
pub fn posterior_policy<T: Real, P: PriorPolicy<T> + ?Sized>(
    q_o: &OptimalityPosterior<T>,
    prior: &P,
    s: StateId,
) -> PolicyDistribution<T> {
    match q_o.get(s) {
        Some(r) => PolicyDistribution { probs: r.to_vec() },
        None => PolicyDistribution {
            probs: softmax_from_logs(&prior.log_probs(s)),
        },
    }
}
