//! Feedback ledger, the oracle trainer and the simulated crowd.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::domain::{ActionId, StateId, TrainerId, Transition};
use crate::envs::{EnvConfig, EnvKind, Environment};
use crate::error::{Error, Result};
use crate::learner::{greedy_policy, q_update, LearnerConfig, QTable};
use crate::rng::{derive_stream, RngStream};
use rand::RngCore;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Right,
    Wrong,
}

impl std::str::FromStr for Verdict {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "right" => Ok(Self::Right),
            "wrong" => Ok(Self::Wrong),
            other => Err(Error::Parse(format!(
                "verdict must be \"right\" or \"wrong\", got {other:?}"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeedbackEvent {
    pub trainer_id: TrainerId,
    pub state: StateId,
    pub action: ActionId,
    pub verdict: Verdict,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeedbackCounts {
    pub plus: u64,
    pub minus: u64,
}

impl FeedbackCounts {
    pub fn delta(self) -> i64 {
        self.plus as i64 - self.minus as i64
    }

    pub fn total(self) -> u64 {
        self.plus + self.minus
    }
}

/// Per-trainer positive/negative counts for each (state, action), stored sparsely.
///
/// Entries are ordered by state first so the feedback of one state can be read
/// as a contiguous range.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FeedbackLedger {
    entries: BTreeMap<(StateId, ActionId, TrainerId), FeedbackCounts>,
    totals: BTreeMap<TrainerId, u64>,
}

impl FeedbackLedger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn record(&mut self, e: &FeedbackEvent) {
        let c = self.entries.entry((e.state, e.action, e.trainer_id)).or_default();
        match e.verdict {
            Verdict::Right => c.plus += 1,
            Verdict::Wrong => c.minus += 1,
        }
        *self.totals.entry(e.trainer_id).or_default() += 1;
    }

    pub fn counts(&self, trainer: TrainerId, s: StateId, a: ActionId) -> FeedbackCounts {
        self.entries.get(&(s, a, trainer)).copied().unwrap_or_default()
    }

    pub fn delta(&self, trainer: TrainerId, s: StateId, a: ActionId) -> i64 {
        self.counts(trainer, s, a).delta()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Number of recorded events.
    pub fn total_events(&self) -> u64 {
        self.totals.values().sum()
    }

    pub fn total_for(&self, trainer: TrainerId) -> u64 {
        self.totals.get(&trainer).copied().unwrap_or(0)
    }

    pub fn trainers(&self) -> impl Iterator<Item = TrainerId> + '_ {
        self.totals.keys().copied()
    }

    /// All non-empty entries as `(trainer, state, action, counts)`, ordered by state.
    pub fn iter(&self) -> impl Iterator<Item = (TrainerId, StateId, ActionId, FeedbackCounts)> + '_ {
        self.entries.iter().map(|(&(s, a, l), &c)| (l, s, a, c))
    }

    /// Entries of a single state as `(trainer, action, counts)`.
    pub fn state_entries(&self, s: StateId) -> impl Iterator<Item = (TrainerId, ActionId, FeedbackCounts)> + '_ {
        self.entries
            .range((s, ActionId(0), TrainerId(0))..=(s, ActionId(usize::MAX), TrainerId(usize::MAX)))
            .map(|(&(_, a, l), &c)| (l, a, c))
    }

    pub fn states(&self) -> BTreeSet<StateId> {
        self.entries.keys().map(|&(s, _, _)| s).collect()
    }

    /// Writes `trainer_id,state,action,h_plus,h_minus` rows.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["trainer_id", "state", "action", "h_plus", "h_minus"])?;
        let mut rows: Vec<_> = self.iter().collect();
        rows.sort_by_key(|&(l, s, a, _)| (l, s, a));
        for (l, s, a, c) in rows {
            out.serialize((l.0, s.0, a.0, c.plus, c.minus))?;
        }
        out.flush()?;
        Ok(())
    }
}

fn one() -> f64 {
    1.0
}

/// A (possibly simulated) trainer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainerProfile {
    pub trainer_id: TrainerId,
    /// Probability of giving feedback that agrees with the oracle (simulation only).
    pub true_consistency: f64,
    /// Probability of answering at all when asked.
    #[serde(default = "one")]
    pub participation_rate: f64,
}

impl TrainerProfile {
    pub fn new(id: usize, true_consistency: f64) -> Self {
        Self {
            trainer_id: TrainerId(id),
            true_consistency,
            participation_rate: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("true_consistency", self.true_consistency),
            ("participation_rate", self.participation_rate),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::InvalidConfig(format!(
                    "trainer {}: {name} {v} outside [0, 1]",
                    self.trainer_id.0
                )));
            }
        }
        Ok(())
    }
}

/// The four-trainer crowd used in the gridworld experiments.
pub fn default_crowd() -> Vec<TrainerProfile> {
    [0.9, 0.8, 0.6, 0.3]
        .iter()
        .enumerate()
        .map(|(i, &c)| TrainerProfile::new(i, c))
        .collect()
}

/// Oracle pre-training schedule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OracleConfig {
    /// Training episodes; `None` means 50000 for PACMAN and Taxi, 5000 for FrozenLake.
    pub episodes: Option<usize>,
    /// Episode step limit; `None` means 500 for PACMAN and Taxi, 1000 for FrozenLake.
    pub max_steps: Option<usize>,
    pub alpha: f64,
    pub gamma: f64,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    /// Initial Q value. `None` picks 1.0 for FrozenLake (optimistic, since its
    /// only reward is +1) and 0.0 elsewhere (already optimistic under a step cost).
    pub initial_q: Option<f64>,
    /// Greedy rollouts used to validate the trained policy.
    pub validation_rollouts: usize,
    /// Fraction of validation rollouts that must succeed.
    pub min_success_rate: f64,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self {
            episodes: None,
            max_steps: None,
            alpha: 0.05,
            gamma: 0.9,
            epsilon_start: 1.0,
            epsilon_end: 0.01,
            initial_q: None,
            validation_rollouts: 20,
            min_success_rate: 0.8,
        }
    }
}

impl OracleConfig {
    pub fn episodes_for(&self, kind: EnvKind) -> usize {
        self.episodes.unwrap_or(match kind {
            EnvKind::Pacman | EnvKind::Taxi => 50_000,
            EnvKind::FrozenLake => 5000,
        })
    }

    pub fn initial_q_for(&self, kind: EnvKind) -> f64 {
        self.initial_q.unwrap_or(match kind {
            EnvKind::FrozenLake => 1.0,
            _ => 0.0,
        })
    }

    /// Environment the oracle trains on: `env` with the oracle's step limit.
    pub fn training_env(&self, env: &EnvConfig) -> EnvConfig {
        EnvConfig {
            max_steps: self.max_steps.or(Some(EnvConfig::new(env.kind).effective_max_steps())),
            ..env.clone()
        }
    }
}

/// A converged greedy policy that stands in for an expert trainer.
#[derive(Debug, Clone, PartialEq)]
pub struct Oracle {
    pub q_table: QTable<f64>,
}

impl Oracle {
    pub fn new(q_table: QTable<f64>) -> Self {
        Self { q_table }
    }

    /// The action the oracle considers optimal; ties go to the lowest index.
    pub fn best_action(&self, s: StateId) -> ActionId {
        greedy_policy(self.q_table.row(s))
    }

    pub fn covers(&self, s: StateId) -> bool {
        s.0 < self.q_table.num_states()
    }

    /// Runs one greedy episode and returns its transitions.
    pub fn rollout(&self, env: &Environment, rng: &mut RngStream) -> Result<Vec<Transition>> {
        let mut st = env.reset(rng);
        let mut steps = Vec::new();
        while !st.done {
            let a = self.best_action(st.state);
            steps.push(env.step(&mut st, a, rng)?);
        }
        Ok(steps)
    }

    /// Fraction of seeded greedy rollouts that end in a solved state.
    pub fn success_rate(&self, env: &Environment, rollouts: usize, seed: u64) -> Result<f64> {
        let mut wins = 0;
        for i in 0..rollouts {
            let mut rng = derive_stream(seed, "oracle-check", i as u64);
            let steps = self.rollout(env, &mut rng)?;
            if steps.last().is_some_and(|t| env.is_success(t.next_state)) {
                wins += 1;
            }
        }
        Ok(wins as f64 / rollouts.max(1) as f64)
    }
}

/// First line of an oracle dump; bump the version when the layout changes.
pub const ORACLE_DUMP_HEADER: &str = "# crowdshape oracle q-table v1";

impl Oracle {
    /// Writes the Q-table as CSV behind a versioned comment header:
    /// the header line, `# env=<label> states=<S> actions=<A>`, a column row
    /// `state,a0,..`, then one row per state.
    pub fn write_dump<W: Write>(&self, env_label: &str, mut w: W) -> Result<()> {
        let q = &self.q_table;
        writeln!(w, "{ORACLE_DUMP_HEADER}")?;
        writeln!(
            w,
            "# env={env_label} states={} actions={}",
            q.num_states(),
            q.num_actions()
        )?;
        let mut out = csv::Writer::from_writer(w);
        let mut header = vec!["state".to_string()];
        header.extend((0..q.num_actions()).map(|a| format!("a{a}")));
        out.write_record(&header)?;
        for s in 0..q.num_states() {
            let mut row = vec![s.to_string()];
            // `{:?}` prints the shortest string that parses back to the same f64
            row.extend(q.row(StateId(s)).iter().map(|v| format!("{v:?}")));
            out.write_record(&row)?;
        }
        out.flush()?;
        Ok(())
    }

    /// Reads a dump written by [`Oracle::write_dump`]; returns the oracle and its env label.
    pub fn read_dump<R: std::io::BufRead>(mut r: R) -> Result<(Self, String)> {
        let mut line = String::new();
        r.read_line(&mut line)?;
        if line.trim_end() != ORACLE_DUMP_HEADER {
            return Err(Error::Parse(format!(
                "not an oracle dump (header {:?})",
                line.trim_end()
            )));
        }
        line.clear();
        r.read_line(&mut line)?;
        let mut label = None;
        let mut states = None;
        let mut actions = None;
        for field in line.trim_start_matches('#').split_whitespace() {
            match field.split_once('=') {
                Some(("env", v)) => label = Some(v.to_string()),
                Some(("states", v)) => states = v.parse::<usize>().ok(),
                Some(("actions", v)) => actions = v.parse::<usize>().ok(),
                _ => {}
            }
        }
        let (Some(label), Some(states), Some(actions)) = (label, states, actions) else {
            return Err(Error::Parse(format!(
                "bad oracle dump metadata line {:?}",
                line.trim_end()
            )));
        };
        let mut q = QTable::new(states, actions);
        let mut seen = vec![false; states];
        let mut rdr = csv::Reader::from_reader(r);
        for rec in rdr.records() {
            let rec = rec?;
            if rec.len() != actions + 1 {
                return Err(Error::Parse(format!(
                    "oracle row has {} fields, expected {}",
                    rec.len(),
                    actions + 1
                )));
            }
            let parse = |i: usize| -> Result<f64> {
                rec[i]
                    .parse()
                    .map_err(|_| Error::Parse(format!("bad number {:?} in oracle dump", &rec[i])))
            };
            let s: usize = rec[0]
                .parse()
                .map_err(|_| Error::Parse(format!("bad state {:?}", &rec[0])))?;
            if s >= states {
                return Err(Error::StateOutOfRange { index: s, n: states });
            }
            for a in 0..actions {
                q.set_value(StateId(s), ActionId(a), parse(a + 1)?);
            }
            seen[s] = true;
        }
        if let Some(missing) = seen.iter().position(|&x| !x) {
            return Err(Error::Parse(format!("oracle dump is missing state {missing}")));
        }
        Ok((Self::new(q), label))
    }
}

/// Trains the oracle with ε-greedy tabular Q-learning, ε decaying linearly.
///
/// Fails when the greedy policy does not solve the task in at least
/// `min_success_rate` of the validation rollouts.
pub fn train_oracle(env_cfg: &EnvConfig, cfg: &OracleConfig, rng: &mut RngStream) -> Result<Oracle> {
    let episodes = cfg.episodes_for(env_cfg.kind);
    if episodes == 0 {
        return Err(Error::InvalidConfig(
            "oracle training needs at least one episode".into(),
        ));
    }
    let env = cfg.training_env(env_cfg).build()?;
    let learner = LearnerConfig {
        alpha: cfg.alpha,
        gamma: cfg.gamma,
        tau_b: 1.0,
    };
    learner.validate()?;
    let mut q = QTable::filled(env.num_states(), env.num_actions(), cfg.initial_q_for(env_cfg.kind));
    let n_actions = env.num_actions();
    let span = (episodes.max(2) - 1) as f64;
    for ep in 0..episodes {
        let eps = cfg.epsilon_start + (cfg.epsilon_end - cfg.epsilon_start) * (ep as f64 / span);
        let mut st = env.reset(rng);
        while !st.done {
            let a = if rng.bernoulli(eps) {
                ActionId(rng.below(n_actions))
            } else {
                greedy_policy(q.row(st.state))
            };
            let t = env.step(&mut st, a, rng)?;
            q_update(&mut q, &t, &learner);
        }
    }
    let oracle = Oracle::new(q);
    let rate = oracle.success_rate(&env, cfg.validation_rollouts.max(1), rng.next_u64())?;
    if rate < cfg.min_success_rate {
        return Err(Error::OracleTraining(format!(
            "greedy policy solved {:.0}% of {} validation rollouts on {} after {} episodes (need {:.0}%)",
            rate * 100.0,
            cfg.validation_rollouts,
            env_cfg.label(),
            episodes,
            cfg.min_success_rate * 100.0
        )));
    }
    Ok(oracle)
}

/// Asks a simulated trainer whether `a` is right in state `s`.
///
/// The trainer answers with probability `participation_rate`. The ground truth is
/// "right" iff `a` is the oracle's greedy action; the reported verdict matches it
/// with probability `true_consistency`.
pub fn elicit(
    profile: &TrainerProfile,
    oracle: &Oracle,
    s: StateId,
    a: ActionId,
    rng: &mut RngStream,
) -> Option<FeedbackEvent> {
    if !rng.bernoulli(profile.participation_rate) {
        return None;
    }
    let truth = a == oracle.best_action(s);
    let honest = rng.bernoulli(profile.true_consistency);
    let right = truth == honest;
    Some(FeedbackEvent {
        trainer_id: profile.trainer_id,
        state: s,
        action: a,
        verdict: if right { Verdict::Right } else { Verdict::Wrong },
    })
}
