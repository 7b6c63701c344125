use crate::active::{fused_for_trajectory, random_queries, select_queries, Query};
use crate::crowd_vi::{run_vi, shaped_policy, Beliefs, BetaParams, BoltzmannPrior, TrainerBelief, ViConfig};
use crate::domain::{ActionId, TrainerId, Trajectory};
use crate::envs::Environment;
use crate::error::{Error, Result};
use crate::feedback::{elicit, FeedbackEvent, FeedbackLedger, Oracle};
use crate::learner::{boltzmann_policy, q_update, QTable};
use crate::rng::{derive_stream, RngStream};

use std::collections::BTreeMap;

use super::config::{ArmKind, ArmSpec, ExperimentConfig};

/// One query as logged: the episode it followed and its rank in that batch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QueryRecord {
    pub episode: usize,
    pub rank: usize,
    pub query: Query,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PosteriorRecord {
    pub episode: usize,
    pub trainer_id: TrainerId,
    pub c_mean: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialResult {
    pub arm: String,
    pub trial_index: usize,
    /// Undiscounted return of every episode.
    pub returns: Vec<f64>,
    /// Queries issued after every episode.
    pub query_counts: Vec<usize>,
    pub feedback_events: u64,
    pub final_c_means: Vec<(TrainerId, f64)>,
    pub queries: Vec<QueryRecord>,
    pub posteriors: Vec<PosteriorRecord>,
    pub ledger: FeedbackLedger,
    /// Episodes whose inference hit the iteration cap without converging.
    pub vi_capped_episodes: usize,
}

/// One learning agent stepped an episode at a time.
///
/// An episode boundary is [`play_episode`](Self::play_episode), then
/// [`select`](Self::select), any number of [`record`](Self::record) /
/// [`elicit_simulated`](Self::elicit_simulated) calls, and finally
/// [`close_episode`](Self::close_episode), which re-runs inference. The batch
/// harness and the live feedback service drive the same sequence.
///
/// Streams are derived from `(base_seed, tag, trial_index)` only, so every arm
/// sees the same environment, agent, crowd and query streams for a given trial.
#[derive(Debug)]
pub struct TrialRunner<'a> {
    arm: ArmSpec,
    oracle: Option<&'a Oracle>,
    env: Environment,
    env_rng: RngStream,
    agent_rng: RngStream,
    crowd_rng: RngStream,
    query_rng: RngStream,
    vi_cfg: ViConfig<f64>,
    priors: BTreeMap<TrainerId, BetaParams<f64>>,
    warm_start: bool,
    tau_b: f64,
    q: QTable<f64>,
    ledger: FeedbackLedger,
    beliefs: Beliefs<f64>,
    result: TrialResult,
    cfg: &'a ExperimentConfig,
}

impl<'a> TrialRunner<'a> {
    /// `oracle` is needed only to answer for the arm's simulated trainers.
    pub fn new(
        cfg: &'a ExperimentConfig,
        arm: &ArmSpec,
        trial_index: usize,
        oracle: Option<&'a Oracle>,
    ) -> Result<Self> {
        if arm.kind.uses_feedback() && !arm.trainers.is_empty() && oracle.is_none() {
            return Err(Error::InvalidConfig(format!("arm {} needs an oracle", arm.label)));
        }
        let env = cfg.agent_env().build()?;
        let t = trial_index as u64;
        let known = (arm.kind == ArmKind::FixedC).then(|| cfg.fixed_c_assumed.unwrap_or(0.8));
        let vi_cfg = cfg.vi_config(known)?;
        let priors = cfg.priors_for(&arm.trainers)?;
        let mut runner = Self {
            arm: arm.clone(),
            oracle,
            q: QTable::new(env.num_states(), env.num_actions()),
            env,
            env_rng: derive_stream(cfg.base_seed, "env", t),
            agent_rng: derive_stream(cfg.base_seed, "agent", t),
            crowd_rng: derive_stream(cfg.base_seed, "crowd", t),
            query_rng: derive_stream(cfg.base_seed, "query", t),
            vi_cfg,
            priors,
            warm_start: cfg.vi.warm_start,
            tau_b: cfg.learner.tau_b,
            ledger: FeedbackLedger::new(),
            beliefs: Beliefs::new(),
            result: TrialResult {
                arm: arm.label.clone(),
                trial_index,
                returns: Vec::with_capacity(cfg.episodes),
                query_counts: Vec::with_capacity(cfg.episodes),
                feedback_events: 0,
                final_c_means: Vec::new(),
                queries: Vec::new(),
                posteriors: Vec::new(),
                ledger: FeedbackLedger::new(),
                vi_capped_episodes: 0,
            },
            cfg,
        };
        for tr in &arm.trainers {
            let b = runner.initial_belief(tr.trainer_id)?;
            runner.beliefs.insert(tr.trainer_id, b);
        }
        Ok(runner)
    }

    fn initial_belief(&self, id: TrainerId) -> Result<TrainerBelief<f64>> {
        match self.vi_cfg.known_consistency {
            Some(c) => TrainerBelief::known(id, c),
            None => TrainerBelief::from_prior(id, self.priors.get(&id).copied().unwrap_or(self.vi_cfg.default_prior)),
        }
    }

    pub fn environment(&self) -> &Environment {
        &self.env
    }

    pub fn arm(&self) -> &ArmSpec {
        &self.arm
    }

    /// Episodes completed so far.
    pub fn episode(&self) -> usize {
        self.result.returns.len()
    }

    pub fn returns(&self) -> &[f64] {
        &self.result.returns
    }

    pub fn ledger(&self) -> &FeedbackLedger {
        &self.ledger
    }

    pub fn q_table(&self) -> &QTable<f64> {
        &self.q
    }

    /// Current posterior mean of a trainer's consistency; the prior mean for
    /// trainers inference has not seen yet.
    pub fn c_mean(&self, id: TrainerId) -> Result<f64> {
        match self.beliefs.get(&id) {
            Some(b) => Ok(b.mean()),
            None => Ok(self.initial_belief(id)?.mean()),
        }
    }

    /// Acts for one episode with the shaped policy and learns from it.
    pub fn play_episode(&mut self) -> Result<Trajectory> {
        let feedback = self.arm.kind.uses_feedback();
        let mut st = self.env.reset(&mut self.env_rng);
        let mut traj = Trajectory::new(self.episode());
        while !st.done {
            let probs = if feedback && !self.ledger.is_empty() {
                let prior = BoltzmannPrior {
                    q: &self.q,
                    tau_b: self.tau_b,
                };
                shaped_policy(&self.ledger, &self.beliefs, &prior, st.state, self.vi_cfg.delta_cap).probs
            } else {
                boltzmann_policy(self.q.row(st.state), self.tau_b).probs
            };
            let a = ActionId(self.agent_rng.categorical(&probs));
            let step = self.env.step(&mut st, a, &mut self.env_rng)?;
            q_update(&mut self.q, &step, &self.cfg.learner);
            traj.push(step);
        }
        self.result.returns.push(traj.total_reward());
        Ok(traj)
    }

    /// The arm's query batch for a finished episode (empty for the baseline).
    pub fn select(&mut self, traj: &Trajectory) -> Result<Vec<Query>> {
        if !self.arm.kind.uses_feedback() {
            self.result.query_counts.push(0);
            return Ok(Vec::new());
        }
        let fused = fused_for_trajectory(
            traj,
            &self.q,
            &self.ledger,
            &self.beliefs,
            &self.cfg.active,
            self.vi_cfg.delta_cap,
        );
        let n = self.cfg.active.queries_per_episode;
        let n_actions = self.env.num_actions();
        let batch = match self.arm.kind {
            ArmKind::AlEntropy => select_queries(traj, &fused, n_actions, n)?,
            _ => random_queries(traj, &fused, n_actions, n, &mut self.query_rng)?,
        };
        self.result.query_counts.push(batch.len());
        for (rank, query) in batch.iter().enumerate() {
            self.result.queries.push(QueryRecord {
                episode: traj.episode_index,
                rank,
                query: *query,
            });
        }
        Ok(batch)
    }

    /// Lets every simulated trainer of the arm answer every query.
    pub fn elicit_simulated(&mut self, queries: &[Query]) -> Result<usize> {
        let Some(oracle) = self.oracle else {
            return Ok(0);
        };
        let mut recorded = 0;
        for query in queries {
            for tr in &self.arm.trainers {
                if let Some(ev) = elicit(tr, oracle, query.state, query.action, &mut self.crowd_rng) {
                    self.ledger.record(&ev);
                    recorded += 1;
                }
            }
        }
        Ok(recorded)
    }

    /// Records an answer from outside the simulated crowd.
    pub fn record(&mut self, event: &FeedbackEvent) -> Result<()> {
        if event.state.0 >= self.env.num_states() || event.action.0 >= self.env.num_actions() {
            return Err(Error::InvalidConfig(format!(
                "feedback for ({}, {}) is outside the environment",
                event.state.0, event.action.0
            )));
        }
        self.ledger.record(event);
        Ok(())
    }

    /// Re-runs inference on everything recorded so far.
    pub fn close_episode(&mut self) -> Result<()> {
        if !self.arm.kind.uses_feedback() {
            return Ok(());
        }
        let episode = self.episode().saturating_sub(1);
        let prior = BoltzmannPrior {
            q: &self.q,
            tau_b: self.tau_b,
        };
        let warm = self.warm_start.then_some(&self.beliefs);
        let out = run_vi(&self.ledger, &self.priors, &prior, &self.vi_cfg, warm)?;
        if !out.converged {
            self.result.vi_capped_episodes += 1;
        }
        self.beliefs = out.beliefs;
        for b in self.beliefs.values() {
            self.result.posteriors.push(PosteriorRecord {
                episode,
                trainer_id: b.trainer_id,
                c_mean: b.mean(),
            });
        }
        Ok(())
    }

    /// Posterior means of every trainer inference knows about.
    pub fn c_means(&self) -> Vec<(TrainerId, f64)> {
        self.beliefs.values().map(|b| (b.trainer_id, b.mean())).collect()
    }

    pub fn finish(mut self) -> TrialResult {
        self.result.feedback_events = self.ledger.total_events();
        self.result.final_c_means = self.c_means();
        self.result.ledger = self.ledger;
        self.result
    }
}

/// Runs one trial of one arm against its simulated crowd.
pub fn run_trial(
    cfg: &ExperimentConfig,
    arm: &ArmSpec,
    trial_index: usize,
    oracle: Option<&Oracle>,
) -> Result<TrialResult> {
    if arm.kind.uses_feedback() && arm.trainers.is_empty() {
        return Err(Error::InvalidConfig(format!("arm {} has no trainers", arm.label)));
    }
    let mut runner = TrialRunner::new(cfg, arm, trial_index, oracle)?;
    for _ in 0..cfg.episodes {
        let traj = runner.play_episode()?;
        let batch = runner.select(&traj)?;
        runner.elicit_simulated(&batch)?;
        runner.close_episode()?;
    }
    Ok(runner.finish())
}
