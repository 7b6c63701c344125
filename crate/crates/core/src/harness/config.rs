use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::active::ActiveConfig;
use crate::crowd_vi::{BetaParams, ViConfig};
use crate::domain::TrainerId;
use crate::envs::EnvConfig;
use crate::error::{Error, Result};
use crate::feedback::{default_crowd, OracleConfig, TrainerProfile};
use crate::learner::LearnerConfig;

/// Experimental arm.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArmKind {
    /// Boltzmann Q-learning, no feedback.
    Baseline,
    /// Uniformly sampled queries, consistency estimated.
    AlRandom,
    /// Entropy-ranked queries, consistency estimated.
    AlEntropy,
    /// Uniformly sampled queries, consistency assumed known (`fixed_c_assumed`).
    FixedC,
}

impl ArmKind {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Baseline => "baseline",
            Self::AlRandom => "al_random",
            Self::AlEntropy => "al_entropy",
            Self::FixedC => "fixed_c",
        }
    }

    pub fn uses_feedback(self) -> bool {
        self != Self::Baseline
    }
}

impl std::fmt::Display for ArmKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for ArmKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "baseline" => Ok(Self::Baseline),
            "al_random" => Ok(Self::AlRandom),
            "al_entropy" => Ok(Self::AlEntropy),
            "fixed_c" => Ok(Self::FixedC),
            other => Err(Error::Parse(format!("unknown arm {other:?}"))),
        }
    }
}

/// One concrete arm to run: a kind plus the crowd it queries.
#[derive(Debug, Clone, PartialEq)]
pub struct ArmSpec {
    pub label: String,
    pub kind: ArmKind,
    pub trainers: Vec<TrainerProfile>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriorConfig {
    pub alpha: f64,
    pub beta: f64,
}

impl Default for PriorConfig {
    fn default() -> Self {
        Self {
            alpha: 90.0,
            beta: 10.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ViSettings {
    pub i_max: usize,
    pub convergence_tol: f64,
    pub delta_cap: f64,
    /// Also start each episode's inference from the previous episode's
    /// beliefs, keeping whichever of that and the cold start has the larger ELBO.
    pub warm_start: bool,
}

impl Default for ViSettings {
    fn default() -> Self {
        let d = ViConfig::<f64>::default();
        Self {
            i_max: d.i_max,
            convergence_tol: d.convergence_tol,
            delta_cap: d.delta_cap,
            warm_start: true,
        }
    }
}

/// Everything needed to reproduce an experiment; deserialised from JSON.
///
/// Missing keys take the gridworld defaults (α 0.05, γ 0.9, τ_b 1.5, prior
/// Beta(90, 10), trainers C = [0.9, 0.8, 0.6, 0.3], 50 trials × 1000 episodes,
/// 500 steps per episode).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub env: EnvConfig,
    pub learner: LearnerConfig<f64>,
    pub active: ActiveConfig,
    pub trainers: Vec<TrainerProfile>,
    pub prior: PriorConfig,
    pub vi: ViSettings,
    pub oracle: OracleConfig,
    /// Load the oracle from a dump instead of training it.
    pub oracle_path: Option<PathBuf>,
    pub arms: Vec<ArmKind>,
    pub trials: usize,
    pub episodes: usize,
    /// Agent step limit per episode (the environment's own `max_steps` wins if set).
    pub max_steps: usize,
    pub base_seed: u64,
    /// Consistency the `fixed_c` arm assumes for every trainer.
    pub fixed_c_assumed: Option<f64>,
    /// When set, every arm is run once per value against a single simulated
    /// trainer of that true consistency, replacing `trainers`.
    pub consistency_sweep: Option<Vec<f64>>,
    /// Trailing moving-average window for smoothed curves.
    pub smoothing_window: usize,
    /// Worker threads for trials; 0 lets the pool decide.
    pub threads: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            env: EnvConfig::pacman(),
            learner: LearnerConfig::default(),
            active: ActiveConfig::default(),
            trainers: default_crowd(),
            prior: PriorConfig::default(),
            vi: ViSettings::default(),
            oracle: OracleConfig::default(),
            oracle_path: None,
            arms: vec![ArmKind::Baseline, ArmKind::AlRandom, ArmKind::AlEntropy],
            trials: 50,
            episodes: 1000,
            max_steps: 500,
            base_seed: 0,
            fixed_c_assumed: Some(0.8),
            consistency_sweep: None,
            smoothing_window: 25,
            threads: 0,
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a JSON config; a relative `oracle_path` is resolved against the file's directory.
    pub fn from_file(path: &Path) -> Result<Self> {
        let mut cfg = Self::from_json(&std::fs::read_to_string(path)?)?;
        if let (Some(p), Some(dir)) = (&cfg.oracle_path, path.parent()) {
            if p.is_relative() {
                cfg.oracle_path = Some(dir.join(p));
            }
        }
        Ok(cfg)
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serialises")
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 || self.episodes == 0 {
            return Err(Error::InvalidConfig(
                "trials and episodes must both be at least 1".into(),
            ));
        }
        if self.max_steps == 0 {
            return Err(Error::InvalidConfig("max_steps must be positive".into()));
        }
        if self.arms.is_empty() {
            return Err(Error::InvalidConfig("at least one arm is required".into()));
        }
        let mut arms = self.arms.clone();
        arms.sort();
        arms.dedup();
        if arms.len() != self.arms.len() {
            return Err(Error::InvalidConfig("arms must not repeat".into()));
        }
        self.learner.validate()?;
        self.active.validate()?;
        self.vi_config(None)?.validate()?;
        let mut ids: Vec<_> = self.trainers.iter().map(|t| t.trainer_id).collect();
        ids.sort();
        ids.dedup();
        if ids.len() != self.trainers.len() {
            return Err(Error::InvalidConfig("trainer ids must be unique".into()));
        }
        for t in &self.trainers {
            t.validate()?;
        }
        if self.arms.contains(&ArmKind::FixedC) {
            match self.fixed_c_assumed {
                Some(c) if c > 0.0 && c < 1.0 => {}
                other => {
                    return Err(Error::InvalidConfig(format!(
                        "fixed_c arm needs fixed_c_assumed in (0, 1), got {other:?}"
                    )))
                }
            }
        }
        if let Some(sweep) = &self.consistency_sweep {
            if sweep.is_empty() || sweep.iter().any(|c| !(0.0..=1.0).contains(c)) {
                return Err(Error::InvalidConfig(
                    "consistency_sweep values must lie in [0, 1]".into(),
                ));
            }
        }
        Ok(())
    }

    /// The environment agents train in.
    pub fn agent_env(&self) -> EnvConfig {
        EnvConfig {
            max_steps: self.env.max_steps.or(Some(self.max_steps)),
            ..self.env.clone()
        }
    }

    pub fn prior_params(&self) -> Result<BetaParams<f64>> {
        BetaParams::new(self.prior.alpha, self.prior.beta)
    }

    pub fn vi_config(&self, known: Option<f64>) -> Result<ViConfig<f64>> {
        Ok(ViConfig {
            i_max: self.vi.i_max,
            convergence_tol: self.vi.convergence_tol,
            delta_cap: self.vi.delta_cap,
            default_prior: self.prior_params()?,
            known_consistency: known,
        })
    }

    pub fn priors_for(&self, trainers: &[TrainerProfile]) -> Result<BTreeMap<TrainerId, BetaParams<f64>>> {
        let p = self.prior_params()?;
        Ok(trainers.iter().map(|t| (t.trainer_id, p)).collect())
    }

    /// Expands `arms` (and `consistency_sweep`) into the concrete arms to run.
    pub fn arm_specs(&self) -> Vec<ArmSpec> {
        match &self.consistency_sweep {
            None => self
                .arms
                .iter()
                .map(|&kind| ArmSpec {
                    label: kind.to_string(),
                    kind,
                    trainers: self.trainers.clone(),
                })
                .collect(),
            Some(sweep) => {
                let participation = self.trainers.first().map_or(1.0, |t| t.participation_rate);
                let mut out = Vec::new();
                for &kind in &self.arms {
                    for &c in sweep {
                        out.push(ArmSpec {
                            label: format!("{kind}@{c}"),
                            kind,
                            trainers: vec![TrainerProfile {
                                participation_rate: participation,
                                ..TrainerProfile::new(0, c)
                            }],
                        });
                    }
                }
                out
            }
        }
    }
}
