//! Reinforcement learning shaped by a crowd of unreliable trainers.
//!
//! Trainer consistency is inferred online with variational inference, and
//! feedback is requested on the state–action pairs whose optimality is most
//! uncertain (one-vs-all entropy of the fused feedback/trajectory posterior).
//! The numeric core is generic over [`num::Real`] (`f32` or `f64`); the
//! aliases below fix it to `f64`, which the experiment harness uses.

// `!(x > 0)` is how validation rejects NaN along with non-positive values
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod active;
pub mod crowd_vi;
pub mod domain;
pub mod envs;
pub mod error;
pub mod feedback;
pub mod harness;
pub mod learner;
pub mod num;
pub mod rng;
pub mod special;

pub use domain::{ActionId, StateId, TrainerId, Trajectory, Transition};
pub use envs::{EnvConfig, EnvKind, Environment};
pub use error::{Error, Result};
pub use feedback::{FeedbackEvent, FeedbackLedger, Oracle, TrainerProfile, Verdict};
pub use num::Real;
pub use rng::{derive_stream, RngStream};

pub type QTable = learner::QTable<f64>;
pub type LearnerConfig = learner::LearnerConfig<f64>;
pub type PolicyDistribution = learner::PolicyDistribution<f64>;
pub type BetaParams = crowd_vi::BetaParams<f64>;
pub type TrainerBelief = crowd_vi::TrainerBelief<f64>;
pub type Beliefs = crowd_vi::Beliefs<f64>;
pub type OptimalityPosterior = crowd_vi::OptimalityPosterior<f64>;
pub type ViConfig = crowd_vi::ViConfig<f64>;
pub type FusedPosterior = active::FusedPosterior<f64>;
pub type QValueBelief = active::QValueBelief<f64>;
