//! Live feedback service: human trainers answer the agent's active queries
//! over a small JSON API while training runs.
//!
//! Training runs on its own thread and is the only writer. After every
//! episode it issues tickets for the selected state–action pairs, waits up
//! to the query timeout for every session to answer, expires the rest and
//! re-runs inference. Simulated trainers from the config answer alongside the
//! humans and are treated identically.

pub mod api;
pub mod live;
pub mod routes;
pub mod sessions;

use std::path::PathBuf;
use std::sync::{mpsc, Arc};
use std::thread::JoinHandle;
use std::time::Duration;

use crowdshape_core::harness::{obtain_oracle, ArmKind, ArmSpec, ExperimentConfig};
use tokio::sync::watch;

pub use api::{FeedbackRequest, FeedbackResponse, QueryTicket, Status, TicketStatus, TrainerStatus};
pub use live::Snapshot;
pub use routes::{router, AppState};
pub use sessions::{Session, SessionTable};

pub const DEFAULT_QUERY_TIMEOUT: Duration = Duration::from_secs(30);

#[derive(Debug, thiserror::Error)]
pub enum ServiceError {
    #[error("sessions: {0}")]
    Sessions(String),
    #[error(transparent)]
    Core(#[from] crowdshape_core::Error),
    #[error("{0}")]
    Config(String),
}

#[derive(Debug, Clone)]
pub struct ServiceOptions {
    pub query_timeout: Duration,
    pub sessions: SessionTable,
    /// Query selection; defaults to `al_entropy` if the config lists it,
    /// else the config's first feedback arm.
    pub arm: Option<ArmKind>,
    /// Built trainer UI bundle to serve at `/`.
    pub ui_dir: Option<PathBuf>,
}

impl Default for ServiceOptions {
    fn default() -> Self {
        Self {
            query_timeout: DEFAULT_QUERY_TIMEOUT,
            sessions: SessionTable::default(),
            arm: None,
            ui_dir: None,
        }
    }
}

/// A running training loop and the handler state that talks to it.
pub struct Service {
    state: AppState,
    ui_dir: Option<PathBuf>,
    /// Ends once every command sender (every router clone) is dropped.
    _worker: JoinHandle<()>,
}

impl Service {
    /// Validates the setup and starts training (trial 0 of the config's seeds).
    pub fn start(cfg: ExperimentConfig, opts: ServiceOptions) -> Result<Self, ServiceError> {
        cfg.validate()?;
        let kind = match opts.arm {
            Some(k) => k,
            None if cfg.arms.contains(&ArmKind::AlEntropy) => ArmKind::AlEntropy,
            None => cfg
                .arms
                .iter()
                .copied()
                .find(|a| a.uses_feedback())
                .ok_or_else(|| ServiceError::Config("serving needs a feedback arm".into()))?,
        };
        if !kind.uses_feedback() {
            return Err(ServiceError::Config(format!("arm {kind} takes no feedback")));
        }
        let humans = opts.sessions.trainers();
        if let Some(t) = cfg.trainers.iter().find(|t| humans.contains(&t.trainer_id)) {
            return Err(ServiceError::Sessions(format!(
                "trainer id {} belongs to both a session and a simulated trainer",
                t.trainer_id.0
            )));
        }
        let arm = ArmSpec {
            label: kind.to_string(),
            kind,
            trainers: cfg.trainers.clone(),
        };
        let oracle = if arm.trainers.is_empty() {
            None
        } else {
            Some(obtain_oracle(&cfg)?)
        };
        let (tx, rx) = mpsc::channel();
        let (publish, snapshot) = watch::channel(Arc::new(Snapshot::initial()));
        let setup = live::LoopSetup {
            cfg,
            arm,
            oracle,
            humans,
            query_timeout: opts.query_timeout,
        };
        let worker = std::thread::Builder::new()
            .name("training".into())
            .spawn(move || live::run_loop(setup, rx, publish))
            .map_err(|e| ServiceError::Config(format!("cannot start training thread: {e}")))?;
        Ok(Self {
            state: AppState::new(opts.sessions, snapshot, tx),
            ui_dir: opts.ui_dir,
            _worker: worker,
        })
    }

    pub fn router(&self) -> axum::Router {
        router(self.state.clone(), self.ui_dir.clone())
    }

    pub fn snapshot(&self) -> Arc<Snapshot> {
        self.state.snapshot()
    }

    /// Waits until a published snapshot satisfies `pred`, or `timeout` passes.
    pub async fn wait_for(&self, timeout: Duration, mut pred: impl FnMut(&Snapshot) -> bool) -> Option<Arc<Snapshot>> {
        let mut rx = self.state.subscribe();
        let waited = tokio::time::timeout(timeout, rx.wait_for(|s| pred(s))).await;
        match waited {
            Ok(Ok(s)) => Some(s.clone()),
            _ => None,
        }
    }

    /// Serves the API until the listener fails.
    pub async fn serve(self, listener: tokio::net::TcpListener) -> std::io::Result<()> {
        axum::serve(listener, self.router()).await
    }
}
