//! The training loop behind the API.
//!
//! One thread owns the learner and the ticket book; HTTP handlers reach it
//! only through [`Command`]s and read the [`Snapshot`] it publishes after
//! every change.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::mpsc::{Receiver, RecvTimeoutError, TryRecvError};
use std::sync::Arc;
use std::time::{Duration, Instant, SystemTime, UNIX_EPOCH};

use crowdshape_core::active::Query;
use crowdshape_core::harness::{ArmSpec, ExperimentConfig, TrialRunner};
use crowdshape_core::{FeedbackEvent, Oracle, TrainerId, Verdict};
use tokio::sync::{oneshot, watch};

use crate::api::{FeedbackResponse, QueryTicket, Status, TicketStatus, TrainerStatus};

/// Why an answer was turned down.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Rejection {
    UnknownTicket,
    AlreadyAnswered,
    Expired,
    Internal(String),
}

#[derive(Debug)]
pub enum Command {
    Feedback {
        trainer: TrainerId,
        ticket_id: String,
        verdict: Verdict,
        reply: oneshot::Sender<Result<FeedbackResponse, Rejection>>,
    },
}

/// A pending ticket and the trainers who have already answered it.
#[derive(Debug, Clone, PartialEq)]
pub struct OpenTicket {
    pub ticket: QueryTicket,
    pub answered_by: BTreeSet<TrainerId>,
}

/// Consistent view of the run at one moment.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub status: Status,
    /// Pending tickets, highest entropy first.
    pub open: Vec<OpenTicket>,
}

impl Snapshot {
    pub fn initial() -> Self {
        Self {
            status: Status {
                episode: 0,
                mean_return_window: 0.0,
                pending_queries: 0,
                trainers: Vec::new(),
                finished: false,
                error: None,
            },
            open: Vec::new(),
        }
    }

    /// Pending tickets `trainer` has not answered yet, highest entropy first.
    pub fn queries_for(&self, trainer: TrainerId) -> Vec<QueryTicket> {
        self.open
            .iter()
            .filter(|t| !t.answered_by.contains(&trainer))
            .map(|t| t.ticket.clone())
            .collect()
    }
}

pub(crate) struct LoopSetup {
    pub cfg: ExperimentConfig,
    pub arm: ArmSpec,
    pub oracle: Option<Oracle>,
    pub humans: BTreeSet<TrainerId>,
    pub query_timeout: Duration,
}

struct Book {
    tickets: BTreeMap<String, OpenTicket>,
    humans: BTreeSet<TrainerId>,
}

impl Book {
    fn pending(&self) -> impl Iterator<Item = &OpenTicket> {
        self.tickets
            .values()
            .filter(|t| t.ticket.status == TicketStatus::Pending)
    }

    fn has_pending(&self) -> bool {
        self.pending().next().is_some()
    }

    fn expire_pending(&mut self) {
        for t in self.tickets.values_mut() {
            if t.ticket.status == TicketStatus::Pending {
                t.ticket.status = TicketStatus::Expired;
            }
        }
    }
}

fn now_ms() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0)
}

type Reply = (
    oneshot::Sender<Result<FeedbackResponse, Rejection>>,
    Result<FeedbackResponse, Rejection>,
);

/// Applies a command; the reply is returned rather than sent so the caller
/// can publish the new snapshot first.
fn handle(cmd: Command, runner: &mut TrialRunner<'_>, book: &mut Book) -> Reply {
    let Command::Feedback {
        trainer,
        ticket_id,
        verdict,
        reply,
    } = cmd;
    let outcome = (|| {
        let t = book.tickets.get_mut(&ticket_id).ok_or(Rejection::UnknownTicket)?;
        if t.answered_by.contains(&trainer) {
            return Err(Rejection::AlreadyAnswered);
        }
        if t.ticket.status != TicketStatus::Pending {
            return Err(Rejection::Expired);
        }
        runner
            .record(&FeedbackEvent {
                trainer_id: trainer,
                state: t.ticket.state,
                action: t.ticket.action,
                verdict,
            })
            .map_err(|e| Rejection::Internal(e.to_string()))?;
        t.answered_by.insert(trainer);
        if book.humans.is_subset(&t.answered_by) {
            t.ticket.status = TicketStatus::Answered;
        }
        let trainer_c_mean = runner.c_mean(trainer).map_err(|e| Rejection::Internal(e.to_string()))?;
        Ok(FeedbackResponse {
            accepted: true,
            trainer_c_mean,
        })
    })();
    (reply, outcome)
}

fn respond((reply, outcome): Reply) {
    // the requester may have gone away; nothing to do then
    let _ = reply.send(outcome);
}

fn snapshot(runner: &TrialRunner<'_>, book: &Book, window: usize, finished: bool, error: Option<String>) -> Snapshot {
    let returns = runner.returns();
    let tail = &returns[returns.len().saturating_sub(window.max(1))..];
    let mean_return_window = if tail.is_empty() {
        0.0
    } else {
        tail.iter().sum::<f64>() / tail.len() as f64
    };
    let ledger = runner.ledger();
    let trainers = ledger
        .trainers()
        .filter_map(|id| {
            Some(TrainerStatus {
                id,
                c_mean: runner.c_mean(id).ok()?,
                answered: ledger.total_for(id),
            })
        })
        .collect();
    let mut open: Vec<OpenTicket> = book.pending().cloned().collect();
    open.sort_by(|a, b| b.ticket.entropy.total_cmp(&a.ticket.entropy));
    Snapshot {
        status: Status {
            episode: runner.episode(),
            mean_return_window,
            pending_queries: open.len(),
            trainers,
            finished,
            error,
        },
        open,
    }
}

fn issue(runner: &TrialRunner<'_>, book: &mut Book, episode: usize, batch: &[Query]) {
    let issued_at = now_ms();
    for (rank, q) in batch.iter().enumerate() {
        let ticket_id = format!("e{episode}-q{rank}");
        let ticket = QueryTicket {
            ticket_id: ticket_id.clone(),
            episode,
            state_render: runner.environment().render(q.state, Some(q.action)),
            state: q.state,
            action: q.action,
            entropy: q.entropy,
            issued_at,
            status: TicketStatus::Pending,
        };
        book.tickets.insert(
            ticket_id,
            OpenTicket {
                ticket,
                answered_by: BTreeSet::new(),
            },
        );
    }
}

/// Plays every episode, waiting at each boundary (at most `query_timeout`)
/// for the human trainers, then keeps answering commands until every sender
/// is dropped.
pub(crate) fn run_loop(setup: LoopSetup, commands: Receiver<Command>, publish: watch::Sender<Arc<Snapshot>>) {
    let LoopSetup {
        cfg,
        arm,
        oracle,
        humans,
        query_timeout,
    } = setup;
    let window = cfg.smoothing_window;
    let mut book = Book {
        tickets: BTreeMap::new(),
        humans,
    };
    let mut runner = match TrialRunner::new(&cfg, &arm, 0, oracle.as_ref()) {
        Ok(r) => r,
        Err(e) => {
            let mut snap = Snapshot::initial();
            snap.status.finished = true;
            snap.status.error = Some(e.to_string());
            let _ = publish.send(Arc::new(snap));
            drain_after_failure(commands);
            return;
        }
    };
    let send = |runner: &TrialRunner<'_>, book: &Book, finished: bool, error: Option<String>| {
        let _ = publish.send(Arc::new(snapshot(runner, book, window, finished, error)));
    };
    send(&runner, &book, false, None);

    let mut error = None;
    let mut senders_alive = true;
    for _ in 0..cfg.episodes {
        loop {
            match commands.try_recv() {
                Ok(cmd) => {
                    let r = handle(cmd, &mut runner, &mut book);
                    send(&runner, &book, false, None);
                    respond(r);
                }
                Err(TryRecvError::Empty) => break,
                Err(TryRecvError::Disconnected) => {
                    senders_alive = false;
                    break;
                }
            }
        }
        let step = (|| -> crowdshape_core::Result<()> {
            let episode = runner.episode();
            let traj = runner.play_episode()?;
            let batch = runner.select(&traj)?;
            runner.elicit_simulated(&batch)?;
            if !book.humans.is_empty() && !batch.is_empty() && senders_alive {
                issue(&runner, &mut book, episode, &batch);
                send(&runner, &book, false, None);
                let deadline = Instant::now() + query_timeout;
                while book.has_pending() {
                    let left = deadline.saturating_duration_since(Instant::now());
                    match commands.recv_timeout(left) {
                        Ok(cmd) => {
                            let r = handle(cmd, &mut runner, &mut book);
                            send(&runner, &book, false, None);
                            respond(r);
                        }
                        Err(RecvTimeoutError::Timeout) => break,
                        Err(RecvTimeoutError::Disconnected) => {
                            senders_alive = false;
                            break;
                        }
                    }
                }
                book.expire_pending();
            }
            runner.close_episode()
        })();
        if let Err(e) = step {
            error = Some(e.to_string());
            break;
        }
        send(&runner, &book, false, None);
    }
    send(&runner, &book, true, error.clone());

    while let Ok(cmd) = commands.recv() {
        let r = handle(cmd, &mut runner, &mut book);
        send(&runner, &book, true, error.clone());
        respond(r);
    }
}

fn drain_after_failure(commands: Receiver<Command>) {
    while let Ok(Command::Feedback { reply, .. }) = commands.recv() {
        let _ = reply.send(Err(Rejection::Internal("training failed to start".into())));
    }
}
