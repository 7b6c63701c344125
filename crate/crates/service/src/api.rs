//! JSON payloads of the trainer API.

use crowdshape_core::{ActionId, StateId, TrainerId, Verdict};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TicketStatus {
    Pending,
    Answered,
    Expired,
}

/// A state–action pair waiting for human judgement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryTicket {
    pub ticket_id: String,
    pub episode: usize,
    /// Ascii board with the agent and the proposed action marked.
    pub state_render: String,
    pub state: StateId,
    pub action: ActionId,
    pub entropy: f64,
    /// Milliseconds since the Unix epoch.
    pub issued_at: u64,
    pub status: TicketStatus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeedbackRequest {
    pub ticket_id: String,
    pub verdict: Verdict,
    pub session: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeedbackResponse {
    pub accepted: bool,
    pub trainer_c_mean: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainerStatus {
    pub id: TrainerId,
    pub c_mean: f64,
    pub answered: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Status {
    /// Episodes completed.
    pub episode: usize,
    /// Mean return over the trailing smoothing window (0 before the first episode).
    pub mean_return_window: f64,
    pub pending_queries: usize,
    /// Trainers with at least one recorded answer, by id.
    pub trainers: Vec<TrainerStatus>,
    /// Whether every configured episode has been played.
    pub finished: bool,
    /// Why training stopped early, if it did.
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
}
