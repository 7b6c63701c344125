//! HTTP routes.

use std::path::PathBuf;
use std::sync::mpsc::Sender;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Query, State};
use axum::http::StatusCode;
use axum::response::{Html, IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::Deserialize;
use tokio::sync::{oneshot, watch};
use tower_http::services::ServeDir;

use crate::api::{ErrorBody, FeedbackRequest, FeedbackResponse, QueryTicket, Status};
use crate::live::{Command, Rejection, Snapshot};
use crate::sessions::SessionTable;

/// Shared handler state: the session table, the latest snapshot and the
/// command channel into the training loop.
#[derive(Clone)]
pub struct AppState {
    sessions: Arc<SessionTable>,
    snapshot: watch::Receiver<Arc<Snapshot>>,
    commands: Sender<Command>,
}

impl AppState {
    pub fn new(sessions: SessionTable, snapshot: watch::Receiver<Arc<Snapshot>>, commands: Sender<Command>) -> Self {
        Self {
            sessions: Arc::new(sessions),
            snapshot,
            commands,
        }
    }

    pub fn snapshot(&self) -> Arc<Snapshot> {
        self.snapshot.borrow().clone()
    }

    pub fn subscribe(&self) -> watch::Receiver<Arc<Snapshot>> {
        self.snapshot.clone()
    }
}

#[derive(Debug)]
pub enum ApiError {
    BadRequest(String),
    UnknownSession,
    UnknownTicket,
    AlreadyAnswered,
    Expired,
    Unavailable(String),
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let (code, msg) = match self {
            Self::BadRequest(m) => (StatusCode::BAD_REQUEST, m),
            Self::UnknownSession => (StatusCode::UNAUTHORIZED, "unknown session".to_string()),
            Self::UnknownTicket => (StatusCode::NOT_FOUND, "unknown ticket".to_string()),
            Self::AlreadyAnswered => (
                StatusCode::CONFLICT,
                "ticket already answered by this trainer".to_string(),
            ),
            Self::Expired => (StatusCode::GONE, "ticket expired".to_string()),
            Self::Unavailable(m) => (StatusCode::SERVICE_UNAVAILABLE, m),
        };
        (code, Json(ErrorBody { error: msg })).into_response()
    }
}

#[derive(Debug, Deserialize)]
struct SessionParam {
    session: Option<String>,
}

async fn queries(
    State(st): State<AppState>,
    Query(p): Query<SessionParam>,
) -> Result<Json<Vec<QueryTicket>>, ApiError> {
    let trainer = p
        .session
        .as_deref()
        .and_then(|t| st.sessions.trainer(t))
        .ok_or(ApiError::UnknownSession)?;
    Ok(Json(st.snapshot().queries_for(trainer)))
}

async fn feedback(State(st): State<AppState>, body: Bytes) -> Result<Json<FeedbackResponse>, ApiError> {
    let req: FeedbackRequest = serde_json::from_slice(&body).map_err(|e| ApiError::BadRequest(e.to_string()))?;
    let trainer = st.sessions.trainer(&req.session).ok_or(ApiError::UnknownSession)?;
    let (reply, answer) = oneshot::channel();
    let cmd = Command::Feedback {
        trainer,
        ticket_id: req.ticket_id,
        verdict: req.verdict,
        reply,
    };
    st.commands
        .send(cmd)
        .map_err(|_| ApiError::Unavailable("training loop has stopped".into()))?;
    match answer.await {
        Ok(Ok(r)) => Ok(Json(r)),
        Ok(Err(Rejection::UnknownTicket)) => Err(ApiError::UnknownTicket),
        Ok(Err(Rejection::AlreadyAnswered)) => Err(ApiError::AlreadyAnswered),
        Ok(Err(Rejection::Expired)) => Err(ApiError::Expired),
        Ok(Err(Rejection::Internal(m))) => Err(ApiError::Unavailable(m)),
        Err(_) => Err(ApiError::Unavailable("training loop has stopped".into())),
    }
}

async fn status(State(st): State<AppState>) -> Json<Status> {
    Json(st.snapshot().status.clone())
}

const PLACEHOLDER: &str = "<!doctype html>
<html><head><meta charset=\"utf-8\"><title>crowdshape</title></head>
<body><h1>crowdshape feedback service</h1>
<p>No trainer UI bundle is being served. The JSON API is available:</p>
<ul>
<li><code>GET /api/queries?session=&lt;token&gt;</code></li>
<li><code>POST /api/feedback</code> with <code>{ticket_id, verdict, session}</code></li>
<li><code>GET /api/status</code></li>
</ul></body></html>
";

async fn placeholder() -> Html<&'static str> {
    Html(PLACEHOLDER)
}

/// The API router; static files come from `ui_dir` when it exists, otherwise
/// `/` serves a short placeholder page.
pub fn router(state: AppState, ui_dir: Option<PathBuf>) -> Router {
    let api = Router::new()
        .route("/api/queries", get(queries))
        .route("/api/feedback", post(feedback))
        .route("/api/status", get(status))
        .with_state(state);
    match ui_dir.filter(|d| d.is_dir()) {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api.route("/", get(placeholder)),
    }
}
