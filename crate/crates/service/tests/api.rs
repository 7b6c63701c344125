use std::sync::{mpsc, Arc};
use std::time::Duration;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use crowdshape_core::envs::EnvConfig;
use crowdshape_core::harness::{obtain_oracle, ArmKind, ExperimentConfig};
use crowdshape_core::{TrainerId, TrainerProfile, Verdict};
use crowdshape_service::{
    router, AppState, FeedbackRequest, QueryTicket, Service, ServiceOptions, Session, SessionTable, Snapshot, Status,
};
use serde_json::{json, Value};
use tokio::sync::watch;
use tower::ServiceExt;

const WAIT: Duration = Duration::from_secs(60);

async fn call(app: &Router, req: Request<Body>) -> (StatusCode, Value) {
    let resp = app.clone().oneshot(req).await.unwrap();
    let code = resp.status();
    let bytes = axum::body::to_bytes(resp.into_body(), 1 << 20).await.unwrap();
    let body = if bytes.is_empty() {
        Value::Null
    } else {
        serde_json::from_slice(&bytes).unwrap_or_else(|_| Value::String(String::from_utf8_lossy(&bytes).into()))
    };
    (code, body)
}

fn get(uri: &str) -> Request<Body> {
    Request::get(uri).body(Body::empty()).unwrap()
}

fn post_json(body: &Value) -> Request<Body> {
    Request::post("/api/feedback")
        .header("content-type", "application/json")
        .body(Body::from(body.to_string()))
        .unwrap()
}

async fn status(app: &Router) -> Status {
    let (code, body) = call(app, get("/api/status")).await;
    assert_eq!(code, StatusCode::OK);
    serde_json::from_value(body).unwrap()
}

async fn queries(app: &Router, token: &str) -> Vec<QueryTicket> {
    let (code, body) = call(app, get(&format!("/api/queries?session={token}"))).await;
    assert_eq!(code, StatusCode::OK);
    serde_json::from_value(body).unwrap()
}

fn sessions(list: &[(&str, usize)]) -> SessionTable {
    SessionTable::new(
        list.iter()
            .map(|&(t, id)| Session {
                token: t.into(),
                trainer_id: TrainerId(id),
            })
            .collect(),
    )
    .unwrap()
}

/// Humans only, entropy selection, `n` queries per episode.
fn human_config(env: EnvConfig, episodes: usize, n: usize) -> ExperimentConfig {
    let mut cfg = ExperimentConfig {
        env,
        trainers: Vec::new(),
        arms: vec![ArmKind::AlEntropy],
        trials: 1,
        episodes,
        ..ExperimentConfig::default()
    };
    cfg.active.queries_per_episode = n;
    cfg
}

fn taxi(max_steps: usize) -> EnvConfig {
    EnvConfig {
        max_steps: Some(max_steps),
        ..EnvConfig::taxi()
    }
}

#[tokio::test]
async fn fresh_run_reports_nothing_yet() {
    let (_publish, snapshot) = watch::channel(Arc::new(Snapshot::initial()));
    let (tx, rx) = mpsc::channel();
    drop(rx);
    let app = router(AppState::new(sessions(&[("tok", 1)]), snapshot, tx), None);

    let s = status(&app).await;
    assert_eq!((s.episode, s.pending_queries), (0, 0));
    assert!(s.trainers.is_empty());
    assert!(queries(&app, "tok").await.is_empty());

    // no training loop behind this state
    let (code, _) = call(
        &app,
        post_json(&json!({"ticket_id": "e0-q0", "verdict": "right", "session": "tok"})),
    )
    .await;
    assert_eq!(code, StatusCode::SERVICE_UNAVAILABLE);

    let (code, body) = call(&app, get("/")).await;
    assert_eq!(code, StatusCode::OK);
    assert!(body.as_str().unwrap().contains("/api/status"));
}

#[tokio::test]
async fn unknown_sessions_are_rejected() {
    let (_publish, snapshot) = watch::channel(Arc::new(Snapshot::initial()));
    let (tx, _rx) = mpsc::channel();
    let app = router(AppState::new(sessions(&[("tok", 1)]), snapshot, tx), None);
    assert_eq!(call(&app, get("/api/queries")).await.0, StatusCode::UNAUTHORIZED);
    assert_eq!(
        call(&app, get("/api/queries?session=nope")).await.0,
        StatusCode::UNAUTHORIZED
    );
    let (code, body) = call(
        &app,
        post_json(&json!({"ticket_id": "x", "verdict": "right", "session": "nope"})),
    )
    .await;
    assert_eq!(code, StatusCode::UNAUTHORIZED);
    assert!(body["error"].is_string());
}

#[tokio::test(flavor = "multi_thread")]
async fn tickets_are_filtered_per_trainer_and_answers_validated() {
    let cfg = human_config(taxi(40), 2, 3);
    let svc = Service::start(
        cfg,
        ServiceOptions {
            sessions: sessions(&[("alice", 10), ("bob", 11)]),
            ..ServiceOptions::default()
        },
    )
    .unwrap();
    let app = svc.router();
    svc.wait_for(WAIT, |s| s.status.pending_queries == 3)
        .await
        .expect("tickets issued");

    let s = status(&app).await;
    assert_eq!((s.episode, s.pending_queries), (1, 3));
    assert!(s.trainers.is_empty(), "nobody has answered yet");

    let mine = queries(&app, "alice").await;
    assert_eq!(mine.len(), 3);
    assert!(
        mine.windows(2).all(|w| w[0].entropy >= w[1].entropy),
        "highest entropy first"
    );
    for t in &mine {
        let rows: Vec<&str> = t.state_render.lines().collect();
        assert!(!rows.is_empty() && rows.iter().all(|r| r.chars().count() == rows[0].chars().count()));
    }

    let first = &mine[0].ticket_id;
    let (code, body) = call(
        &app,
        post_json(&json!({"ticket_id": first, "verdict": "right", "session": "alice"})),
    )
    .await;
    assert_eq!(code, StatusCode::OK);
    assert_eq!(body["accepted"], json!(true));
    assert!(
        (body["trainer_c_mean"].as_f64().unwrap() - 0.9).abs() < 1e-12,
        "prior mean until inference re-runs"
    );

    assert_eq!(queries(&app, "alice").await.len(), 2);
    assert_eq!(queries(&app, "bob").await.len(), 3);

    let dup = json!({"ticket_id": first, "verdict": "wrong", "session": "alice"});
    assert_eq!(call(&app, post_json(&dup)).await.0, StatusCode::CONFLICT);
    let bad = json!({"ticket_id": first, "verdict": "maybe", "session": "bob"});
    assert_eq!(call(&app, post_json(&bad)).await.0, StatusCode::BAD_REQUEST);
    let extra = json!({"ticket_id": first, "verdict": "right", "session": "bob", "note": 1});
    assert_eq!(call(&app, post_json(&extra)).await.0, StatusCode::BAD_REQUEST);
    let missing = json!({"ticket_id": "e99-q0", "verdict": "right", "session": "bob"});
    assert_eq!(call(&app, post_json(&missing)).await.0, StatusCode::NOT_FOUND);

    let s = status(&app).await;
    assert_eq!(s.trainers.len(), 1);
    assert_eq!((s.trainers[0].id, s.trainers[0].answered), (TrainerId(10), 1));
    assert_eq!(
        s.pending_queries, 3,
        "a ticket stays pending until every session has answered"
    );
}

#[tokio::test(flavor = "multi_thread")]
async fn unanswered_tickets_expire_and_training_moves_on() {
    let cfg = human_config(EnvConfig::frozen_lake(1), 3, 2);
    let svc = Service::start(
        cfg,
        ServiceOptions {
            sessions: sessions(&[("tok", 3)]),
            query_timeout: Duration::from_millis(150),
            ..ServiceOptions::default()
        },
    )
    .unwrap();
    let app = svc.router();
    let done = svc.wait_for(WAIT, |s| s.status.finished).await.expect("run finishes");
    assert_eq!(done.status.episode, 3);
    assert_eq!(done.status.pending_queries, 0);
    assert_eq!(done.status.error, None);

    let late = json!({"ticket_id": "e0-q0", "verdict": "right", "session": "tok"});
    assert_eq!(call(&app, post_json(&late)).await.0, StatusCode::GONE);
    assert!(status(&app).await.trainers.is_empty());
}

#[tokio::test(flavor = "multi_thread")]
async fn simulated_and_human_trainers_share_the_ledger() {
    let mut cfg = human_config(EnvConfig::frozen_lake(1), 4, 2);
    cfg.trainers = vec![TrainerProfile::new(0, 0.9)];
    let svc = Service::start(
        cfg,
        ServiceOptions {
            sessions: sessions(&[("tok", 5)]),
            ..ServiceOptions::default()
        },
    )
    .unwrap();
    let app = svc.router();
    let mut accepted = 0u64;
    loop {
        let s = status(&app).await;
        if s.finished {
            break;
        }
        for t in queries(&app, "tok").await {
            let (code, _) = call(
                &app,
                post_json(&json!({"ticket_id": t.ticket_id, "verdict": "wrong", "session": "tok"})),
            )
            .await;
            if code == StatusCode::OK {
                accepted += 1;
            }
        }
        tokio::time::sleep(Duration::from_millis(2)).await;
    }
    let s = status(&app).await;
    let human = s.trainers.iter().find(|t| t.id == TrainerId(5)).expect("human listed");
    let sim = s
        .trainers
        .iter()
        .find(|t| t.id == TrainerId(0))
        .expect("simulated trainer listed");
    assert_eq!(human.answered, accepted);
    assert!(accepted > 0 && sim.answered > 0);
    assert!(s.trainers.iter().all(|t| (0.0..=1.0).contains(&t.c_mean)));
}

#[tokio::test(flavor = "multi_thread")]
async fn sessions_must_not_shadow_simulated_trainers() {
    let mut cfg = human_config(EnvConfig::frozen_lake(1), 1, 1);
    cfg.trainers = vec![TrainerProfile::new(4, 0.9)];
    let opts = ServiceOptions {
        sessions: sessions(&[("tok", 4)]),
        ..ServiceOptions::default()
    };
    assert!(Service::start(cfg, opts).is_err());
    let baseline_only = ExperimentConfig {
        arms: vec![ArmKind::Baseline],
        ..human_config(EnvConfig::frozen_lake(1), 1, 1)
    };
    assert!(Service::start(baseline_only, ServiceOptions::default()).is_err());
}

/// A scripted trainer answers every query truthfully against the oracle over
/// a five-episode FrozenLake(1) run with two queries per episode.
#[tokio::test(flavor = "multi_thread")]
async fn scripted_trainer_round_trip() {
    let cfg = human_config(EnvConfig::frozen_lake(1), 5, 2);
    let oracle = obtain_oracle(&cfg).unwrap();
    let svc = Service::start(
        cfg,
        ServiceOptions {
            sessions: sessions(&[("ui", 7)]),
            ..ServiceOptions::default()
        },
    )
    .unwrap();
    let app = svc.router();

    let mut accepted = 0u64;
    let mut c_means = vec![0.9];
    let mut last_episode = 0;
    loop {
        let s = status(&app).await;
        if s.episode != last_episode {
            last_episode = s.episode;
            if let Some(t) = s.trainers.iter().find(|t| t.id == TrainerId(7)) {
                c_means.push(t.c_mean);
            }
        }
        if s.finished {
            break;
        }
        for t in queries(&app, "ui").await {
            let verdict = if oracle.best_action(t.state) == t.action {
                Verdict::Right
            } else {
                Verdict::Wrong
            };
            let req = FeedbackRequest {
                ticket_id: t.ticket_id.clone(),
                verdict,
                session: "ui".into(),
            };
            let body = serde_json::to_value(&req).unwrap();
            // what the UI sends must parse back under the strict request schema
            assert_eq!(serde_json::from_value::<FeedbackRequest>(body.clone()).unwrap(), req);
            assert_eq!(body.as_object().unwrap().len(), 3);
            let (code, resp) = call(&app, post_json(&body)).await;
            assert_eq!(code, StatusCode::OK, "{resp}");
            let c = resp["trainer_c_mean"].as_f64().unwrap();
            assert!((0.0..=1.0).contains(&c));
            accepted += 1;
        }
        tokio::time::sleep(Duration::from_millis(2)).await;
    }

    let s = status(&app).await;
    assert_eq!(s.episode, 5);
    let me = s
        .trainers
        .iter()
        .find(|t| t.id == TrainerId(7))
        .expect("trainer listed");
    assert_eq!(me.answered, accepted, "ledger holds exactly the accepted answers");
    assert!(accepted >= 5, "at least one answer per episode, got {accepted}");
    assert!(
        me.c_mean > 0.9,
        "consistency estimate drifts up from the prior: {c_means:?}"
    );
}
