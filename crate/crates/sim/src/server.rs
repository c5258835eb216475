use std::collections::BTreeMap;
use std::convert::Infallible;
use std::sync::{Arc, Mutex, MutexGuard};
use std::time::Duration;

use axum::body::Body;
use axum::extract::State;
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{delete, get, post};
use axum::{Json, Router};
use intent_core::harmoniser::Decision;
use intent_core::harness::{Status, System};
use intent_core::messaging::encode_line;
use intent_core::requesters::OperatorError;
use serde::{Deserialize, Serialize};
use serde_json::json;
use tokio::net::TcpListener;
use tokio::sync::broadcast;

/// How long `POST /tasks` waits for the harmoniser to decide.
pub const DECISION_TIMEOUT: Duration = Duration::from_secs(10);

struct Inner {
    system: System,
    published: usize,
}

/// Shared handle to the running system and its envelope feed.
#[derive(Clone)]
pub struct Service {
    inner: Arc<Mutex<Inner>>,
    events: broadcast::Sender<String>,
    tick: Duration,
}

impl Service {
    pub fn new(system: System, tick: Duration) -> Self {
        let (events, _) = broadcast::channel(4096);
        Self { inner: Arc::new(Mutex::new(Inner { system, published: 0 })), events, tick }
    }

    fn lock(&self) -> MutexGuard<'_, Inner> {
        self.inner.lock().unwrap_or_else(|p| p.into_inner())
    }

    /// Advances the system one tick and publishes every envelope sent since
    /// the last tick, including operator submissions.
    pub fn tick(&self) {
        let lines: Vec<String> = {
            let mut inner = self.lock();
            inner.system.step();
            let trace = inner.system.bus().trace();
            let lines = trace[inner.published..].iter().map(encode_line).collect();
            inner.published = trace.len();
            lines
        };
        for line in lines {
            let _ = self.events.send(line);
        }
    }

    /// Steps the system forever at the configured rate.
    pub async fn run_clock(self) {
        let mut interval = tokio::time::interval(self.tick);
        interval.set_missed_tick_behavior(tokio::time::MissedTickBehavior::Delay);
        loop {
            interval.tick().await;
            self.tick();
        }
    }
}

#[derive(Debug, Deserialize)]
struct SubmitBody {
    task_name: String,
    priority: i64,
    #[serde(default)]
    slots: BTreeMap<String, String>,
}

#[derive(Debug, Serialize)]
struct SubmitReply {
    request_id: u64,
    decision: Decision,
}

fn operator_error(e: OperatorError) -> Response {
    let (status, code) = match e {
        OperatorError::InvalidPriority(_) => (StatusCode::BAD_REQUEST, "InvalidPriority"),
        OperatorError::InvalidTask(_) => (StatusCode::BAD_REQUEST, "InvalidTask"),
        OperatorError::NotRunning => (StatusCode::CONFLICT, "NotRunning"),
    };
    (status, Json(json!({ "error": code, "message": e.to_string() }))).into_response()
}

async fn submit(State(svc): State<Service>, Json(body): Json<SubmitBody>) -> Response {
    let id = match svc.lock().system.operator_submit(&body.task_name, body.priority, body.slots) {
        Ok(id) => id,
        Err(e) => return operator_error(e),
    };
    let poll = svc.tick.min(Duration::from_millis(20)).max(Duration::from_millis(1));
    let waited = tokio::time::timeout(DECISION_TIMEOUT, async {
        loop {
            if let Some(d) = svc.lock().system.harmoniser().decision_for(id).cloned() {
                return d;
            }
            tokio::time::sleep(poll).await;
        }
    })
    .await;
    match waited {
        Ok(decision) => Json(SubmitReply { request_id: id, decision }).into_response(),
        Err(_) => (
            StatusCode::GATEWAY_TIMEOUT,
            Json(json!({ "error": "Timeout", "request_id": id, "message": "no decision yet" })),
        )
            .into_response(),
    }
}

async fn cancel(State(svc): State<Service>) -> Response {
    match svc.lock().system.operator_cancel() {
        Ok(()) => (StatusCode::ACCEPTED, Json(json!({ "status": "terminating" }))).into_response(),
        Err(e) => operator_error(e),
    }
}

async fn status(State(svc): State<Service>) -> Json<Status> {
    Json(svc.lock().system.status())
}

async fn events(State(svc): State<Service>) -> Response {
    let rx = svc.events.subscribe();
    let stream = futures::stream::unfold(rx, |mut rx| async move {
        loop {
            match rx.recv().await {
                Ok(mut line) => {
                    line.push('\n');
                    return Some((Ok::<_, Infallible>(line), rx));
                }
                Err(broadcast::error::RecvError::Lagged(_)) => continue,
                Err(broadcast::error::RecvError::Closed) => return None,
            }
        }
    });
    ([(header::CONTENT_TYPE, "application/x-ndjson")], Body::from_stream(stream)).into_response()
}

pub fn router(svc: Service) -> Router {
    Router::new()
        .route("/tasks", post(submit))
        .route("/tasks/current", delete(cancel))
        .route("/status", get(status))
        .route("/events", get(events))
        .with_state(svc)
}

/// Serves the operator API on `listener` while the clock steps `system`.
pub async fn serve(listener: TcpListener, system: System, tick: Duration) -> std::io::Result<()> {
    let svc = Service::new(system, tick);
    let clock = tokio::spawn(svc.clone().run_clock());
    let result = axum::serve(listener, router(svc)).await;
    clock.abort();
    result
}
