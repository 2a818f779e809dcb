//! HTTP service. Requests for the same (agent, room) pair queue on a fair
//! async mutex, so they reach the kernel in arrival order; other rooms run
//! in parallel on the blocking pool.

use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::{Arc, Mutex};

use agentos_core::memory::RecordFilter;
use agentos_core::{visible_replies, AgentReply, RuntimeError};
use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use tower_http::services::ServeDir;

use crate::agents::Fleet;

pub const DEFAULT_MEMORY_COUNT: usize = 20;

type Lane = Arc<tokio::sync::Mutex<()>>;

#[derive(Clone)]
pub struct Gateway {
    fleet: Arc<Fleet>,
    lanes: Arc<Mutex<HashMap<(String, String), Lane>>>,
}

impl Gateway {
    pub fn new(fleet: Fleet) -> Self {
        Self {
            fleet: Arc::new(fleet),
            lanes: Arc::default(),
        }
    }

    pub fn fleet(&self) -> &Fleet {
        &self.fleet
    }

    fn lane(&self, agent: &str, room: &str) -> Lane {
        self.lanes
            .lock()
            .unwrap()
            .entry((agent.to_owned(), room.to_owned()))
            .or_default()
            .clone()
    }

    pub fn router(self, media_dir: PathBuf) -> Router {
        Router::new()
            .route("/health", get(health))
            .route("/agents", get(list_agents))
            .route("/agents/{id}/message", post(post_message))
            .route("/agents/{id}/memories", get(memories))
            .nest_service("/media", ServeDir::new(media_dir))
            .with_state(self)
    }
}

#[derive(Debug, Serialize)]
struct Violation {
    path: &'static str,
    message: String,
}

enum ApiError {
    NotFound(String),
    BadRequest(Vec<Violation>),
    Internal(String),
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        match self {
            ApiError::NotFound(id) => (
                StatusCode::NOT_FOUND,
                Json(json!({"error": "unknown agent", "agentId": id})),
            )
                .into_response(),
            ApiError::BadRequest(violations) => (
                StatusCode::BAD_REQUEST,
                Json(json!({"error": "malformed request", "violations": violations})),
            )
                .into_response(),
            ApiError::Internal(detail) => {
                let error_id = uuid::Uuid::new_v4().to_string();
                tracing::error!(%error_id, %detail, "request failed");
                (
                    StatusCode::INTERNAL_SERVER_ERROR,
                    Json(json!({"error": "internal error", "errorId": error_id})),
                )
                    .into_response()
            }
        }
    }
}

fn bad(path: &'static str, message: impl Into<String>) -> ApiError {
    ApiError::BadRequest(vec![Violation {
        path,
        message: message.into(),
    }])
}

async fn health() -> Json<Value> {
    Json(json!({"status": "ok"}))
}

async fn list_agents(State(gw): State<Gateway>) -> Json<Value> {
    let agents: Vec<Value> = gw
        .fleet
        .agents
        .iter()
        .map(|a| json!({"id": a.agent_id(), "name": a.agent_name()}))
        .collect();
    Json(Value::Array(agents))
}

/// Field-level checks so a bad body gets every violation at once.
fn parse_message(body: &[u8]) -> Result<(String, String, String), ApiError> {
    let raw: Value = serde_json::from_slice(body).map_err(|e| bad("", format!("invalid JSON: {e}")))?;
    if !raw.is_object() {
        return Err(bad("", "expected a JSON object"));
    }
    let mut violations = Vec::new();
    let mut string_field = |path: &'static str, v: Option<&Value>, required: bool| match v {
        Some(Value::String(s)) => Some(s.clone()),
        None | Some(Value::Null) if !required => None,
        None => {
            violations.push(Violation { path, message: "is required".into() });
            None
        }
        Some(_) => {
            violations.push(Violation { path, message: "must be a string".into() });
            None
        }
    };
    let user = string_field("userId", raw.get("userId"), true);
    let room = string_field("roomId", raw.get("roomId"), false);
    let text = string_field("text", raw.get("text"), true);
    if let Some(u) = &user {
        if u.trim().is_empty() {
            violations.push(Violation { path: "userId", message: "must not be empty".into() });
        }
    }
    if let Some(t) = &text {
        if t.trim().is_empty() {
            violations.push(Violation { path: "text", message: "must not be empty".into() });
        }
    }
    if !violations.is_empty() {
        return Err(ApiError::BadRequest(violations));
    }
    let user = user.unwrap_or_default();
    let room = room
        .filter(|r| !r.trim().is_empty())
        .unwrap_or_else(|| format!("web:{user}"));
    Ok((user, room, text.unwrap_or_default()))
}

/// Replies as sent on the wire: object keys sorted, IGNORE replies dropped.
pub fn canonical_replies(replies: &[AgentReply]) -> Value {
    // serde_json::Map is ordered by key, which gives the canonical form
    serde_json::to_value(visible_replies(replies)).expect("replies serialize")
}

async fn post_message(
    State(gw): State<Gateway>,
    Path(id): Path<String>,
    body: Bytes,
) -> Result<Json<Value>, ApiError> {
    let rt = gw.fleet.find(&id).cloned().ok_or(ApiError::NotFound(id.clone()))?;
    let (user, room, text) = parse_message(&body)?;
    let lane = gw.lane(&id, &room);
    let _turn = lane.lock_owned().await;
    let result = tokio::task::spawn_blocking(move || {
        let message = rt.new_message(&user, &room, &text);
        rt.process_message(message)
    })
    .await
    .map_err(|e| ApiError::Internal(format!("worker panicked: {e}")))?;
    match result {
        Ok(replies) => Ok(Json(canonical_replies(&replies))),
        Err(RuntimeError::InvalidMessage(m)) => Err(bad("text", m)),
        Err(e) => Err(ApiError::Internal(e.to_string())),
    }
}

#[derive(Debug, Deserialize)]
#[serde(rename_all = "camelCase")]
struct MemoryQuery {
    room_id: Option<String>,
    count: Option<String>,
}

async fn memories(
    State(gw): State<Gateway>,
    Path(id): Path<String>,
    Query(q): Query<MemoryQuery>,
) -> Result<Json<Value>, ApiError> {
    let rt = gw.fleet.find(&id).cloned().ok_or(ApiError::NotFound(id))?;
    let room = q
        .room_id
        .filter(|r| !r.is_empty())
        .ok_or_else(|| bad("roomId", "is required"))?;
    let count = match q.count {
        None => DEFAULT_MEMORY_COUNT,
        Some(c) => c
            .trim()
            .parse()
            .map_err(|_| bad("count", "must be a non-negative integer"))?,
    };
    let records = tokio::task::spawn_blocking(move || {
        let mut all = rt.store().list(&RecordFilter::room(room));
        let skip = all.len().saturating_sub(count);
        all.drain(..skip);
        all
    })
    .await
    .map_err(|e| ApiError::Internal(e.to_string()))?;
    let out: Vec<Value> = records
        .into_iter()
        .map(|r| {
            let mut v = serde_json::to_value(r).expect("record serializes");
            if let Some(obj) = v.as_object_mut() {
                obj.remove("embedding");
            }
            v
        })
        .collect();
    Ok(Json(Value::Array(out)))
}
