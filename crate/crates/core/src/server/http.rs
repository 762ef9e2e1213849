//! JSON over HTTP.

use super::store::TaskStore;
use super::ServerError;
use crate::cluster_graph::NodeId;
use crate::formats::TaskDescriptor;
use crate::geometry::Point;
use crate::ops::EditOp;
use crate::stroke_geometry::Stroke;
use axum::body::Bytes;
use axum::extract::{Path, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::de::DeserializeOwned;
use serde::Deserialize;
use serde_json::json;
use std::sync::Arc;

type Shared = State<Arc<TaskStore>>;

impl IntoResponse for ServerError {
    fn into_response(self) -> Response {
        let status =
            StatusCode::from_u16(self.status()).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
        if status.is_server_error() {
            tracing::error!(error = %self, "request failed");
        }
        (status, Json(self.body())).into_response()
    }
}

/// Parses a JSON body; an empty body reads as `{}`.
fn parse_body<T: DeserializeOwned>(body: &Bytes) -> Result<T, ServerError> {
    let raw: &[u8] = if body.iter().all(u8::is_ascii_whitespace) {
        b"{}"
    } else {
        body
    };
    serde_json::from_slice(raw)
        .map_err(|e| ServerError::BadRequest(format!("invalid request body: {e}")))
}

pub fn router(store: Arc<TaskStore>) -> Router {
    Router::new()
        .route("/health", get(|| async { Json(json!({ "status": "ok" })) }))
        .route("/tasks", post(create_task).get(list_tasks))
        .route("/tasks/{id}", get(get_task))
        .route("/tasks/{id}/sessions", post(open_session))
        .route("/sessions/{id}", get(snapshot))
        .route("/sessions/{id}/ops", post(apply_op))
        .route("/sessions/{id}/undo", post(undo))
        .route("/sessions/{id}/redo", post(redo))
        .route("/sessions/{id}/result", get(result))
        .route("/sessions/{id}/layout", get(layout))
        .route("/sessions/{id}/drag", post(drag))
        .route("/sessions/{id}/stroke", post(stroke))
        .with_state(store)
}

/// Serves until ctrl-c.
pub async fn serve(
    listener: tokio::net::TcpListener,
    store: Arc<TaskStore>,
) -> std::io::Result<()> {
    axum::serve(listener, router(store))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}

async fn create_task(State(store): Shared, body: Bytes) -> Result<Response, ServerError> {
    let text = std::str::from_utf8(&body)
        .map_err(|_| ServerError::BadRequest("body is not UTF-8".into()))?;
    let desc = TaskDescriptor::from_json(text)?;
    let (id, created) = store.create_task(desc)?;
    let status = if created {
        StatusCode::CREATED
    } else {
        StatusCode::OK
    };
    Ok((status, Json(json!({ "task_id": id, "created": created }))).into_response())
}

async fn list_tasks(State(store): Shared) -> impl IntoResponse {
    Json(json!({ "tasks": store.list_tasks() }))
}

async fn get_task(
    State(store): Shared,
    Path(id): Path<String>,
) -> Result<Json<TaskDescriptor>, ServerError> {
    store.task(&id).map(Json)
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct OpenRequest {
    sentence: Option<usize>,
}

async fn open_session(
    State(store): Shared,
    Path(id): Path<String>,
    body: Bytes,
) -> Result<Response, ServerError> {
    let req: OpenRequest = parse_body(&body)?;
    let snapshot = store.open_session(&id, req.sentence)?;
    Ok((StatusCode::CREATED, Json(snapshot)).into_response())
}

async fn snapshot(State(store): Shared, Path(id): Path<String>) -> Result<Response, ServerError> {
    Ok(Json(store.snapshot(&id)?).into_response())
}

#[derive(Deserialize)]
struct OpRequest {
    #[serde(flatten)]
    edit: EditOp,
    #[serde(default)]
    base_version: Option<u64>,
}

async fn apply_op(
    State(store): Shared,
    Path(id): Path<String>,
    body: Bytes,
) -> Result<Response, ServerError> {
    // Unknown session wins over a malformed body.
    store.with_session(&id, |_| ())?;
    let req: OpRequest = parse_body(&body)?;
    Ok(Json(store.apply(&id, req.edit, req.base_version)?).into_response())
}

async fn undo(State(store): Shared, Path(id): Path<String>) -> Result<Response, ServerError> {
    Ok(Json(store.undo(&id)?).into_response())
}

async fn redo(State(store): Shared, Path(id): Path<String>) -> Result<Response, ServerError> {
    Ok(Json(store.redo(&id)?).into_response())
}

async fn result(State(store): Shared, Path(id): Path<String>) -> Result<Response, ServerError> {
    let (mime, body) = store.result(&id)?;
    Ok(([(header::CONTENT_TYPE, mime)], body).into_response())
}

async fn layout(State(store): Shared, Path(id): Path<String>) -> Result<Response, ServerError> {
    Ok(Json(store.layout(&id)?).into_response())
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct DragRequest {
    node: NodeId,
    x: f64,
    y: f64,
}

async fn drag(
    State(store): Shared,
    Path(id): Path<String>,
    body: Bytes,
) -> Result<Response, ServerError> {
    let req: DragRequest = parse_body(&body)?;
    Ok(Json(store.drag(&id, req.node, Point::new(req.x, req.y))?).into_response())
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct StrokeRequest {
    points: Vec<Point>,
    #[serde(default)]
    apply: bool,
    #[serde(default)]
    timestamp: f64,
}

async fn stroke(
    State(store): Shared,
    Path(id): Path<String>,
    body: Bytes,
) -> Result<Response, ServerError> {
    let req: StrokeRequest = parse_body(&body)?;
    let stroke = Stroke::new(req.points)?;
    Ok(Json(store.stroke(&id, &stroke, req.apply, req.timestamp)?).into_response())
}
