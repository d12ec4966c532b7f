//! HTTP + WebSocket front end.

use std::net::SocketAddr;

use axum::extract::rejection::{JsonRejection, QueryRejection};
use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::{Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::de::DeserializeOwned;
use serde_json::json;
use tokio::sync::broadcast::error::RecvError;

use super::{
    OpsError, OpsService, PositionRequest, RecommendRequest, SessionRequest, TickRequest, WhatIfRequest, ZoneQuery,
};
use crate::smdp::DispatchAction;
use crate::world::EvacRequest;

pub const PORT_ENV: &str = "MEDCHAIN_PORT";

struct ApiError(StatusCode, &'static str, String);

impl From<OpsError> for ApiError {
    fn from(e: OpsError) -> Self {
        let status = match &e {
            OpsError::NoSession | OpsError::StaleFix { .. } | OpsError::IllegalAction(_) => StatusCode::CONFLICT,
            OpsError::UnknownRequest(_) | OpsError::UnknownEntity(_) => StatusCode::NOT_FOUND,
            OpsError::Validation(_) | OpsError::Infeasible(_) | OpsError::Plan(_) => StatusCode::UNPROCESSABLE_ENTITY,
        };
        ApiError(status, e.code(), e.to_string())
    }
}

impl From<JsonRejection> for ApiError {
    fn from(e: JsonRejection) -> Self {
        ApiError(StatusCode::BAD_REQUEST, "bad_request", e.body_text())
    }
}

impl From<QueryRejection> for ApiError {
    fn from(e: QueryRejection) -> Self {
        ApiError(StatusCode::BAD_REQUEST, "bad_request", e.body_text())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.0, Json(json!({"error": self.1, "message": self.2}))).into_response()
    }
}

type ApiResult = Result<Response, ApiError>;

fn ok<T: serde::Serialize>(v: T) -> ApiResult {
    Ok(Json(v).into_response())
}

fn body<T: DeserializeOwned>(b: Result<Json<T>, JsonRejection>) -> Result<T, ApiError> {
    Ok(b?.0)
}

// planning is CPU-bound; keep it off the async workers
async fn blocking<T: Send + 'static>(f: impl FnOnce() -> Result<T, OpsError> + Send + 'static) -> Result<T, ApiError> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()))?
        .map_err(ApiError::from)
}

async fn session(State(ops): State<OpsService>, b: Result<Json<SessionRequest>, JsonRejection>) -> ApiResult {
    let req = body(b)?;
    ok(blocking(move || ops.start_from_request(&req)).await?)
}

async fn get_state(State(ops): State<OpsService>) -> ApiResult {
    ok(ops.state()?)
}

async fn requests(State(ops): State<OpsService>, b: Result<Json<EvacRequest>, JsonRejection>) -> ApiResult {
    ok(ops.submit_request(body(b)?)?)
}

async fn recommend(State(ops): State<OpsService>, b: Result<Json<RecommendRequest>, JsonRejection>) -> ApiResult {
    let req = body(b)?;
    ok(blocking(move || ops.recommend(&req.request_id, &req.config.unwrap_or_default())).await?)
}

async fn whatif(State(ops): State<OpsService>, b: Result<Json<WhatIfRequest>, JsonRejection>) -> ApiResult {
    let req = body(b)?;
    ok(blocking(move || ops.whatif(&req)).await?)
}

async fn commit(State(ops): State<OpsService>, b: Result<Json<DispatchAction>, JsonRejection>) -> ApiResult {
    ok(ops.commit(body(b)?)?)
}

async fn positions(State(ops): State<OpsService>, b: Result<Json<PositionRequest>, JsonRejection>) -> ApiResult {
    ok(ops.ingest_position(&body(b)?)?)
}

async fn tick(State(ops): State<OpsService>, b: Result<Json<TickRequest>, JsonRejection>) -> ApiResult {
    ok(ops.tick(&body(b)?)?)
}

async fn zones(State(ops): State<OpsService>, q: Result<Query<ZoneQuery>, QueryRejection>) -> ApiResult {
    let q = q?.0;
    ok(blocking(move || ops.zones(&q)).await?)
}

async fn events(State(ops): State<OpsService>, ws: WebSocketUpgrade) -> Response {
    let rx = ops.subscribe();
    ws.on_upgrade(move |socket| forward(socket, rx))
}

async fn forward(mut socket: WebSocket, mut rx: tokio::sync::broadcast::Receiver<super::Broadcast>) {
    loop {
        match rx.recv().await {
            Ok(msg) => {
                let text = serde_json::to_string(&msg).expect("broadcast serializes");
                if socket.send(Message::Text(text.into())).await.is_err() {
                    return;
                }
            }
            // a lagging client cannot be given every revision; make it reconnect
            Err(RecvError::Lagged(n)) => {
                log::warn!("websocket subscriber lagged by {n} revisions; closing");
                let _ = socket.send(Message::Close(None)).await;
                return;
            }
            Err(RecvError::Closed) => return,
        }
    }
}

pub fn router(ops: OpsService) -> Router {
    Router::new()
        .route("/session", post(session))
        .route("/state", get(get_state))
        .route("/requests", post(requests))
        .route("/recommend", post(recommend))
        .route("/whatif", post(whatif))
        .route("/commit", post(commit))
        .route("/positions", post(positions))
        .route("/tick", post(tick))
        .route("/zones", get(zones))
        .route("/events", get(events))
        .with_state(ops)
}

/// Serves until the process is stopped. `port` falls back to `MEDCHAIN_PORT`, then 8080.
pub async fn serve(ops: OpsService, port: Option<u16>) -> std::io::Result<()> {
    let port = match port {
        Some(p) => p,
        None => match std::env::var(PORT_ENV) {
            Ok(v) => v
                .parse()
                .map_err(|_| std::io::Error::new(std::io::ErrorKind::InvalidInput, format!("{PORT_ENV}={v:?} is not a port")))?,
            Err(_) => 8080,
        },
    };
    let addr = SocketAddr::from(([0, 0, 0, 0], port));
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(ops)).await
}
