//! HTTP front door. Handlers hand the blocking gateway work to tokio's
//! blocking pool.

use std::net::SocketAddr;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::de::DeserializeOwned;
use serde_json::json;

use crate::api::{FeedbackRequest, GatewayError, InteractRequest};
use crate::gateway::Gateway;

fn error_response(e: &GatewayError) -> Response {
    let status = StatusCode::from_u16(e.status()).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
    (status, Json(e.body())).into_response()
}

fn parse<T: DeserializeOwned>(body: &[u8]) -> Result<T, GatewayError> {
    serde_json::from_slice(body).map_err(|e| GatewayError::BadRequest(e.to_string()))
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> T + Send + 'static) -> Result<T, Response> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| error_response(&GatewayError::Internal(e.to_string())))
}

async fn interact(State(gw): State<Arc<Gateway>>, body: Bytes) -> Response {
    let result = blocking(move || {
        let request: InteractRequest = match parse(&body) {
            Ok(r) => r,
            Err(e) => return Err(gw.reject_unparsed(e)),
        };
        gw.handle_interact(&request)
    })
    .await;
    match result {
        Ok(Ok(resp)) => Json(resp).into_response(),
        Ok(Err(e)) => error_response(&e),
        Err(r) => r,
    }
}

async fn feedback(State(gw): State<Arc<Gateway>>, body: Bytes) -> Response {
    let result = blocking(move || {
        let request: FeedbackRequest = parse(&body)?;
        gw.handle_feedback(&request)
    })
    .await;
    match result {
        Ok(Ok(_)) => StatusCode::NO_CONTENT.into_response(),
        Ok(Err(e)) => error_response(&e),
        Err(r) => r,
    }
}

async fn stats(State(gw): State<Arc<Gateway>>) -> Response {
    match blocking(move || gw.handle_stats()).await {
        Ok(s) => Json(s).into_response(),
        Err(r) => r,
    }
}

async fn sensors(State(gw): State<Arc<Gateway>>) -> Response {
    match blocking(move || gw.sensors_snapshot()).await {
        Ok(s) => Json(s).into_response(),
        Err(r) => r,
    }
}

async fn healthz() -> Json<serde_json::Value> {
    Json(json!({"status": "ok"}))
}

pub fn router(gateway: Arc<Gateway>) -> Router {
    Router::new()
        .route("/v1/interact", post(interact))
        .route("/v1/feedback", post(feedback))
        .route("/v1/cache/stats", get(stats))
        .route("/v1/sensors", get(sensors))
        .route("/healthz", get(healthz))
        .with_state(gateway)
}

/// Serves until `shutdown` resolves, then drains in-flight requests.
pub async fn serve(
    gateway: Arc<Gateway>,
    listener: tokio::net::TcpListener,
    shutdown: impl std::future::Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    axum::serve(listener, router(gateway)).with_graceful_shutdown(shutdown).await
}

pub async fn bind(addr: &str) -> std::io::Result<(tokio::net::TcpListener, SocketAddr)> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    let local = listener.local_addr()?;
    Ok((listener, local))
}
