//! HTTP service driving interactive validation sessions.
//!
//! Every session is an append-only log under `data_dir/sessions`; memory
//! holds a cache that can be dropped and rebuilt at any time.

pub mod api;
pub mod error;
pub mod store;

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;
use std::time::Duration;

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path, State};
use axum::http::{HeaderMap, StatusCode};
use axum::routing::{get, post};
use axum::{Json, Router};

use api::{CreateSession, Created, Metrics, Next, Validate, Validated};
use error::ServiceError;
pub use store::{SessionStore, StoreConfig};

pub const TOKEN_HEADER: &str = "x-session-token";

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    pub listen: SocketAddr,
    pub store: StoreConfig,
}

impl ServiceConfig {
    pub fn new(listen: SocketAddr, bundle_root: PathBuf, data_dir: PathBuf) -> Self {
        Self {
            listen,
            store: StoreConfig {
                bundle_root,
                data_dir,
                ttl: Duration::from_secs(30 * 60),
            },
        }
    }
}

type AppState = Arc<SessionStore>;

fn token(headers: &HeaderMap) -> Option<&str> {
    headers.get(TOKEN_HEADER).and_then(|v| v.to_str().ok())
}

/// Runs blocking store work off the async executor.
async fn blocking<T, F>(f: F) -> Result<T, ServiceError>
where
    F: FnOnce() -> Result<T, ServiceError> + Send + 'static,
    T: Send + 'static,
{
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ServiceError::Internal(e.to_string()))?
}

/// Malformed bodies get the same JSON error shape as every other failure.
fn body<T>(req: Result<Json<T>, JsonRejection>) -> Result<T, ServiceError> {
    match req {
        Ok(Json(v)) => Ok(v),
        Err(JsonRejection::JsonDataError(e)) => Err(ServiceError::Unprocessable(e.body_text())),
        Err(e) => Err(ServiceError::BadRequest(e.body_text())),
    }
}

async fn create(
    State(store): State<AppState>,
    req: Result<Json<CreateSession>, JsonRejection>,
) -> Result<(StatusCode, Json<Created>), ServiceError> {
    let req = body(req)?;
    let created = blocking(move || store.create(req)).await?;
    Ok((StatusCode::CREATED, Json(created)))
}

async fn next(
    State(store): State<AppState>,
    Path(id): Path<String>,
    headers: HeaderMap,
) -> Result<Json<Next>, ServiceError> {
    let token = token(&headers).map(str::to_string);
    blocking(move || store.next(&id, token.as_deref())).await.map(Json)
}

async fn validate(
    State(store): State<AppState>,
    Path(id): Path<String>,
    headers: HeaderMap,
    req: Result<Json<Validate>, JsonRejection>,
) -> Result<Json<Validated>, ServiceError> {
    let req = body(req)?;
    let token = token(&headers).map(str::to_string);
    blocking(move || store.validate(&id, token.as_deref(), req.doc, req.flipped))
        .await
        .map(Json)
}

async fn metrics(State(store): State<AppState>, Path(id): Path<String>) -> Result<Json<Metrics>, ServiceError> {
    let snapshot = blocking(move || store.metrics(&id)).await?;
    Ok(Json((*snapshot).clone()))
}

async fn close(
    State(store): State<AppState>,
    Path(id): Path<String>,
    headers: HeaderMap,
) -> Result<Json<Metrics>, ServiceError> {
    let token = token(&headers).map(str::to_string);
    let snapshot = blocking(move || store.close(&id, token.as_deref())).await?;
    Ok(Json((*snapshot).clone()))
}

pub fn router(store: Arc<SessionStore>) -> Router {
    Router::new()
        .route("/sessions", post(create))
        .route("/sessions/{id}", axum::routing::delete(close))
        .route("/sessions/{id}/next", get(next))
        .route("/sessions/{id}/validate", post(validate))
        .route("/sessions/{id}/metrics", get(metrics))
        .with_state(store)
}

/// Binds and serves until interrupted.
pub async fn serve(config: ServiceConfig) -> Result<(), ServiceError> {
    let store = Arc::new(SessionStore::new(config.store.clone())?);
    let sweeper = store.clone();
    let period = (config.store.ttl / 4).max(Duration::from_secs(1));
    tokio::spawn(async move {
        let mut tick = tokio::time::interval(period);
        loop {
            tick.tick().await;
            let evicted = sweeper.evict_idle();
            if evicted > 0 {
                tracing::debug!(evicted, "dropped idle sessions");
            }
        }
    });
    let listener = tokio::net::TcpListener::bind(config.listen)
        .await
        .map_err(|e| ServiceError::Internal(format!("cannot bind {}: {e}", config.listen)))?;
    let local = listener
        .local_addr()
        .map_err(|e| ServiceError::Internal(e.to_string()))?;
    tracing::info!("listening on {local}");
    axum::serve(listener, router(store))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
        .map_err(|e| ServiceError::Internal(e.to_string()))
}
