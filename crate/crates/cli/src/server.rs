//! HTTP scoring service.

use std::future::Future;
use std::path::PathBuf;
use std::sync::{Arc, RwLock};
use std::time::Instant;

use axum::body::Bytes;
use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use ceilguard_core::audit::{AuditLogger, AuditRecord};
use ceilguard_core::bundle::Layers;
use ceilguard_core::model::{event_from_value, event_to_value};
use ceilguard_core::{load_bundle, Error, ModelBundle, ScoreResult};
use serde::{Deserialize, Serialize};
use tokio::net::TcpListener;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoreResponse {
    #[serde(flatten)]
    pub result: ScoreResult,
    pub bundle_version: String,
    pub latency_micros: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Health {
    pub status: String,
    pub bundle_version: String,
    pub audit_written: u64,
    pub audit_dropped: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReloadResponse {
    pub bundle_version: String,
    pub previous_version: String,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ReloadRequest {
    bundle: Option<PathBuf>,
}

pub struct AppState {
    bundle: RwLock<Arc<ModelBundle>>,
    bundle_path: Option<PathBuf>,
    audit: Option<AuditLogger>,
}

impl AppState {
    pub fn new(bundle: ModelBundle, bundle_path: Option<PathBuf>, audit: Option<AuditLogger>) -> Self {
        Self { bundle: RwLock::new(Arc::new(bundle)), bundle_path, audit }
    }

    pub fn current(&self) -> Arc<ModelBundle> {
        Arc::clone(&self.bundle.read().expect("bundle lock poisoned"))
    }

    /// Loads a bundle and swaps it in. The running bundle stays in place
    /// when loading fails.
    pub fn reload(&self, path: Option<PathBuf>) -> Result<ReloadResponse, Error> {
        let path = path
            .or_else(|| self.bundle_path.clone())
            .ok_or_else(|| Error::ModelBundle("no bundle path to reload from".into()))?;
        let fresh = Arc::new(load_bundle(&path)?);
        let bundle_version = fresh.version().to_string();
        let old = std::mem::replace(&mut *self.bundle.write().expect("bundle lock poisoned"), fresh);
        tracing::info!(path = %path.display(), from = old.version(), to = %bundle_version, "bundle reloaded");
        Ok(ReloadResponse { bundle_version, previous_version: old.version().to_string() })
    }

    pub fn audit_stats(&self) -> (u64, u64) {
        self.audit.as_ref().map_or((0, 0), |a| {
            let s = a.stats();
            (s.written, s.dropped)
        })
    }
}

pub struct ApiError {
    status: StatusCode,
    code: &'static str,
    message: String,
}

impl ApiError {
    fn bad_request(code: &'static str, message: impl ToString) -> Self {
        Self { status: StatusCode::BAD_REQUEST, code, message: message.to_string() }
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        let status = match e {
            Error::Parse(_) | Error::Validation(_) | Error::Feature(_) => StatusCode::BAD_REQUEST,
            Error::ModelBundle(_) => StatusCode::UNPROCESSABLE_ENTITY,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        Self { status, code: e.code(), message: e.to_string() }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        if self.status.is_server_error() {
            tracing::error!(code = self.code, "{}", self.message);
        }
        let body = serde_json::json!({ "error": { "code": self.code, "message": self.message } });
        (self.status, Json(body)).into_response()
    }
}

async fn score(State(state): State<Arc<AppState>>, body: Bytes) -> Result<Json<ScoreResponse>, ApiError> {
    let start = Instant::now();
    let value: serde_json::Value =
        serde_json::from_slice(&body).map_err(|e| ApiError::bad_request("parse_error", e))?;
    let event = event_from_value(value).map_err(|e| ApiError::bad_request(e.code(), e))?;
    let bundle = state.current();
    let (result, features) = bundle.score_with_layers(&event, Layers::FULL)?;
    let latency_micros = start.elapsed().as_micros() as u64;
    if let Some(audit) = &state.audit {
        audit.record(AuditRecord {
            item_id: event.item_id.clone(),
            timestamp: chrono::Utc::now(),
            event: event_to_value(&event),
            features,
            result: result.clone(),
            bundle_version: bundle.version().to_string(),
            latency_micros,
        });
    }
    Ok(Json(ScoreResponse { result, bundle_version: bundle.version().to_string(), latency_micros }))
}

async fn health(State(state): State<Arc<AppState>>) -> Json<Health> {
    let (audit_written, audit_dropped) = state.audit_stats();
    Json(Health {
        status: "ok".into(),
        bundle_version: state.current().version().to_string(),
        audit_written,
        audit_dropped,
    })
}

async fn reload(State(state): State<Arc<AppState>>, body: Bytes) -> Result<Json<ReloadResponse>, ApiError> {
    let req: ReloadRequest = if body.iter().all(u8::is_ascii_whitespace) {
        ReloadRequest::default()
    } else {
        serde_json::from_slice(&body).map_err(|e| ApiError::bad_request("parse_error", e))?
    };
    let result = tokio::task::spawn_blocking(move || state.reload(req.bundle)).await.map_err(|e| ApiError {
        status: StatusCode::INTERNAL_SERVER_ERROR,
        code: "internal_error",
        message: e.to_string(),
    })?;
    match result {
        Ok(r) => Ok(Json(r)),
        Err(e) => {
            tracing::warn!("reload failed, keeping the current bundle: {e}");
            Err(e.into())
        }
    }
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/v1/score", post(score))
        .route("/v1/health", get(health))
        .route("/v1/reload", post(reload))
        .with_state(state)
}

pub async fn run<F>(listener: TcpListener, state: Arc<AppState>, shutdown: F) -> std::io::Result<()>
where
    F: Future<Output = ()> + Send + 'static,
{
    axum::serve(listener, router(state)).with_graceful_shutdown(shutdown).await
}

/// Reloads from the configured path on every SIGHUP.
#[cfg(unix)]
pub fn reload_on_sighup(state: Arc<AppState>) -> std::io::Result<()> {
    use tokio::signal::unix::{signal, SignalKind};
    let mut hup = signal(SignalKind::hangup())?;
    tokio::spawn(async move {
        while hup.recv().await.is_some() {
            let s = Arc::clone(&state);
            match tokio::task::spawn_blocking(move || s.reload(None)).await {
                Ok(Err(e)) => tracing::warn!("reload failed, keeping the current bundle: {e}"),
                Err(e) => tracing::error!("reload task failed: {e}"),
                Ok(Ok(_)) => {}
            }
        }
    });
    Ok(())
}
