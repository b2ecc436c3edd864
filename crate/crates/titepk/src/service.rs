//! JSON-over-HTTP facade for trial conduct.
//!
//! | method | path                                   | body / query                          |
//! |--------|----------------------------------------|---------------------------------------|
//! | POST   | `/sessions`                            | model settings (all fields optional)  |
//! | GET    | `/sessions/{id}/decision`              |                                       |
//! | POST   | `/sessions/{id}/records`               | `{"revision"?, "record"}`             |
//! | DELETE | `/sessions/{id}/records/{index}`       | `?revision=`                          |
//! | POST   | `/sessions/{id}/what-if`               | `{"records": [...]}`                  |
//! | GET    | `/sessions/{id}/exposure`              | `?dose=&freq=` or `&interval_hours=`  |

use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{delete, get, post};
use axum::{Json, Router};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use uuid::Uuid;

use crate::settings::{FieldError, ModelSettings};
use crate::store::{StoreError, Store};
use crate::wire::{exposure_samples, DecisionDto, RecordDto};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub fields: Vec<FieldError>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub current_revision: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PostRecordBody {
    /// Revision the client last saw; omitted means "don't check".
    #[serde(default)]
    pub revision: Option<u64>,
    pub record: RecordDto,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WhatIfBody {
    #[serde(default)]
    pub records: Vec<RecordDto>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WhatIfResponse {
    pub revision: u64,
    pub decision: DecisionDto,
}

#[derive(Debug, Clone, Deserialize)]
struct RevisionQuery {
    revision: Option<u64>,
}

#[derive(Debug, Clone, Deserialize)]
struct ExposureQuery {
    dose: f64,
    /// Administrations per hour.
    freq: Option<f64>,
    interval_hours: Option<f64>,
    step_hours: Option<f64>,
    horizon_hours: Option<f64>,
}

pub struct ApiError(StatusCode, ErrorBody);

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.0, Json(self.1)).into_response()
    }
}

impl ApiError {
    fn new(status: StatusCode, error: impl Into<String>) -> Self {
        ApiError(
            status,
            ErrorBody {
                error: error.into(),
                fields: Vec::new(),
                current_revision: None,
            },
        )
    }

    fn fields(error: &str, fields: Vec<FieldError>) -> Self {
        ApiError(
            StatusCode::UNPROCESSABLE_ENTITY,
            ErrorBody {
                error: error.to_string(),
                fields,
                current_revision: None,
            },
        )
    }
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        match e {
            StoreError::NotFound => ApiError::new(StatusCode::NOT_FOUND, "unknown session"),
            StoreError::Conflict { current, .. } => {
                let mut err = ApiError::new(StatusCode::CONFLICT, e.to_string());
                err.1.current_revision = Some(current);
                err
            }
            StoreError::Invalid(fields) => ApiError::fields("validation failed", fields),
            StoreError::Io(msg) => ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, msg),
        }
    }
}

type ApiResult<T> = Result<T, ApiError>;

/// Parse a JSON body, turning serde's message into a 422 that names the
/// offending field where serde can.
fn parse_body<T: DeserializeOwned>(body: &Bytes) -> ApiResult<T> {
    let body: &[u8] = if body.iter().all(u8::is_ascii_whitespace) { b"{}" } else { body };
    serde_json::from_slice(body).map_err(|e| {
        let msg = e.to_string();
        let field = msg
            .split('`')
            .nth(1)
            .filter(|_| msg.contains("field"))
            .unwrap_or("body")
            .to_string();
        ApiError::fields("malformed request body", vec![FieldError::new(field, msg)])
    })
}

fn session_id(raw: &str) -> ApiResult<Uuid> {
    Uuid::parse_str(raw).map_err(|_| ApiError::new(StatusCode::NOT_FOUND, "unknown session"))
}

/// Run blocking store work (posterior fits, log writes) off the reactor.
async fn blocking<T: Send + 'static>(f: impl FnOnce() -> ApiResult<T> + Send + 'static) -> ApiResult<T> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?
}

async fn create_session(State(store): State<Arc<Store>>, body: Bytes) -> ApiResult<impl IntoResponse> {
    let settings: ModelSettings = parse_body(&body)?;
    let view = blocking(move || Ok(store.create(settings)?)).await?;
    Ok((StatusCode::CREATED, Json(view)))
}

async fn get_decision(State(store): State<Arc<Store>>, Path(id): Path<String>) -> ApiResult<impl IntoResponse> {
    let id = session_id(&id)?;
    Ok(Json(store.view(id)?))
}

async fn post_record(
    State(store): State<Arc<Store>>,
    Path(id): Path<String>,
    body: Bytes,
) -> ApiResult<impl IntoResponse> {
    let id = session_id(&id)?;
    let body: PostRecordBody = parse_body(&body)?;
    let view = blocking(move || Ok(store.add_record(id, body.revision, body.record)?)).await?;
    Ok((StatusCode::CREATED, Json(view)))
}

async fn delete_record(
    State(store): State<Arc<Store>>,
    Path((id, index)): Path<(String, String)>,
    Query(q): Query<RevisionQuery>,
) -> ApiResult<impl IntoResponse> {
    let id = session_id(&id)?;
    let index: usize = index
        .parse()
        .map_err(|_| ApiError::fields("validation failed", vec![FieldError::new("index", "not a record index")]))?;
    let view = blocking(move || Ok(store.delete_record(id, q.revision, index)?)).await?;
    Ok(Json(view))
}

async fn what_if(State(store): State<Arc<Store>>, Path(id): Path<String>, body: Bytes) -> ApiResult<impl IntoResponse> {
    let id = session_id(&id)?;
    let body: WhatIfBody = parse_body(&body)?;
    let (revision, decision) = blocking(move || Ok(store.what_if(id, &body.records)?)).await?;
    Ok(Json(WhatIfResponse { revision, decision }))
}

async fn exposure(
    State(store): State<Arc<Store>>,
    Path(id): Path<String>,
    Query(q): Query<ExposureQuery>,
) -> ApiResult<impl IntoResponse> {
    let id = session_id(&id)?;
    let interval = match (q.freq, q.interval_hours) {
        (Some(f), None) if f.is_finite() && f > 0.0 => 1.0 / f,
        (None, Some(h)) => h,
        (Some(_), None) => {
            return Err(ApiError::fields("validation failed", vec![FieldError::new("freq", "must be finite and > 0")]))
        }
        _ => {
            return Err(ApiError::fields(
                "validation failed",
                vec![FieldError::new("freq", "give exactly one of freq or interval_hours")],
            ))
        }
    };
    let result = store.with_model(id, |m| {
        let horizon = q.horizon_hours.unwrap_or(m.params.t_star());
        exposure_samples(&m.params, q.dose, interval, horizon, q.step_hours.unwrap_or(1.0))
    })?;
    result
        .map(Json)
        .map_err(|e| ApiError::fields("validation failed", vec![e]))
}

pub fn router(store: Arc<Store>) -> Router {
    Router::new()
        .route("/sessions", post(create_session))
        .route("/sessions/{id}/decision", get(get_decision))
        .route("/sessions/{id}/records", post(post_record))
        .route("/sessions/{id}/records/{index}", delete(delete_record))
        .route("/sessions/{id}/what-if", post(what_if))
        .route("/sessions/{id}/exposure", get(exposure))
        .with_state(store)
}

/// Serve until Ctrl-C.
pub async fn serve(store: Arc<Store>, addr: std::net::SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    eprintln!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, router(store))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
