//! JSON API over the annotation store.
//!
//! | route                  | success                       |
//! |------------------------|-------------------------------|
//! | `GET /api/categories`  | the 17 categories             |
//! | `GET /api/next?annotator=ID` | an assignment or `null` |
//! | `POST /api/annotations`| the stored record             |
//! | `GET /api/progress`    | counts snapshot               |
//!
//! Errors are `{"error": "..."}` with 400 (bad payload or category), 404
//! (unknown annotator or compound) or 409 (duplicate or saturated).

use std::path::PathBuf;
use std::sync::{Arc, Mutex, MutexGuard};

use axum::body::Bytes;
use axum::extract::{Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use ronc_core::taxonomy::load_taxonomy;
use serde::{Deserialize, Serialize};
use serde_json::json;
use tower_http::services::ServeDir;

use crate::store::{AnnotationStore, StoreError};

pub type SharedStore = Arc<Mutex<AnnotationStore>>;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Submission {
    pub annotator: String,
    pub compound_id: String,
    pub category_id: i64,
}

#[derive(Debug, Deserialize)]
struct NextQuery {
    annotator: Option<String>,
}

pub struct ApiError(StatusCode, String);

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        let status = match &e {
            StoreError::InvalidAnnotator | StoreError::InvalidCategory(_) => StatusCode::BAD_REQUEST,
            StoreError::UnknownAnnotator(_) | StoreError::UnknownCompound(_) => StatusCode::NOT_FOUND,
            StoreError::Duplicate { .. } | StoreError::Saturated(_) => StatusCode::CONFLICT,
            StoreError::Corrupt { .. } | StoreError::DuplicateCompound(_) | StoreError::Io(_) => {
                log::error!("store failure: {e}");
                StatusCode::INTERNAL_SERVER_ERROR
            }
        };
        ApiError(status, e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.0, Json(json!({ "error": self.1 }))).into_response()
    }
}

fn lock(store: &SharedStore) -> MutexGuard<'_, AnnotationStore> {
    // A panic while holding the lock cannot leave a half-applied record:
    // the index only changes after the append succeeds.
    store.lock().unwrap_or_else(|poisoned| poisoned.into_inner())
}

async fn categories() -> impl IntoResponse {
    Json(load_taxonomy())
}

async fn next(State(store): State<SharedStore>, Query(query): Query<NextQuery>) -> Result<Response, ApiError> {
    let annotator = query
        .annotator
        .ok_or_else(|| ApiError(StatusCode::BAD_REQUEST, "missing `annotator` query parameter".into()))?;
    let assignment = lock(&store).next_compound(&annotator)?;
    Ok(Json(assignment).into_response())
}

async fn submit(State(store): State<SharedStore>, body: Bytes) -> Result<Response, ApiError> {
    let submission: Submission = serde_json::from_slice(&body)
        .map_err(|e| ApiError(StatusCode::BAD_REQUEST, format!("invalid payload: {e}")))?;
    let record = tokio::task::spawn_blocking(move || {
        lock(&store).submit(&submission.annotator, &submission.compound_id, submission.category_id)
    })
    .await
    .map_err(|e| ApiError(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))??;
    Ok(Json(record).into_response())
}

async fn progress(State(store): State<SharedStore>) -> impl IntoResponse {
    Json(lock(&store).progress())
}

/// API routes, plus the UI bundle at `/` when `ui_dir` is given.
pub fn router(store: SharedStore, ui_dir: Option<PathBuf>) -> Router {
    let api = Router::new()
        .route("/api/categories", get(categories))
        .route("/api/next", get(next))
        .route("/api/annotations", post(submit))
        .route("/api/progress", get(progress))
        .with_state(store);
    match ui_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir).append_index_html_on_directories(true)),
        None => api,
    }
}

pub async fn serve(listener: tokio::net::TcpListener, router: Router) -> std::io::Result<()> {
    axum::serve(listener, router).await
}
