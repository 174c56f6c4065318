//! HTTP routes of the curation service.

use std::sync::{Arc, Mutex};

use axum::body::Body;
use axum::extract::{Query, State};
use axum::http::{header, HeaderMap, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::Deserialize;
use serde_json::json;
use tower_http::cors::{AllowOrigin, Any, CorsLayer};

use super::model::{order_queue, validate_reaction, AnnotationRequest, CurationItem, Strategy};
use super::store::{Store, SubmitError};

pub const CURATOR_HEADER: &str = "x-curator-id";
pub const DEFAULT_QUEUE_LIMIT: usize = 50;

pub type SharedStore = Arc<Mutex<Store>>;

#[derive(Debug, Deserialize)]
struct QueueParams {
    strategy: Option<String>,
    limit: Option<usize>,
}

fn error(status: StatusCode, message: impl Into<String>) -> Response {
    (status, Json(json!({ "error": message.into() }))).into_response()
}

async fn queue(State(store): State<SharedStore>, Query(q): Query<QueueParams>) -> Response {
    let strategy = match q
        .strategy
        .as_deref()
        .map(str::parse::<Strategy>)
        .transpose()
    {
        Ok(s) => s.unwrap_or_default(),
        Err(e) => return error(StatusCode::BAD_REQUEST, e),
    };
    let store = store.lock().expect("store lock");
    let items: Vec<&CurationItem> = order_queue(store.items(), strategy)
        .into_iter()
        .take(q.limit.unwrap_or(DEFAULT_QUEUE_LIMIT))
        .collect();
    Json(items).into_response()
}

async fn annotate(State(store): State<SharedStore>, headers: HeaderMap, body: String) -> Response {
    let req: AnnotationRequest = match serde_json::from_str(&body) {
        Ok(r) => r,
        Err(e) => {
            return error(
                StatusCode::UNPROCESSABLE_ENTITY,
                format!("bad annotation body: {e}"),
            )
        }
    };
    let curator = headers.get(CURATOR_HEADER).and_then(|v| v.to_str().ok());
    let mut store = store.lock().expect("store lock");
    match store.submit(req, curator) {
        Ok(item) => (
            StatusCode::CREATED,
            Json(json!({ "item_id": item.id, "status": item.status, "annotations": item.annotations })),
        )
            .into_response(),
        Err(e) => {
            let status = match &e {
                SubmitError::NotFound(_) => StatusCode::NOT_FOUND,
                SubmitError::Duplicate { .. } | SubmitError::Resolved(_) => StatusCode::CONFLICT,
                SubmitError::MissingCurator => StatusCode::BAD_REQUEST,
                SubmitError::UnknownCandidate(_) | SubmitError::Unparseable(_) | SubmitError::Unbalanced(_) => {
                    StatusCode::UNPROCESSABLE_ENTITY
                }
                SubmitError::Io(_) => StatusCode::INTERNAL_SERVER_ERROR,
            };
            let validation = match &e {
                SubmitError::Unparseable(v) | SubmitError::Unbalanced(v) => Some(v.clone()),
                _ => None,
            };
            (status, Json(json!({ "error": e.to_string(), "validation": validation }))).into_response()
        }
    }
}

#[derive(Deserialize)]
struct ValidateBody {
    reaction: String,
}

/// Accepts `{"reaction": "..."}` or the bare reaction text.
async fn validate(body: String) -> Response {
    let text = serde_json::from_str::<ValidateBody>(&body).map_or(body, |b| b.reaction);
    Json(validate_reaction(&text)).into_response()
}

async fn export(State(store): State<SharedStore>) -> Response {
    let store = store.lock().expect("store lock");
    let mut out = Vec::new();
    for rec in store.export() {
        serde_json::to_writer(&mut out, &rec).expect("export record serializes");
        out.push(b'\n');
    }
    Response::builder()
        .header(header::CONTENT_TYPE, "application/x-ndjson")
        .body(Body::from(out))
        .expect("static response parts")
}

/// Builds the router. `cors_origin` restricts CORS to one origin; `None`
/// allows any origin.
pub fn router(store: SharedStore, cors_origin: Option<&str>) -> Router {
    let origin = match cors_origin.and_then(|o| HeaderValue::from_str(o).ok()) {
        Some(o) => AllowOrigin::exact(o),
        None => AllowOrigin::from(Any),
    };
    let cors = CorsLayer::new()
        .allow_origin(origin)
        .allow_methods(Any)
        .allow_headers(Any);
    Router::new()
        .route("/api/queue", get(queue))
        .route("/api/annotations", post(annotate))
        .route("/api/validate", post(validate))
        .route("/api/export", get(export))
        .layer(cors)
        .with_state(store)
}
