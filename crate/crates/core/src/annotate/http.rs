//! HTTP API over an [`AnnotationSession`].
//!
//! | method | path                   | body / result                          |
//! |--------|------------------------|----------------------------------------|
//! | GET    | `/`                    | labeling page                          |
//! | GET    | `/api/classes`         | class names in probability order       |
//! | GET    | `/api/task/next`       | first pending task, 204 when done      |
//! | GET    | `/api/task/{image_id}` | one task                               |
//! | POST   | `/api/labels`          | `{image_id, class}` → outcome, 422 bad |
//! | GET    | `/api/progress`        | per-class counts and totals            |
//! | GET    | `/api/export`          | the manifest, NDJSON                   |

use std::future::Future;
use std::net::SocketAddr;
use std::sync::Arc;

use axum::extract::{Path, State};
use axum::http::{header, StatusCode};
use axum::response::{Html, IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde_json::json;

use super::{AnnotateConfig, AnnotateError, AnnotationSession, LabelRequest};
use crate::classes::StructuralClass;

const INDEX_HTML: &str = include_str!("index.html");

type Shared = Arc<AnnotationSession>;

fn error(status: StatusCode, message: impl std::fmt::Display) -> Response {
    (status, Json(json!({ "error": message.to_string() }))).into_response()
}

async fn render(session: Shared, position: usize) -> Response {
    match tokio::task::spawn_blocking(move || session.render(position)).await {
        Ok(Ok(task)) => Json(task).into_response(),
        Ok(Err(e)) => error(StatusCode::INTERNAL_SERVER_ERROR, e),
        Err(e) => error(StatusCode::INTERNAL_SERVER_ERROR, e),
    }
}

async fn next_task(State(s): State<Shared>) -> Response {
    match s.next_pending() {
        Some(pos) => render(s, pos).await,
        None => StatusCode::NO_CONTENT.into_response(),
    }
}

async fn task_by_id(State(s): State<Shared>, Path(image_id): Path<String>) -> Response {
    match s.position(&image_id) {
        Some(pos) => render(s, pos).await,
        None => error(StatusCode::NOT_FOUND, format!("unknown image id {image_id:?}")),
    }
}

async fn post_label(State(s): State<Shared>, body: axum::body::Bytes) -> Response {
    let req: LabelRequest = match serde_json::from_slice(&body) {
        Ok(r) => r,
        Err(e) => return error(StatusCode::UNPROCESSABLE_ENTITY, format!("bad label body: {e}")),
    };
    let class: StructuralClass = match req.class.parse() {
        Ok(c) => c,
        Err(e) => return error(StatusCode::UNPROCESSABLE_ENTITY, e),
    };
    match tokio::task::spawn_blocking(move || s.label(&req.image_id, class)).await {
        Ok(Ok(outcome)) => Json(outcome).into_response(),
        Ok(Err(e @ AnnotateError::UnknownImage(_))) => error(StatusCode::NOT_FOUND, e),
        Ok(Err(e)) => error(StatusCode::INTERNAL_SERVER_ERROR, e),
        Err(e) => error(StatusCode::INTERNAL_SERVER_ERROR, e),
    }
}

async fn progress(State(s): State<Shared>) -> Response {
    Json(s.progress()).into_response()
}

async fn export(State(s): State<Shared>) -> Response {
    match tokio::task::spawn_blocking(move || s.export()).await {
        Ok(Ok(bytes)) => ([(header::CONTENT_TYPE, "application/x-ndjson")], bytes).into_response(),
        Ok(Err(e)) => error(StatusCode::INTERNAL_SERVER_ERROR, e),
        Err(e) => error(StatusCode::INTERNAL_SERVER_ERROR, e),
    }
}

async fn classes() -> Response {
    let list: Vec<_> = StructuralClass::ALL
        .iter()
        .map(|c| json!({ "index": c.index(), "key": (c.index() + 1).to_string(), "name": c.name() }))
        .collect();
    Json(list).into_response()
}

pub fn router(session: Arc<AnnotationSession>) -> Router {
    Router::new()
        .route("/", get(|| async { Html(INDEX_HTML) }))
        .route("/api/classes", get(classes))
        .route("/api/task/next", get(next_task))
        .route("/api/task/{image_id}", get(task_by_id))
        .route("/api/labels", post(post_label))
        .route("/api/progress", get(progress))
        .route("/api/export", get(export))
        .with_state(session)
}

/// A bound, not yet running annotation service.
pub struct AnnotationServer {
    listener: std::net::TcpListener,
    session: Arc<AnnotationSession>,
}

impl AnnotationServer {
    /// Opens the session (taking the manifest lock) and binds `addr`.
    pub fn bind(config: &AnnotateConfig, addr: &str) -> Result<Self, AnnotateError> {
        let session = Arc::new(AnnotationSession::open(config)?);
        let bind_err = |source| AnnotateError::BindFailure {
            addr: addr.to_string(),
            source,
        };
        let listener = std::net::TcpListener::bind(addr).map_err(bind_err)?;
        listener.set_nonblocking(true).map_err(bind_err)?;
        Ok(AnnotationServer { listener, session })
    }

    pub fn local_addr(&self) -> SocketAddr {
        self.listener.local_addr().expect("bound listener has an address")
    }

    pub fn session(&self) -> &Arc<AnnotationSession> {
        &self.session
    }

    /// Serves until Ctrl-C.
    pub fn run(self) -> Result<(), AnnotateError> {
        self.run_until(async {
            let _ = tokio::signal::ctrl_c().await;
        })
    }

    /// Serves until `shutdown` resolves, on a fresh multi-threaded runtime.
    pub fn run_until<F>(self, shutdown: F) -> Result<(), AnnotateError>
    where
        F: Future<Output = ()> + Send + 'static,
    {
        let addr = self.local_addr();
        let bind_err = |source| AnnotateError::BindFailure {
            addr: addr.to_string(),
            source,
        };
        let runtime = tokio::runtime::Builder::new_multi_thread()
            .enable_all()
            .build()
            .map_err(bind_err)?;
        runtime.block_on(async move {
            let listener = tokio::net::TcpListener::from_std(self.listener).map_err(bind_err)?;
            log::info!("annotation service on http://{addr}");
            axum::serve(listener, router(self.session))
                .with_graceful_shutdown(shutdown)
                .await
                .map_err(bind_err)
        })
    }
}
