//! HTTP review service. Handlers only map transport to store calls.

use std::path::Path;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path as UrlPath, Query, State};
use axum::http::{header, HeaderValue, Method, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use evtab_core::backend::{ledger_report, LedgerReport, UsageRecord};
use evtab_core::store::{parse_review_action, Store, StoreError};
use serde::{Deserialize, Serialize};
use serde_json::json;
use tower_http::cors::{AllowOrigin, Any, CorsLayer};

pub struct ApiError(StoreError);

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        ApiError(e)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = match &self.0 {
            StoreError::NotFound(_) => StatusCode::NOT_FOUND,
            StoreError::InvalidId(_) => StatusCode::BAD_REQUEST,
            StoreError::Validation(_) => StatusCode::UNPROCESSABLE_ENTITY,
            StoreError::Json { path, .. } if path.as_os_str() == "<review action>" => StatusCode::BAD_REQUEST,
            StoreError::Io { .. } | StoreError::Json { .. } => StatusCode::INTERNAL_SERVER_ERROR,
        };
        (status, Json(json!({ "error": self.0.to_string() }))).into_response()
    }
}

type ApiResult<T> = Result<Json<T>, ApiError>;
type Shared = Arc<Store>;

async fn blocking<T, F>(store: Shared, f: F) -> Result<T, ApiError>
where
    F: FnOnce(&Store) -> Result<T, StoreError> + Send + 'static,
    T: Send + 'static,
{
    tokio::task::spawn_blocking(move || f(&store))
        .await
        .expect("store task panicked")
        .map_err(ApiError)
}

#[derive(Debug, Default, Deserialize)]
pub struct RunQuery {
    pub run: Option<u32>,
}

#[derive(Debug, Default, Deserialize)]
pub struct DocsQuery {
    /// Comma-separated document ids.
    pub docs: Option<String>,
}

#[derive(Debug, Serialize)]
pub struct LedgerView {
    pub records: Vec<UsageRecord>,
    pub report: LedgerReport,
}

async fn documents(State(store): State<Shared>) -> ApiResult<impl Serialize> {
    blocking(store, |s| s.list_documents()).await.map(Json)
}

async fn table(State(store): State<Shared>, UrlPath(doc): UrlPath<String>, Query(q): Query<RunQuery>) -> ApiResult<impl Serialize> {
    blocking(store, move |s| s.load(&doc, q.run)).await.map(Json)
}

async fn manifest(
    State(store): State<Shared>,
    UrlPath(doc): UrlPath<String>,
    Query(q): Query<RunQuery>,
) -> ApiResult<impl Serialize> {
    blocking(store, move |s| s.load(&doc, q.run).map(|t| t.manifest)).await.map(Json)
}

async fn ledger(State(store): State<Shared>, UrlPath(doc): UrlPath<String>, Query(q): Query<RunQuery>) -> ApiResult<LedgerView> {
    blocking(store, move |s| {
        let records = s.load_ledger(&doc, q.run)?;
        Ok(LedgerView {
            report: ledger_report(&records),
            records,
        })
    })
    .await
    .map(Json)
}

async fn cell(State(store): State<Shared>, UrlPath((doc, column)): UrlPath<(String, String)>) -> ApiResult<impl Serialize> {
    blocking(store, move |s| s.cell_detail(&doc, &column)).await.map(Json)
}

async fn review(
    State(store): State<Shared>,
    UrlPath((doc, column)): UrlPath<(String, String)>,
    body: Bytes,
) -> ApiResult<impl Serialize> {
    let text = String::from_utf8_lossy(&body).into_owned();
    blocking(store, move |s| s.apply_review(&doc, &column, parse_review_action(&text)?))
        .await
        .map(Json)
}

async fn history(State(store): State<Shared>, UrlPath(doc): UrlPath<String>) -> ApiResult<impl Serialize> {
    blocking(store, move |s| s.history(&doc)).await.map(Json)
}

fn image_type(path: &Path) -> &'static str {
    match path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref() {
        Some("png") => "image/png",
        Some("jpg" | "jpeg") => "image/jpeg",
        Some("webp") => "image/webp",
        Some("gif") => "image/gif",
        _ => "application/octet-stream",
    }
}

async fn page_image(State(store): State<Shared>, UrlPath((doc, page)): UrlPath<(String, u32)>) -> Result<Response, ApiError> {
    let (path, bytes) = blocking(store, move |s| {
        let path = s.page_image_path(&doc, page)?;
        let bytes = std::fs::read(&path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => StoreError::NotFound(path.display().to_string()),
            _ => StoreError::Io {
                path: path.clone(),
                source: e,
            },
        })?;
        Ok((path, bytes))
    })
    .await?;
    Ok(([(header::CONTENT_TYPE, image_type(&path))], bytes).into_response())
}

async fn supervision(State(store): State<Shared>, Query(q): Query<DocsQuery>) -> ApiResult<impl Serialize> {
    blocking(store, move |s| {
        let ids = match q.docs.as_deref().filter(|d| !d.trim().is_empty()) {
            Some(list) => list.split(',').map(|d| d.trim().to_string()).collect(),
            None => s.document_ids()?,
        };
        s.export_supervision(&ids)
    })
    .await
    .map(Json)
}

/// Routes under `/api/v1`. `ui_origin` restricts CORS to one origin; any
/// origin is allowed otherwise.
pub fn router(store: Arc<Store>, ui_origin: Option<&str>) -> Router {
    let origin = match ui_origin.and_then(|o| HeaderValue::from_str(o).ok()) {
        Some(o) => AllowOrigin::exact(o),
        None => AllowOrigin::from(Any),
    };
    let cors = CorsLayer::new()
        .allow_origin(origin)
        .allow_methods([Method::GET, Method::POST])
        .allow_headers([header::CONTENT_TYPE]);
    let api = Router::new()
        .route("/documents", get(documents))
        .route("/documents/{doc}/table", get(table))
        .route("/documents/{doc}/manifest", get(manifest))
        .route("/documents/{doc}/ledger", get(ledger))
        .route("/documents/{doc}/history", get(history))
        .route("/documents/{doc}/cells/{column}", get(cell))
        .route("/documents/{doc}/cells/{column}/review", post(review))
        .route("/documents/{doc}/pages/{page}/image", get(page_image))
        .route("/supervision", get(supervision));
    Router::new().nest("/api/v1", api).layer(cors).with_state(store)
}

pub async fn serve(store: Arc<Store>, addr: &str, ui_origin: Option<&str>) -> anyhow::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    tracing::info!(addr = %listener.local_addr()?, "review service listening");
    axum::serve(listener, router(store, ui_origin)).await?;
    Ok(())
}
