//! Read-mostly JSON API over a registry.
//!
//! | Method | Path | Query |
//! |--------|------|-------|
//! | GET | `/api/combinations` | |
//! | GET | `/api/evaluation-table` | `subset`, `mode` |
//! | GET | `/api/snapshot/{combo}/{dataset}` | `class` |
//! | GET | `/api/trajectories` | `ref`, `cmp`, `class`, `dataset` |
//! | GET | `/api/density` | `combo`, `dataset`, `class`, `metric`, `bins` |
//! | GET | `/api/correlations` | `combo` |
//! | GET | `/api/margin-shift` | `ref`, `cmp` |
//! | GET | `/api/metric-select` | `ref`, `cmp`, `class`, `dataset`, `metric`, `predicate`, `threshold` |
//! | GET | `/api/subsets`, `/api/subsets/{id}` | |
//! | POST | `/api/subsets` | body `{id, sample_ids, note}` |
//!
//! Errors come back as `{"error": "..."}`; an unknown sample id in a subset
//! also carries `"sample_id"`.

use std::sync::Arc;

use anyhow::Context;
use axum::body::Body;
use axum::extract::{Path, Query, State};
use axum::http::{header, HeaderValue, Method, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::{Json, Router};
use prunelens_core::registry::{
    metric_difference_select, subset_delta, Metric, Predicate, Registry, SeverityMode,
    SubsetSelection, CLEAN,
};
use prunelens_core::stats::density;
use prunelens_core::Error;
use serde::{Deserialize, Serialize};
use serde_json::json;
use tokio::sync::Mutex;
use tower_http::cors::{AllowOrigin, CorsLayer};

struct AppState {
    registry: Registry,
    // subset creation is single-writer
    subset_writer: Mutex<()>,
}

type Shared = Arc<AppState>;

/// Builds the API router. Browsers may call it only from `origins`.
pub fn router(registry: Registry, origins: &[String]) -> anyhow::Result<Router> {
    let origins = origins
        .iter()
        .map(|o| HeaderValue::from_str(o).with_context(|| format!("invalid origin '{o}'")))
        .collect::<anyhow::Result<Vec<_>>>()?;
    let cors = CorsLayer::new()
        .allow_origin(AllowOrigin::list(origins))
        .allow_methods([Method::GET, Method::POST])
        .allow_headers([header::CONTENT_TYPE]);
    let state = Arc::new(AppState { registry, subset_writer: Mutex::new(()) });
    Ok(Router::new()
        .route("/api/combinations", get(combinations))
        .route("/api/evaluation-table", get(evaluation_table))
        .route("/api/snapshot/{combo}/{dataset}", get(snapshot))
        .route("/api/trajectories", get(trajectories))
        .route("/api/density", get(density_curve))
        .route("/api/correlations", get(correlations))
        .route("/api/margin-shift", get(margin_shift))
        .route("/api/metric-select", get(metric_select))
        .route("/api/subsets", get(list_subsets).post(create_subset))
        .route("/api/subsets/{id}", get(get_subset))
        .layer(cors)
        .with_state(state))
}

struct ApiError(StatusCode, serde_json::Value);

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::NotFound(_) => StatusCode::NOT_FOUND,
            Error::Duplicate(_) => StatusCode::CONFLICT,
            Error::InvalidArgument(_)
            | Error::UnknownSample(_)
            | Error::LabelOutOfRange { .. }
            | Error::UnknownCorruption(_)
            | Error::Severity(_)
            | Error::InsufficientData(_)
            | Error::UndefinedCorrelation(_) => StatusCode::BAD_REQUEST,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        let body = match &e {
            Error::UnknownSample(id) => json!({"error": e.to_string(), "sample_id": id}),
            _ => json!({"error": e.to_string()}),
        };
        ApiError(status, body)
    }
}

impl ApiError {
    fn bad_request(msg: impl Into<String>) -> Self {
        ApiError(StatusCode::BAD_REQUEST, json!({"error": msg.into()}))
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.0, Json(self.1)).into_response()
    }
}

type ApiResult = Result<Response, ApiError>;

fn json_body<T: Serialize>(status: StatusCode, value: &T) -> ApiResult {
    let bytes = serde_json::to_vec(value).map_err(|e| ApiError::from(Error::from(e)))?;
    Ok(Response::builder()
        .status(status)
        .header(header::CONTENT_TYPE, "application/json")
        .body(Body::from(bytes))
        .expect("static response parts"))
}

fn ok<T: Serialize>(value: &T) -> ApiResult {
    json_body(StatusCode::OK, value)
}

async fn combinations(State(s): State<Shared>) -> ApiResult {
    ok(&s.registry.manifests()?)
}

#[derive(Deserialize)]
struct TableQuery {
    subset: Option<String>,
    #[serde(default)]
    mode: SeverityMode,
}

#[derive(Serialize)]
struct TableResponse {
    full: prunelens_core::registry::EvaluationTable,
    #[serde(skip_serializing_if = "Option::is_none")]
    subset: Option<prunelens_core::registry::EvaluationTable>,
    #[serde(skip_serializing_if = "Option::is_none")]
    delta: Option<prunelens_core::registry::SubsetDelta>,
}

async fn evaluation_table(State(s): State<Shared>, Query(q): Query<TableQuery>) -> ApiResult {
    let full = s.registry.evaluation_table(None, q.mode)?;
    let (subset, delta) = match q.subset.as_deref().filter(|id| !id.is_empty()) {
        Some(id) => {
            let sel = s.registry.load_subset(id)?;
            let sub = s.registry.evaluation_table(Some(&sel), q.mode)?;
            let delta = subset_delta(&full, &sub)?;
            (Some(sub), Some(delta))
        }
        None => (None, None),
    };
    ok(&TableResponse { full, subset, delta })
}

#[derive(Deserialize)]
struct ClassQuery {
    class: Option<usize>,
}

async fn snapshot(
    State(s): State<Shared>,
    Path((combo, dataset)): Path<(String, String)>,
    Query(q): Query<ClassQuery>,
) -> ApiResult {
    let mut snap = s.registry.load_snapshot(&combo, &dataset)?;
    if let Some(c) = q.class {
        if c >= snap.class_count {
            return Err(Error::LabelOutOfRange { label: c, classes: snap.class_count }.into());
        }
        snap.samples.retain(|x| x.true_label == c);
    }
    ok(&snap)
}

fn default_dataset() -> String {
    CLEAN.to_string()
}

#[derive(Deserialize)]
struct TrajectoryQuery {
    #[serde(rename = "ref")]
    reference: String,
    cmp: String,
    class: usize,
    #[serde(default = "default_dataset")]
    dataset: String,
}

async fn trajectories(State(s): State<Shared>, Query(q): Query<TrajectoryQuery>) -> ApiResult {
    ok(&s.registry.trajectories(&q.reference, &q.cmp, q.class, &q.dataset)?)
}

#[derive(Deserialize)]
struct DensityQuery {
    combo: String,
    #[serde(default = "default_dataset")]
    dataset: String,
    class: Option<usize>,
    metric: String,
    bins: Option<usize>,
}

async fn density_curve(State(s): State<Shared>, Query(q): Query<DensityQuery>) -> ApiResult {
    let metric: Metric = q.metric.parse()?;
    let snap = s.registry.load_snapshot(&q.combo, &q.dataset)?;
    let values: Vec<f64> = snap
        .samples
        .iter()
        .filter(|x| !x.degenerate && q.class.is_none_or(|c| x.true_label == c))
        .map(|x| metric.of(x))
        .collect();
    ok(&density(&q.metric, &values, q.bins)?)
}

#[derive(Deserialize)]
struct ComboQuery {
    combo: String,
}

async fn correlations(State(s): State<Shared>, Query(q): Query<ComboQuery>) -> ApiResult {
    ok(&s.registry.correlations(&q.combo)?)
}

#[derive(Deserialize)]
struct ShiftQuery {
    #[serde(rename = "ref")]
    reference: String,
    cmp: Option<String>,
}

async fn margin_shift(State(s): State<Shared>, Query(q): Query<ShiftQuery>) -> ApiResult {
    match q.cmp.as_deref().filter(|c| !c.is_empty()) {
        Some(cmp) => ok(&s.registry.compare_margin_shift(&q.reference, cmp)?),
        None => ok(&s.registry.margin_shift(&q.reference)?),
    }
}

#[derive(Deserialize)]
struct SelectQuery {
    #[serde(rename = "ref")]
    reference: String,
    cmp: String,
    class: usize,
    #[serde(default = "default_dataset")]
    dataset: String,
    metric: String,
    predicate: String,
    threshold: Option<f64>,
}

async fn metric_select(State(s): State<Shared>, Query(q): Query<SelectQuery>) -> ApiResult {
    let metric: Metric = q.metric.parse()?;
    let predicate = match (q.predicate.as_str(), q.threshold) {
        ("increased", _) => Predicate::Increased,
        ("decreased", _) => Predicate::Decreased,
        ("unchanged", _) => Predicate::Unchanged,
        ("abs_at_least", Some(t)) => Predicate::AbsAtLeast(t),
        ("abs_at_least", None) => return Err(ApiError::bad_request("abs_at_least needs a threshold")),
        (other, _) => return Err(ApiError::bad_request(format!("unknown predicate '{other}'"))),
    };
    let report = s.registry.trajectories(&q.reference, &q.cmp, q.class, &q.dataset)?;
    ok(&metric_difference_select(&report.pairs, metric, predicate))
}

async fn list_subsets(State(s): State<Shared>) -> ApiResult {
    ok(&s.registry.list_subsets()?)
}

async fn get_subset(State(s): State<Shared>, Path(id): Path<String>) -> ApiResult {
    ok(&s.registry.load_subset(&id)?)
}

#[derive(Deserialize)]
struct NewSubset {
    id: String,
    sample_ids: Vec<u64>,
    #[serde(default)]
    note: String,
}

async fn create_subset(State(s): State<Shared>, Json(body): Json<NewSubset>) -> ApiResult {
    let subset = SubsetSelection::new(body.id, body.sample_ids, body.note)?;
    let _guard = s.subset_writer.lock().await;
    s.registry.save_subset(&subset)?;
    json_body(StatusCode::CREATED, &subset)
}
