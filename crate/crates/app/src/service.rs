//! HTTP service over a loaded model set.
//!
//! Every request body is a JSON object; feature values are sent as
//! `{"features": {"<key or column name>": <number>, ...}}` in schema units.

use crate::pipeline::{explain_all, optimize, OptimizeOutcome};
use crate::store::ModelSet;
use axum::body::Bytes;
use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use parking_lot::RwLock;
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};
use std::path::PathBuf;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use tarml_core::data::{Bounds, ColumnSpec, FeatureSchema};
use tarml_core::regressors::ARTIFACT_VERSION;
use tarml_core::shap::{summarize, ShapMethod};
use tarml_core::swarm::MopsoParams;
use tokio::sync::Semaphore;

/// Default cap on model-vector evaluations per optimize request.
pub const DEFAULT_OPTIMIZE_BUDGET: usize = 40_000;
const MAX_OPTIMIZE_QUEUE: usize = 8;

/// Immutable view served to requests; replaced wholesale on reload.
#[derive(Debug)]
pub struct Snapshot {
    pub models: ModelSet,
    pub generation: u64,
}

#[derive(Debug)]
pub struct AppState {
    snapshot: RwLock<Arc<Snapshot>>,
    model_dir: Option<PathBuf>,
    pub optimize_budget: usize,
    optimize_gate: Arc<Semaphore>,
    optimize_waiting: AtomicUsize,
}

impl AppState {
    pub fn new(models: ModelSet, model_dir: Option<PathBuf>) -> Self {
        Self {
            snapshot: RwLock::new(Arc::new(Snapshot { models, generation: 0 })),
            model_dir,
            optimize_budget: DEFAULT_OPTIMIZE_BUDGET,
            optimize_gate: Arc::new(Semaphore::new(1)),
            optimize_waiting: AtomicUsize::new(0),
        }
    }

    pub fn with_budget(mut self, budget: usize) -> Self {
        self.optimize_budget = budget;
        self
    }

    pub fn snapshot(&self) -> Arc<Snapshot> {
        self.snapshot.read().clone()
    }

    /// Atomically replaces the served models.
    pub fn swap(&self, models: ModelSet) -> u64 {
        let mut guard = self.snapshot.write();
        let generation = guard.generation + 1;
        *guard = Arc::new(Snapshot { models, generation });
        generation
    }
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    field: Option<String>,
    message: String,
}

impl ApiError {
    fn bad_request(field: impl Into<String>, message: impl Into<String>) -> Self {
        let field = field.into();
        Self {
            status: StatusCode::BAD_REQUEST,
            message: format!("{field}: {}", message.into()),
            field: Some(field),
        }
    }

    fn status(status: StatusCode, message: impl Into<String>) -> Self {
        Self {
            status,
            field: None,
            message: message.into(),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = json!({ "error": self.message, "field": self.field });
        (self.status, Json(body)).into_response()
    }
}

type ApiResult<T> = std::result::Result<Json<T>, ApiError>;

fn parse_body(body: &Bytes) -> std::result::Result<Map<String, Value>, ApiError> {
    let value: Value =
        serde_json::from_slice(body).map_err(|e| ApiError::bad_request("body", format!("invalid JSON: {e}")))?;
    match value {
        Value::Object(map) => Ok(map),
        _ => Err(ApiError::bad_request("body", "expected a JSON object")),
    }
}

/// Reads `features` into schema order. Every feature must appear exactly once.
fn parse_features(body: &Map<String, Value>, schema: &FeatureSchema) -> std::result::Result<Vec<f64>, ApiError> {
    let obj = match body.get("features") {
        Some(Value::Object(m)) => m,
        Some(_) => return Err(ApiError::bad_request("features", "expected an object of feature values")),
        None => return Err(ApiError::bad_request("features", "missing")),
    };
    let mut values: Vec<Option<f64>> = vec![None; schema.n_features()];
    for (k, v) in obj {
        let field = format!("features.{k}");
        let j = schema
            .feature_index(k)
            .ok_or_else(|| ApiError::bad_request(&field, "unknown feature"))?;
        let x = v
            .as_f64()
            .filter(|x| x.is_finite())
            .ok_or_else(|| ApiError::bad_request(&field, "expected a finite number"))?;
        if values[j].replace(x).is_some() {
            return Err(ApiError::bad_request(&field, "given more than once"));
        }
    }
    values
        .into_iter()
        .zip(&schema.features)
        .map(|(v, c)| v.ok_or_else(|| ApiError::bad_request(format!("features.{}", c.key), "missing")))
        .collect()
}

fn internal(e: impl std::fmt::Display) -> ApiError {
    ApiError::status(StatusCode::INTERNAL_SERVER_ERROR, e.to_string())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureEcho {
    pub key: String,
    pub value: f64,
    /// Outside the training range of this feature.
    pub extrapolated: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetPrediction {
    pub key: String,
    pub name: String,
    pub unit: String,
    pub value: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub variance: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictResponse {
    pub model_version: String,
    pub generation: u64,
    pub features: Vec<FeatureEcho>,
    pub predictions: Vec<TargetPrediction>,
}

async fn predict(State(state): State<Arc<AppState>>, body: Bytes) -> ApiResult<PredictResponse> {
    let snap = state.snapshot();
    let models = &snap.models;
    let x = parse_features(&parse_body(&body)?, &models.schema)?;
    let preds = models.predict(&x).map_err(internal)?;
    let flags = models.extrapolation_flags(&x);
    Ok(Json(PredictResponse {
        model_version: ARTIFACT_VERSION.into(),
        generation: snap.generation,
        features: models
            .schema
            .features
            .iter()
            .zip(&x)
            .zip(flags)
            .map(|((c, &value), extrapolated)| FeatureEcho {
                key: c.key.clone(),
                value,
                extrapolated,
            })
            .collect(),
        predictions: models
            .schema
            .targets
            .iter()
            .zip(preds)
            .map(|(c, p)| TargetPrediction {
                key: c.key.clone(),
                name: c.name.clone(),
                unit: c.unit.clone(),
                value: p.value,
                variance: p.variance,
            })
            .collect(),
    }))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Contribution {
    pub key: String,
    pub value: f64,
    pub shap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetExplanation {
    pub key: String,
    pub name: String,
    pub method: ShapMethod,
    pub base: f64,
    pub prediction: f64,
    /// Sorted by descending |shap|, ties in schema order.
    pub contributions: Vec<Contribution>,
    pub operating_pct: Option<f64>,
    pub catalyst_pct: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplainResponse {
    pub model_version: String,
    pub generation: u64,
    pub explanations: Vec<TargetExplanation>,
}

async fn explain(State(state): State<Arc<AppState>>, body: Bytes) -> ApiResult<ExplainResponse> {
    let snap = state.snapshot();
    let map = parse_body(&body)?;
    let x = parse_features(&map, &snap.models.schema)?;
    let permutations = match map.get("permutations") {
        None | Some(Value::Null) => None,
        Some(v) => Some(
            v.as_u64()
                .filter(|&n| (1..=100_000).contains(&n))
                .ok_or_else(|| ApiError::bad_request("permutations", "expected an integer in 1..=100000"))?
                as usize,
        ),
    };
    let job = snap.clone();
    let explanations = tokio::task::spawn_blocking(move || explain_all(&job.models, &x, permutations, 0))
        .await
        .map_err(internal)?
        .map_err(internal)?;
    let schema = &snap.models.schema;
    let out = explanations
        .into_iter()
        .zip(&schema.targets)
        .map(|(e, c)| {
            let summary = summarize(std::slice::from_ref(&e), schema).map_err(internal)?;
            let contributions = summary
                .ranking
                .iter()
                .map(|f| Contribution {
                    key: schema.features[f.index].key.clone(),
                    value: e.instance[f.index],
                    shap: e.values[f.index],
                })
                .collect();
            Ok(TargetExplanation {
                key: c.key.clone(),
                name: c.name.clone(),
                method: e.method,
                base: e.base,
                prediction: e.prediction,
                contributions,
                operating_pct: summary.operating_pct,
                catalyst_pct: summary.catalyst_pct,
            })
        })
        .collect::<std::result::Result<_, ApiError>>()?;
    Ok(Json(ExplainResponse {
        model_version: ARTIFACT_VERSION.into(),
        generation: snap.generation,
        explanations: out,
    }))
}

/// Optimize request; every field is optional.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizeRequest {
    /// `{"<feature>": [min, max]}`; unspecified features use training bounds.
    #[serde(default)]
    pub bounds: Map<String, Value>,
    pub swarm_size: Option<usize>,
    pub iterations: Option<usize>,
    pub archive_capacity: Option<usize>,
    pub seed: Option<u64>,
}

fn parse_bounds(req: &OptimizeRequest, models: &ModelSet) -> std::result::Result<Vec<Bounds>, ApiError> {
    let mut bounds = models.feature_bounds();
    for (k, v) in &req.bounds {
        let field = format!("bounds.{k}");
        let j = models
            .schema
            .feature_index(k)
            .ok_or_else(|| ApiError::bad_request(&field, "unknown feature"))?;
        let pair: Option<(f64, f64)> = match v.as_array().map(Vec::as_slice) {
            Some([a, b]) => a.as_f64().zip(b.as_f64()),
            _ => None,
        };
        let (lo, hi) = pair.ok_or_else(|| ApiError::bad_request(&field, "expected [min, max]"))?;
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(ApiError::bad_request(&field, "need finite min < max"));
        }
        bounds[j] = Bounds::new(lo, hi);
    }
    Ok(bounds)
}

struct QueueSlot<'a>(&'a AtomicUsize);

impl Drop for QueueSlot<'_> {
    fn drop(&mut self) {
        self.0.fetch_sub(1, Ordering::SeqCst);
    }
}

async fn optimize_handler(State(state): State<Arc<AppState>>, body: Bytes) -> ApiResult<OptimizeOutcome> {
    let map = parse_body(&body)?;
    let req: OptimizeRequest = serde_json::from_value(Value::Object(map))
        .map_err(|e| ApiError::bad_request("body", e.to_string()))?;
    let snap = state.snapshot();
    let bounds = parse_bounds(&req, &snap.models)?;
    let mut params = MopsoParams::new(bounds.clone(), vec![]);
    params.pso.swarm_size = req.swarm_size.unwrap_or(params.pso.swarm_size);
    params.pso.iterations = req.iterations.unwrap_or(params.pso.iterations);
    params.pso.seed = req.seed.unwrap_or(0);
    params.archive_capacity = req.archive_capacity.unwrap_or(params.archive_capacity);
    let evaluations = params.pso.swarm_size.saturating_mul(params.pso.iterations.saturating_add(1));
    if evaluations > state.optimize_budget {
        return Err(ApiError::status(
            StatusCode::UNPROCESSABLE_ENTITY,
            format!(
                "run needs {evaluations} model evaluations, budget is {}; use the CLI for larger runs",
                state.optimize_budget
            ),
        ));
    }
    if state.optimize_waiting.fetch_add(1, Ordering::SeqCst) >= MAX_OPTIMIZE_QUEUE {
        state.optimize_waiting.fetch_sub(1, Ordering::SeqCst);
        return Err(ApiError::status(StatusCode::SERVICE_UNAVAILABLE, "optimize queue is full"));
    }
    let slot = QueueSlot(&state.optimize_waiting);
    let permit = state.optimize_gate.clone().acquire_owned().await.map_err(internal)?;
    drop(slot);
    let outcome = tokio::task::spawn_blocking(move || {
        let _permit = permit;
        optimize(&snap.models, Some(bounds), params)
    })
    .await
    .map_err(internal)?
    .map_err(|e| ApiError::bad_request("body", format!("{e:#}")))?;
    Ok(Json(outcome))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchemaResponse {
    pub model_version: String,
    pub fingerprint: String,
    pub features: Vec<ColumnSpec>,
    pub targets: Vec<ColumnSpec>,
}

async fn schema(State(state): State<Arc<AppState>>) -> Json<SchemaResponse> {
    let snap = state.snapshot();
    let m = &snap.models;
    let bounds = m.feature_bounds();
    let features = m
        .schema
        .features
        .iter()
        .zip(bounds)
        .map(|(c, b)| ColumnSpec {
            bounds: Some(b),
            ..c.clone()
        })
        .collect();
    Json(SchemaResponse {
        model_version: ARTIFACT_VERSION.into(),
        fingerprint: m.fingerprint.clone(),
        features,
        targets: m.schema.targets.clone(),
    })
}

async fn health(State(state): State<Arc<AppState>>) -> Json<Value> {
    let snap = state.snapshot();
    Json(json!({
        "status": "ok",
        "model_version": ARTIFACT_VERSION,
        "generation": snap.generation,
        "fingerprint": snap.models.fingerprint,
        "targets": snap.models.artifacts.len(),
    }))
}

async fn reload(State(state): State<Arc<AppState>>) -> std::result::Result<Json<Value>, ApiError> {
    let dir = state
        .model_dir
        .clone()
        .ok_or_else(|| ApiError::status(StatusCode::CONFLICT, "service was started without a model directory"))?;
    let models = tokio::task::spawn_blocking(move || ModelSet::load(&dir))
        .await
        .map_err(internal)?
        .map_err(|e| ApiError::status(StatusCode::INTERNAL_SERVER_ERROR, format!("{e:#}")))?;
    let generation = state.swap(models);
    Ok(Json(json!({ "status": "reloaded", "generation": generation })))
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/api/predict", post(predict))
        .route("/api/explain", post(explain))
        .route("/api/optimize", post(optimize_handler))
        .route("/api/schema", get(schema))
        .route("/api/health", get(health))
        .route("/api/reload", post(reload))
        .with_state(state)
}

/// Serves until Ctrl-C.
pub async fn serve(state: Arc<AppState>, bind: &str) -> anyhow::Result<()> {
    let listener = tokio::net::TcpListener::bind(bind)
        .await
        .map_err(|e| anyhow::anyhow!("cannot bind {bind}: {e}"))?;
    log::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}
