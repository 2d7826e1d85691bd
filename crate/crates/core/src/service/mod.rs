//! HTTP service for the review console: candidate lists, curator labels
//! and retraining from accepted labels.

mod labels;

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex, RwLock};

use axum::body::Bytes;
use axum::extract::{Path, Query, Request, State};
use axum::http::{header, StatusCode};
use axum::middleware::{self, Next};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};

pub use labels::{LabelStore, MatchLabel, Verdict};

use crate::dictionary::DataDictionary;
use crate::error::{Error, Result};
use crate::features::{FeatureMatrix, FeatureSchema, FEATURE_NAMES};
use crate::forest::{train_forest, ForestModel, ForestParams};
use crate::harness::TrialResult;
use crate::rank::RankedList;
use crate::rng;

/// Version id served before any model is trained or loaded.
pub const HEURISTIC_VERSION: &str = "heuristic";

/// Mean of the twelve similarity features; ranks candidates when no model
/// is available.
pub fn heuristic_score(features: &[f64]) -> f64 {
    features[..12].iter().sum::<f64>() / 12.0
}

#[derive(Debug)]
pub struct ModelVersion {
    pub id: String,
    pub model: Option<ForestModel>,
    pub model_hash: Option<String>,
}

impl ModelVersion {
    pub fn heuristic() -> Self {
        ModelVersion { id: HEURISTIC_VERSION.into(), model: None, model_hash: None }
    }

    /// Version `n`, named `v{n}-` plus the first 12 hex digits of the model hash.
    pub fn trained(n: usize, model: ForestModel) -> Result<Self> {
        let hash = model.content_hash()?;
        Ok(ModelVersion { id: format!("v{n}-{}", &hash[..12]), model: Some(model), model_hash: Some(hash) })
    }

    pub fn score(&self, features: &[f64]) -> Result<f64> {
        match &self.model {
            Some(m) => m.predict_proba(features),
            None => Ok(heuristic_score(features)),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ServiceSettings {
    /// Required as `Authorization: Bearer <token>` on `/api/*` when set.
    pub token: Option<String>,
    pub model_dir: Option<PathBuf>,
    pub trials_dir: Option<PathBuf>,
    pub seed: u64,
    pub negatives_per_source: usize,
    pub params: ForestParams,
}

impl Default for ServiceSettings {
    fn default() -> Self {
        ServiceSettings {
            token: None,
            model_dir: None,
            trials_dir: None,
            seed: 0,
            negatives_per_source: 200,
            params: ForestParams::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub target: String,
    pub label: String,
    pub score: f64,
    pub rank: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub features: Option<BTreeMap<String, f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateList {
    pub source: String,
    pub model_version: String,
    pub candidates: Vec<Candidate>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrainOutcome {
    pub model_version: String,
    pub model_hash: String,
    pub n_positive: usize,
    pub n_pairs: usize,
}

/// Scores every target for `source` with one model version and keeps the
/// `top` best. Ties share the average of the positions they span.
pub fn rank_candidates(
    matrix: &FeatureMatrix,
    targets: &DataDictionary,
    version: &ModelVersion,
    source: &str,
    top: usize,
    explain: bool,
) -> Result<CandidateList> {
    let s = matrix.source_index(source).ok_or_else(|| Error::UnknownSource(source.to_string()))?;
    let scored = (0..matrix.targets().len())
        .map(|t| Ok((matrix.targets()[t].clone(), version.score(matrix.features(s, t))?)))
        .collect::<Result<Vec<_>>>()?;
    let list = RankedList::new(source, scored, Default::default());
    let candidates = list
        .top(top)
        .iter()
        .map(|e| {
            let t = matrix.target_index(&e.target_name).expect("ranked target is in the matrix");
            Candidate {
                target: e.target_name.clone(),
                label: targets.get(&e.target_name).map(|r| r.label.clone()).unwrap_or_default(),
                score: e.score,
                rank: e.rank,
                features: explain.then(|| FEATURE_NAMES.iter().map(|n| n.to_string()).zip(matrix.features(s, t).iter().copied()).collect()),
            }
        })
        .collect();
    Ok(CandidateList { source: source.to_string(), model_version: version.id.clone(), candidates })
}

/// Shared service state. Reads take a snapshot of the current model
/// version, so one response never mixes versions.
pub struct ServiceState {
    sources: DataDictionary,
    targets: DataDictionary,
    matrix: FeatureMatrix,
    labels: Mutex<LabelStore>,
    versions: RwLock<Vec<Arc<ModelVersion>>>,
    retraining: AtomicBool,
    settings: ServiceSettings,
}

/// Holds the retrain slot; released on drop.
pub struct RetrainGuard<'a>(&'a AtomicBool);

impl Drop for RetrainGuard<'_> {
    fn drop(&mut self) {
        self.0.store(false, Ordering::Release);
    }
}

impl ServiceState {
    pub fn new(
        sources: DataDictionary,
        targets: DataDictionary,
        matrix: FeatureMatrix,
        labels: LabelStore,
        initial: Option<ForestModel>,
        settings: ServiceSettings,
    ) -> Result<Self> {
        if matrix.sources().len() != sources.len() || matrix.targets().len() != targets.len() {
            return Err(Error::Invalid("feature matrix does not match the dictionaries".into()));
        }
        let first = match initial {
            Some(m) => ModelVersion::trained(0, m)?,
            None => ModelVersion::heuristic(),
        };
        Ok(ServiceState {
            sources,
            targets,
            matrix,
            labels: Mutex::new(labels),
            versions: RwLock::new(vec![Arc::new(first)]),
            retraining: AtomicBool::new(false),
            settings,
        })
    }

    pub fn current_version(&self) -> Arc<ModelVersion> {
        self.versions.read().unwrap_or_else(|e| e.into_inner()).last().cloned().expect("at least one version")
    }

    pub fn version_ids(&self) -> Vec<String> {
        self.versions.read().unwrap_or_else(|e| e.into_inner()).iter().map(|v| v.id.clone()).collect()
    }

    pub fn sources(&self) -> &DataDictionary {
        &self.sources
    }

    pub fn candidates(&self, source: &str, top: usize, explain: bool) -> Result<CandidateList> {
        rank_candidates(&self.matrix, &self.targets, &self.current_version(), source, top, explain)
    }

    pub fn record_label(&self, source: &str, target: &str, verdict: Verdict, curator: &str) -> Result<MatchLabel> {
        if !self.sources.contains(source) {
            return Err(Error::UnknownVariable(source.to_string()));
        }
        if !self.targets.contains(target) {
            return Err(Error::UnknownVariable(target.to_string()));
        }
        let mut store = self.labels.lock().unwrap_or_else(|e| e.into_inner());
        store.append(source, target, verdict, curator, chrono::Utc::now())
    }

    pub fn labels(&self, all: bool) -> Vec<MatchLabel> {
        let store = self.labels.lock().unwrap_or_else(|e| e.into_inner());
        if all {
            store.log().to_vec()
        } else {
            store.current()
        }
    }

    /// Claims the single retrain slot.
    pub fn begin_retrain(&self) -> Result<RetrainGuard<'_>> {
        self.retraining
            .compare_exchange(false, true, Ordering::AcqRel, Ordering::Acquire)
            .map(|_| RetrainGuard(&self.retraining))
            .map_err(|_| Error::RetrainInProgress)
    }

    /// Trains on the currently accepted pairs and makes the result the
    /// serving model. Older versions are kept.
    pub fn retrain(&self) -> Result<RetrainOutcome> {
        let _guard = self.begin_retrain()?;
        let gold = self.labels.lock().unwrap_or_else(|e| e.into_inner()).accepted();
        if gold.is_empty() {
            return Err(Error::InsufficientLabels);
        }
        let train_sources: Vec<String> = gold.sources().map(str::to_string).collect();
        let mut r = rng::stream(self.settings.seed, &[rng::NEGATIVES]);
        let pairs = crate::features::generate_training_pairs(&gold, &train_sources, &self.matrix, self.settings.negatives_per_source, &mut r)?;
        let model = match train_forest(&pairs, &FeatureSchema::full(), &self.settings.params, self.settings.seed) {
            Err(Error::SingleClassData) => return Err(Error::InsufficientLabels),
            other => other?,
        };
        let mut versions = self.versions.write().unwrap_or_else(|e| e.into_inner());
        let version = ModelVersion::trained(versions.len(), model)?;
        if let (Some(dir), Some(model)) = (&self.settings.model_dir, &version.model) {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
            model.save(&dir.join(format!("{}.json", version.id)))?;
        }
        let outcome = RetrainOutcome {
            model_version: version.id.clone(),
            model_hash: version.model_hash.clone().unwrap_or_default(),
            n_positive: pairs.iter().filter(|p| p.gold).count(),
            n_pairs: pairs.len(),
        };
        versions.push(Arc::new(version));
        Ok(outcome)
    }

    /// The most recent persisted trial, if a trials directory is configured.
    pub fn latest_trial(&self) -> Result<Option<TrialResult>> {
        let Some(dir) = &self.settings.trials_dir else {
            return Ok(None);
        };
        let Ok(entries) = std::fs::read_dir(dir) else {
            return Ok(None);
        };
        let latest = entries
            .filter_map(|e| e.ok())
            .map(|e| e.path())
            .filter(|p| p.file_name().and_then(|n| n.to_str()).is_some_and(|n| n.starts_with("trial_") && n.ends_with(".json")))
            .max();
        match latest {
            Some(p) => {
                let raw = std::fs::read_to_string(&p).map_err(|e| Error::io(&p, e))?;
                Ok(Some(serde_json::from_str(&raw)?))
            }
            None => Ok(None),
        }
    }
}

/// JSON error body `{code, message}` with a matching status.
#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub code: &'static str,
    pub message: String,
}

impl ApiError {
    fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        ApiError { status, code, message: message.into() }
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        let (status, code) = match &e {
            Error::UnknownSource(_) => (StatusCode::NOT_FOUND, "unknown_source"),
            Error::UnknownVariable(_) => (StatusCode::UNPROCESSABLE_ENTITY, "unknown_variable"),
            Error::MalformedVerdict(_) => (StatusCode::UNPROCESSABLE_ENTITY, "malformed_verdict"),
            Error::InsufficientLabels => (StatusCode::UNPROCESSABLE_ENTITY, "insufficient_labels"),
            Error::RetrainInProgress => (StatusCode::CONFLICT, "retrain_in_progress"),
            Error::Invalid(_) | Error::Json(_) => (StatusCode::BAD_REQUEST, "bad_request"),
            _ => (StatusCode::INTERNAL_SERVER_ERROR, "internal"),
        };
        ApiError::new(status, code, e.to_string())
    }
}

#[derive(Serialize)]
struct ErrorBody<'a> {
    code: &'a str,
    message: &'a str,
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(ErrorBody { code: self.code, message: &self.message })).into_response()
    }
}

type ApiResult<T> = std::result::Result<T, ApiError>;
pub type Shared = Arc<ServiceState>;

#[derive(Serialize)]
struct SourceSummary<'a> {
    name: &'a str,
    label: &'a str,
    sheet_desc: &'a str,
    derivation_rule: &'a str,
}

async fn list_sources(State(s): State<Shared>) -> Json<serde_json::Value> {
    let out: Vec<SourceSummary> = s
        .sources
        .iter()
        .map(|r| SourceSummary { name: &r.name, label: &r.label, sheet_desc: &r.sheet_desc, derivation_rule: &r.derivation_rule })
        .collect();
    Json(serde_json::to_value(out).unwrap_or_default())
}

#[derive(Deserialize)]
struct CandidateQuery {
    top: Option<usize>,
    #[serde(default)]
    explain: bool,
}

async fn candidates(State(s): State<Shared>, Path(name): Path<String>, Query(q): Query<CandidateQuery>) -> ApiResult<Json<CandidateList>> {
    let top = q.top.unwrap_or(10);
    if top == 0 {
        return Err(ApiError::new(StatusCode::BAD_REQUEST, "bad_request", "top must be positive"));
    }
    Ok(Json(s.candidates(&name, top, q.explain)?))
}

#[derive(Deserialize)]
struct LabelQuery {
    #[serde(default)]
    all: bool,
}

async fn get_labels(State(s): State<Shared>, Query(q): Query<LabelQuery>) -> Json<Vec<MatchLabel>> {
    Json(s.labels(q.all))
}

#[derive(Deserialize)]
struct LabelRequest {
    source: String,
    target: String,
    verdict: String,
    curator: String,
}

async fn post_label(State(s): State<Shared>, body: Bytes) -> ApiResult<(StatusCode, Json<MatchLabel>)> {
    let req: LabelRequest =
        serde_json::from_slice(&body).map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, "bad_request", e.to_string()))?;
    let verdict: Verdict = req.verdict.parse()?;
    let label = s.record_label(&req.source, &req.target, verdict, &req.curator)?;
    Ok((StatusCode::CREATED, Json(label)))
}

async fn retrain(State(s): State<Shared>) -> ApiResult<Json<RetrainOutcome>> {
    // fail fast without a worker thread; retrain() itself claims the slot
    if s.retraining.load(Ordering::Acquire) {
        return Err(Error::RetrainInProgress.into());
    }
    let outcome = tokio::task::spawn_blocking(move || s.retrain())
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()))??;
    Ok(Json(outcome))
}

async fn metrics(State(s): State<Shared>) -> ApiResult<Json<TrialResult>> {
    match s.latest_trial()? {
        Some(t) => Ok(Json(t)),
        None => Err(ApiError::new(StatusCode::NOT_FOUND, "not_found", "no trial results available")),
    }
}

async fn healthz(State(s): State<Shared>) -> Json<serde_json::Value> {
    Json(serde_json::json!({ "status": "ok", "model_version": s.current_version().id }))
}

async fn require_token(State(s): State<Shared>, req: Request, next: Next) -> Response {
    if let Some(token) = &s.settings.token {
        let ok = req
            .headers()
            .get(header::AUTHORIZATION)
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.strip_prefix("Bearer "))
            .is_some_and(|t| t == token);
        if !ok {
            return ApiError::new(StatusCode::UNAUTHORIZED, "unauthorized", "missing or wrong bearer token").into_response();
        }
    }
    next.run(req).await
}

pub fn router(state: Shared) -> Router {
    let api = Router::new()
        .route("/api/sources", get(list_sources))
        .route("/api/sources/{name}/candidates", get(candidates))
        .route("/api/labels", get(get_labels).post(post_label))
        .route("/api/retrain", post(retrain))
        .route("/api/metrics", get(metrics))
        .route_layer(middleware::from_fn_with_state(state.clone(), require_token));
    Router::new().route("/healthz", get(healthz)).merge(api).with_state(state)
}

/// Serves until the process receives Ctrl-C.
pub async fn serve(state: Shared, addr: std::net::SocketAddr) -> Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await.map_err(|e| Error::io(addr.to_string(), e))?;
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
        .map_err(|e| Error::io(addr.to_string(), e))
}
