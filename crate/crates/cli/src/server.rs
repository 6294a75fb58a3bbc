//! HTTP API behind `annotate serve`.
//!
//! Label writes are serialized through one mutex. Retraining runs on a
//! blocking worker and swaps the model in only once fitting has finished, so
//! readers always see the last completed model.

use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex, RwLock};
use std::time::Instant;

use axum::extract::{Path, Query, Request, State};
use axum::http::{header, HeaderValue, StatusCode};
use axum::middleware::{self, Next};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use debacer_core::annotate::{
    bootstrap_spec, bootstrap_train, sample_seed_set, suggest, AnnotateError, AnnotationState, ContextSpeech,
    LabelEntry, LabelSource,
};
use debacer_core::corpus::Corpus;
use debacer_core::partition::partition_agenda;
use debacer_core::{PipelineSpec, SpeechBlock, SpeechKey, TrainedPipeline};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::commands::load_corpus_checked;
use crate::config::RunConfig;
use crate::report::Report;
use crate::CliError;

pub const FINGERPRINT_HEADER: &str = "x-model-fingerprint";
const DEFAULT_LIMIT: usize = 20;

#[derive(Debug, Clone, Default, Serialize)]
pub struct RetrainStatus {
    pub running: bool,
    pub completed: usize,
    pub last_error: Option<String>,
    pub last_seconds: Option<f64>,
}

pub struct AppState {
    pub corpus: Corpus,
    pub annotation: Mutex<AnnotationState>,
    pub model: RwLock<Option<Arc<TrainedPipeline>>>,
    pub spec: PipelineSpec,
    /// Offered for labelling while no model exists.
    pub seed_keys: Vec<SpeechKey>,
    pub token: Option<String>,
    pub labels_out: Option<PathBuf>,
    retrain_running: AtomicBool,
    retrain: Mutex<RetrainStatus>,
}

impl AppState {
    pub fn new(corpus: Corpus, annotation: AnnotationState, spec: PipelineSpec, seed_keys: Vec<SpeechKey>) -> Self {
        Self {
            corpus,
            annotation: Mutex::new(annotation),
            model: RwLock::new(None),
            spec,
            seed_keys,
            token: None,
            labels_out: None,
            retrain_running: AtomicBool::new(false),
            retrain: Mutex::new(RetrainStatus::default()),
        }
    }

    pub fn with_token(mut self, token: Option<String>) -> Self {
        self.token = token;
        self
    }

    pub fn with_labels_out(mut self, path: Option<PathBuf>) -> Self {
        self.labels_out = path;
        self
    }

    pub fn current_model(&self) -> Option<Arc<TrainedPipeline>> {
        self.model.read().expect("model lock").clone()
    }

    pub fn fingerprint(&self) -> Option<String> {
        self.current_model().map(|m| m.fingerprint.clone())
    }

    pub fn set_model(&self, model: TrainedPipeline) {
        *self.model.write().expect("model lock") = Some(Arc::new(model));
    }

    pub fn retrain_status(&self) -> RetrainStatus {
        self.retrain.lock().expect("retrain lock").clone()
    }

    /// Fits the configured spec on a snapshot of the trusted labels.
    pub fn train_now(&self) -> Result<TrainedPipeline, AnnotateError> {
        let snapshot = self.annotation.lock().expect("annotation lock").clone();
        bootstrap_train(&snapshot, &self.corpus, &self.spec)
    }

    fn persist_labels(&self, state: &AnnotationState) -> Result<(), String> {
        let Some(path) = &self.labels_out else {
            return Ok(());
        };
        let file = std::fs::File::create(path).map_err(|e| format!("{}: {e}", path.display()))?;
        state.write_labels_csv(file).map_err(|e| e.to_string())
    }
}

pub type SharedState = Arc<AppState>;

struct ApiError(StatusCode, String);

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.0, Json(json!({ "error": self.1 }))).into_response()
    }
}

impl From<AnnotateError> for ApiError {
    fn from(e: AnnotateError) -> Self {
        let status = match e {
            AnnotateError::NotModeratorSpeech(_) => StatusCode::NOT_FOUND,
            AnnotateError::DowngradeForbidden { .. } => StatusCode::CONFLICT,
            AnnotateError::InvalidLabel { .. } | AnnotateError::BadRow { .. } => StatusCode::UNPROCESSABLE_ENTITY,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        ApiError(status, e.to_string())
    }
}

/// JSON body with the serving model's fingerprint attached.
fn with_fingerprint(state: &AppState, mut body: Value) -> Json<Value> {
    if let Value::Object(map) = &mut body {
        map.insert("model_fingerprint".into(), json!(state.fingerprint()));
    }
    Json(body)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SpeechView {
    pub key: SpeechKey,
    pub debater: String,
    pub text: String,
    pub probability: Option<f64>,
    pub uncertainty: Option<f64>,
    pub previous: Option<ContextSpeech>,
    pub next: Option<ContextSpeech>,
    pub current: Option<LabelEntry>,
}

#[derive(Debug, Deserialize)]
pub struct SpeechQuery {
    pub status: Option<String>,
    pub limit: Option<usize>,
}

fn context(corpus: &Corpus, key: &SpeechKey) -> (Option<ContextSpeech>, Option<ContextSpeech>) {
    let Some((item, i)) = corpus.locate(key) else {
        return (None, None);
    };
    let ctx = |j: usize| {
        item.speeches.get(j).map(|c| ContextSpeech {
            order: c.order,
            debater: c.debater.clone(),
            text: c.text.clone(),
        })
    };
    (i.checked_sub(1).and_then(ctx), ctx(i + 1))
}

fn plain_view(corpus: &Corpus, key: &SpeechKey, current: Option<LabelEntry>) -> Option<SpeechView> {
    let s = corpus.speech(key)?;
    let (previous, next) = context(corpus, key);
    Some(SpeechView {
        key: key.clone(),
        debater: s.debater.clone(),
        text: s.text.clone(),
        probability: None,
        uncertainty: None,
        previous,
        next,
        current,
    })
}

async fn speeches(State(state): State<SharedState>, Query(q): Query<SpeechQuery>) -> Result<Json<Value>, ApiError> {
    let limit = q.limit.unwrap_or(DEFAULT_LIMIT);
    let status = q.status.as_deref().unwrap_or("unlabeled");
    let mut ann = state.annotation.lock().expect("annotation lock");
    let views: Vec<SpeechView> = match status {
        "unlabeled" => match state.current_model() {
            Some(model) => suggest(&mut ann, &state.corpus, &model, limit)?
                .into_iter()
                .map(|s| SpeechView {
                    key: s.key,
                    debater: s.debater,
                    text: s.text,
                    probability: Some(s.probability),
                    uncertainty: Some(s.uncertainty),
                    previous: s.previous,
                    next: s.next,
                    current: s.current,
                })
                .collect(),
            // no model yet: the uniform seed sample, in corpus order
            None => state
                .seed_keys
                .iter()
                .filter(|k| !ann.labels.get(*k).is_some_and(|e| e.source.is_trusted()))
                .take(limit)
                .filter_map(|k| plain_view(&state.corpus, k, ann.labels.get(k).copied()))
                .collect(),
        },
        "labeled" => ann
            .labels
            .iter()
            .take(limit)
            .filter_map(|(k, e)| plain_view(&state.corpus, k, Some(*e)))
            .collect(),
        other => {
            return Err(ApiError(
                StatusCode::BAD_REQUEST,
                format!("status must be `unlabeled` or `labeled`, got `{other}`"),
            ))
        }
    };
    Ok(with_fingerprint(&state, json!({ "status": status, "speeches": views })))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LabelRequest {
    pub key: SpeechKey,
    pub label: u8,
    #[serde(default = "human")]
    pub source: LabelSource,
}

fn human() -> LabelSource {
    LabelSource::Human
}

async fn post_label(State(state): State<SharedState>, Json(req): Json<LabelRequest>) -> Result<Json<Value>, ApiError> {
    let mut ann = state.annotation.lock().expect("annotation lock");
    ann.apply_label(&state.corpus, &req.key, req.label, req.source)?;
    state
        .persist_labels(&ann)
        .map_err(|e| ApiError(StatusCode::INTERNAL_SERVER_ERROR, e))?;
    let entry = ann.audit.last().cloned();
    let body = json!({
        "key": req.key,
        "label": req.label,
        "source": req.source,
        "audit": entry,
        "audit_len": ann.audit.len(),
    });
    Ok(with_fingerprint(&state, body))
}

async fn start_retrain(State(state): State<SharedState>) -> Result<(StatusCode, Json<Value>), ApiError> {
    if state
        .retrain_running
        .compare_exchange(false, true, Ordering::SeqCst, Ordering::SeqCst)
        .is_err()
    {
        return Err(ApiError(StatusCode::CONFLICT, "a retrain job is already running".into()));
    }
    state.retrain.lock().expect("retrain lock").running = true;
    let worker = state.clone();
    tokio::task::spawn_blocking(move || {
        let start = Instant::now();
        let outcome = worker.train_now();
        let mut status = worker.retrain.lock().expect("retrain lock");
        match outcome {
            Ok(model) => {
                worker.annotation.lock().expect("annotation lock").model_fingerprint = Some(model.fingerprint.clone());
                worker.set_model(model);
                status.completed += 1;
                status.last_error = None;
            }
            Err(e) => status.last_error = Some(e.to_string()),
        }
        status.last_seconds = Some(start.elapsed().as_secs_f64());
        status.running = false;
        worker.retrain_running.store(false, Ordering::SeqCst);
    });
    Ok((StatusCode::ACCEPTED, with_fingerprint(&state, json!({ "started": true }))))
}

async fn retrain_status(State(state): State<SharedState>) -> Json<Value> {
    let status = serde_json::to_value(state.retrain_status()).expect("status serializes");
    with_fingerprint(&state, json!({ "retrain": status }))
}

#[derive(Debug, Serialize)]
struct PartitionView {
    agenda_item: String,
    speeches: Vec<SpeechSummary>,
    blocks: Vec<SpeechBlock>,
    decisions: Vec<debacer_core::partition::Decision>,
}

#[derive(Debug, Serialize)]
struct SpeechSummary {
    order: u32,
    debater: String,
    is_moderator: bool,
}

async fn partitions(State(state): State<SharedState>, Path(minute_id): Path<String>) -> Result<Json<Value>, ApiError> {
    let minute = state
        .corpus
        .minutes
        .iter()
        .find(|m| m.minute_id == minute_id)
        .ok_or_else(|| ApiError(StatusCode::NOT_FOUND, format!("unknown minute `{minute_id}`")))?;
    let model = state
        .current_model()
        .ok_or_else(|| ApiError(StatusCode::CONFLICT, "no trained model yet".into()))?;
    let label = state.annotation.lock().expect("annotation lock").agenda_label.clone();
    let mut items = Vec::new();
    for item in minute.agenda_items.iter().filter(|a| a.label == label) {
        let p = partition_agenda(item, model.as_ref())
            .map_err(|e| ApiError(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?;
        items.push(PartitionView {
            agenda_item: item.label.clone(),
            speeches: item
                .speeches
                .iter()
                .map(|s| SpeechSummary {
                    order: s.order,
                    debater: s.debater.clone(),
                    is_moderator: s.is_moderator,
                })
                .collect(),
            blocks: p.blocks,
            decisions: p.decisions,
        });
    }
    Ok(with_fingerprint(&state, json!({ "minute_id": minute_id, "items": items })))
}

async fn export_labels(State(state): State<SharedState>) -> Result<Response, ApiError> {
    let mut buf = Vec::new();
    state.annotation.lock().expect("annotation lock").write_labels_csv(&mut buf)?;
    Ok(([(header::CONTENT_TYPE, "text/csv; charset=utf-8")], buf).into_response())
}

async fn audit(State(state): State<SharedState>) -> Json<Value> {
    let entries = state.annotation.lock().expect("annotation lock").audit.clone();
    with_fingerprint(&state, json!({ "audit": entries }))
}

async fn require_token(State(state): State<SharedState>, req: Request, next: Next) -> Response {
    if let Some(token) = &state.token {
        let ok = req
            .headers()
            .get(header::AUTHORIZATION)
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.strip_prefix("Bearer "))
            .is_some_and(|v| v == token);
        if !ok {
            return ApiError(StatusCode::UNAUTHORIZED, "missing or wrong bearer token".into()).into_response();
        }
    }
    next.run(req).await
}

async fn stamp_fingerprint(State(state): State<SharedState>, req: Request, next: Next) -> Response {
    let mut resp = next.run(req).await;
    let fp = state.fingerprint().unwrap_or_else(|| "none".into());
    if let Ok(v) = HeaderValue::from_str(&fp) {
        resp.headers_mut().insert(FINGERPRINT_HEADER, v);
    }
    resp
}

pub fn router(state: SharedState) -> Router {
    Router::new()
        .route("/api/speeches", get(speeches))
        .route("/api/labels", post(post_label))
        .route("/api/retrain", post(start_retrain).get(retrain_status))
        .route("/api/partitions/{minute_id}", get(partitions))
        .route("/api/export/labels", get(export_labels))
        .route("/api/audit", get(audit))
        .layer(middleware::from_fn_with_state(state.clone(), require_token))
        .layer(middleware::from_fn_with_state(state.clone(), stamp_fingerprint))
        .with_state(state)
}

/// Loads corpus and labels, trains an initial model when enough trusted
/// labels exist, and serves until Ctrl-C.
pub fn serve_blocking(
    cfg: &RunConfig,
    report: &mut Report,
    seed_size: usize,
    labels_out: Option<PathBuf>,
) -> Result<(), CliError> {
    let corpus = load_corpus_checked(cfg, report)?;
    let mut annotation = AnnotationState::new(cfg.agenda_label.clone());
    if let Some(path) = &cfg.labels {
        let path = RunConfig::existing(Some(path), "labels")?;
        let file = std::fs::File::open(&path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
        for (key, entry) in AnnotationState::read_labels_csv(file)? {
            annotation.apply_label(&corpus, &key, entry.label, entry.source)?;
        }
    }
    let available = corpus.moderator_speeches(&cfg.agenda_label).len();
    let seed_keys = sample_seed_set(&corpus, &cfg.agenda_label, seed_size.min(available), cfg.seed)?;
    let state = AppState::new(corpus, annotation, bootstrap_spec(cfg.seed), seed_keys)
        .with_token(cfg.token.clone())
        .with_labels_out(labels_out);
    match state.train_now() {
        Ok(model) => {
            println!("initial model {}", model.fingerprint);
            state.set_model(model);
        }
        Err(AnnotateError::InsufficientLabels { class, have }) => {
            println!("no initial model: {have} trusted labels of class {class}; label the seed sample first");
        }
        Err(e) => return Err(e.into()),
    }
    let state = Arc::new(state);
    let runtime = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(|e| CliError::Config(format!("runtime: {e}")))?;
    let app = router(state.clone());
    let bind = cfg.bind.clone();
    runtime.block_on(async move {
        let listener = tokio::net::TcpListener::bind(&bind)
            .await
            .map_err(|e| CliError::Config(format!("bind {bind}: {e}")))?;
        println!("serving on http://{bind}");
        axum::serve(listener, app)
            .with_graceful_shutdown(async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await
            .map_err(|e| CliError::Data(format!("server: {e}")))
    })?;
    let ann = state.annotation.lock().expect("annotation lock");
    report.set_result(&json!({
        "labels": ann.labels.len(),
        "trusted": ann.trusted_labels().len(),
        "audit_entries": ann.audit.len(),
        "retrains": state.retrain_status().completed,
        "model_fingerprint": state.fingerprint(),
    }))
}
