//! HTTP API over a [`Store`]: review queue, decisions, runs, gold and
//! reports.
//!
//! All writes go through one mutex-guarded store, so decisions are
//! serialized. Pipeline jobs run on blocking threads with cloned inputs and
//! commit their output in a single record when done.

use std::collections::BTreeMap;
use std::sync::{Arc, Mutex, MutexGuard};

use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use chrono::Utc;
use serde::{Deserialize, Serialize};
use serde_json::json;

use regrel_core::corpus::{Paragraph, RegulatoryDocument};
use regrel_core::eval::GoldRecord;
use regrel_core::judge::ChatProvider;
use regrel_core::process::ProcessNode;
use regrel_core::review::{Decision, EnqueuePolicy, QueueFilter, ReviewError, ReviewItem, ReviewStatus};
use regrel_core::Level;

use crate::remote::{RemoteConfig, RemoteProvider};
use crate::runs::{execute_judge, execute_rank, run_report, JudgeRequest, RankRequest};
use crate::store::{DecideError, RunInfo, RunKind, RunStatus, Store, StoreRecord};

pub type SharedChat = Arc<dyn ChatProvider + Send + Sync>;

#[derive(Clone)]
pub struct AppState {
    store: Arc<Mutex<Store>>,
    chat: Option<SharedChat>,
    remote: Option<RemoteConfig>,
}

impl AppState {
    pub fn new(store: Store) -> Self {
        AppState {
            store: Arc::new(Mutex::new(store)),
            chat: None,
            remote: None,
        }
    }

    /// Chat provider for judge runs; without one, judge runs use the remote
    /// provider.
    pub fn with_chat(mut self, chat: SharedChat) -> Self {
        self.chat = Some(chat);
        self
    }

    pub fn with_remote(mut self, remote: Option<RemoteConfig>) -> Self {
        self.remote = remote;
        self
    }

    pub fn store(&self) -> MutexGuard<'_, Store> {
        self.store.lock().unwrap_or_else(|e| e.into_inner())
    }
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/api/queue", get(queue))
        .route("/api/items/:id/decision", post(decide))
        .route("/api/process/:model_id", get(process))
        .route("/api/runs/rank", post(start_rank))
        .route("/api/runs/judge", post(start_judge))
        .route("/api/runs/:id", get(run_status))
        .route("/api/runs/:id/enqueue", post(enqueue))
        .route("/api/gold/export", get(gold_export))
        .route("/api/gold/import", post(gold_import))
        .route("/api/reports/:run_id", get(report))
        .with_state(state)
}

pub async fn serve(state: AppState, listen: &str) -> anyhow::Result<()> {
    let listener = tokio::net::TcpListener::bind(listen).await?;
    log::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(state)).await?;
    Ok(())
}

pub struct ApiError {
    status: StatusCode,
    body: serde_json::Value,
}

impl ApiError {
    fn new(status: StatusCode, message: impl std::fmt::Display) -> Self {
        ApiError {
            status,
            body: json!({ "error": message.to_string() }),
        }
    }

    fn not_found(message: impl std::fmt::Display) -> Self {
        Self::new(StatusCode::NOT_FOUND, message)
    }

    fn bad_request(message: impl std::fmt::Display) -> Self {
        Self::new(StatusCode::BAD_REQUEST, message)
    }
}

impl From<anyhow::Error> for ApiError {
    fn from(e: anyhow::Error) -> Self {
        ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, format!("{e:#}"))
    }
}

impl From<ReviewError> for ApiError {
    fn from(e: ReviewError) -> Self {
        match e {
            ReviewError::Conflict(item) => ApiError {
                status: StatusCode::CONFLICT,
                body: json!({ "error": format!("item {} already decided", item.item_id), "item": item }),
            },
            ReviewError::UnknownItem(_) => ApiError::not_found(e),
            ReviewError::KeyReuse(_) => ApiError::new(StatusCode::CONFLICT, e),
            _ => ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, e),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

#[derive(Debug, Default, Deserialize)]
pub struct QueueParams {
    #[serde(default)]
    status: Option<ReviewStatus>,
    #[serde(default)]
    level: Option<u8>,
    #[serde(default)]
    method: Option<String>,
    #[serde(default)]
    model_id: Option<String>,
    #[serde(default)]
    offset: usize,
    #[serde(default = "default_limit")]
    limit: usize,
}

fn default_limit() -> usize {
    50
}

#[derive(Debug, Serialize)]
pub struct QueueEntry {
    pub item: ReviewItem,
    pub paragraph: Option<Paragraph>,
    pub document: Option<RegulatoryDocument>,
    pub node: Option<ProcessNode>,
    /// Ancestor chain of the node, root first.
    pub node_path: Vec<ProcessNode>,
}

#[derive(Debug, Serialize)]
pub struct QueuePage {
    pub total: usize,
    pub offset: usize,
    pub items: Vec<QueueEntry>,
}

async fn queue(State(app): State<AppState>, Query(p): Query<QueueParams>) -> ApiResult<Json<QueuePage>> {
    let level = p
        .level
        .map(Level::try_from)
        .transpose()
        .map_err(ApiError::bad_request)?;
    let filter = QueueFilter {
        status: p.status,
        level,
        method: p.method,
    };
    let store = app.store();
    let state = store.state();
    let paragraphs: BTreeMap<&str, &Paragraph> = state
        .sets
        .values()
        .flat_map(|s| s.paragraphs())
        .map(|p| (p.para_id.as_str(), p))
        .collect();
    let mut all: Vec<(&ReviewItem, &regrel_core::process::ProcessModel)> = Vec::new();
    for (model_id, review) in &state.reviews {
        if p.model_id.as_ref().is_some_and(|m| m != model_id) {
            continue;
        }
        all.extend(review.queue(&filter).into_iter().map(|i| (i, review.model())));
    }
    all.sort_by(|a, b| {
        let sa = a.0.machine_score.unwrap_or(f64::NEG_INFINITY);
        let sb = b.0.machine_score.unwrap_or(f64::NEG_INFINITY);
        sb.total_cmp(&sa).then_with(|| a.0.item_id.cmp(&b.0.item_id))
    });
    let total = all.len();
    let items = all
        .into_iter()
        .skip(p.offset)
        .take(p.limit)
        .map(|(item, model)| {
            let paragraph = paragraphs.get(item.para_id.as_str()).map(|p| (*p).clone());
            let document = paragraph.as_ref().and_then(|p| state.documents.get(&p.doc_id)).cloned();
            let mut node_path: Vec<ProcessNode> = model.ancestors(&item.query_node_id).into_iter().cloned().collect();
            node_path.reverse();
            QueueEntry {
                paragraph,
                document,
                node: model.node(&item.query_node_id).cloned(),
                node_path,
                item: item.clone(),
            }
        })
        .collect();
    Ok(Json(QueuePage {
        total,
        offset: p.offset,
        items,
    }))
}

async fn decide(
    State(app): State<AppState>,
    Path(id): Path<String>,
    Json(decision): Json<Decision>,
) -> ApiResult<Response> {
    let mut store = app.store();
    match store.decide(&id, &decision, Utc::now()) {
        Ok(r) => Ok(Json(r).into_response()),
        Err(DecideError::Review(e)) => Err(e.into()),
        Err(DecideError::Store(e)) => Err(ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, format!("{e:#}"))),
    }
}

async fn process(State(app): State<AppState>, Path(model_id): Path<String>) -> ApiResult<Response> {
    let store = app.store();
    let model = store
        .state()
        .models
        .get(&model_id)
        .ok_or_else(|| ApiError::not_found(format!("unknown model {model_id}")))?;
    Ok(Json(model).into_response())
}

fn start_run(
    app: &AppState,
    kind: RunKind,
    model_id: &str,
    set_id: &str,
    params: serde_json::Value,
) -> ApiResult<RunInfo> {
    let mut store = app.store();
    let state = store.state();
    if !state.models.contains_key(model_id) {
        return Err(ApiError::not_found(format!("unknown model {model_id}")));
    }
    if !state.sets.contains_key(set_id) {
        return Err(ApiError::not_found(format!("unknown set {set_id}")));
    }
    let run = RunInfo {
        run_id: store.next_run_id(),
        kind,
        model_id: model_id.into(),
        set_id: set_id.into(),
        params,
        status: RunStatus::Running,
        error: None,
        started_at: Utc::now(),
        finished_at: None,
    };
    store.commit(StoreRecord::RunStarted { run: run.clone() })?;
    Ok(run)
}

fn finish_run(app: &AppState, run_id: String, result: anyhow::Result<regrel_core::review::RunOutput>) {
    let record = match result {
        Ok(output) => StoreRecord::RunFinished {
            run_id: run_id.clone(),
            output,
            at: Utc::now(),
        },
        Err(e) => {
            log::error!("run {run_id} failed: {e:#}");
            StoreRecord::RunFailed {
                run_id: run_id.clone(),
                error: format!("{e:#}"),
                at: Utc::now(),
            }
        }
    };
    if let Err(e) = app.store().commit(record) {
        log::error!("could not record the end of run {run_id}: {e:#}");
    }
}

async fn start_rank(State(app): State<AppState>, Json(req): Json<RankRequest>) -> ApiResult<Response> {
    req.config().validate().map_err(ApiError::bad_request)?;
    let run = start_run(
        &app,
        RunKind::Rank,
        &req.model_id,
        &req.set_id,
        serde_json::to_value(&req).expect("request serializes"),
    )?;
    let (set, model) = {
        let store = app.store();
        let s = store.state();
        (s.sets[&req.set_id].clone(), s.models[&req.model_id].clone())
    };
    let run_id = run.run_id.clone();
    let job = app.clone();
    tokio::task::spawn_blocking(move || {
        let result = execute_rank(&run_id, &req, &set, &model, job.remote.as_ref());
        finish_run(&job, run_id, result);
    });
    Ok((StatusCode::ACCEPTED, Json(run)).into_response())
}

async fn start_judge(State(app): State<AppState>, Json(req): Json<JudgeRequest>) -> ApiResult<Response> {
    let chat: SharedChat = match (&app.chat, &app.remote) {
        (Some(c), _) => c.clone(),
        (None, Some(cfg)) => Arc::new(RemoteProvider::new(cfg.clone()).map_err(ApiError::bad_request)?),
        (None, None) => return Err(ApiError::bad_request("no chat provider configured")),
    };
    let run = start_run(
        &app,
        RunKind::Judge,
        &req.model_id,
        &req.set_id,
        serde_json::to_value(&req).expect("request serializes"),
    )?;
    let (set, model, documents) = {
        let store = app.store();
        let s = store.state();
        (
            s.sets[&req.set_id].clone(),
            s.models[&req.model_id].clone(),
            s.documents.clone(),
        )
    };
    let run_id = run.run_id.clone();
    let job = app.clone();
    tokio::task::spawn_blocking(move || {
        let result = execute_judge(&run_id, &req, chat.as_ref(), &set, &documents, &model);
        finish_run(&job, run_id, result);
    });
    Ok((StatusCode::ACCEPTED, Json(run)).into_response())
}

async fn run_status(State(app): State<AppState>, Path(id): Path<String>) -> ApiResult<Response> {
    let store = app.store();
    let run = store
        .state()
        .runs
        .get(&id)
        .ok_or_else(|| ApiError::not_found(format!("unknown run {id}")))?;
    Ok(Json(run).into_response())
}

async fn enqueue(
    State(app): State<AppState>,
    Path(id): Path<String>,
    Json(policy): Json<EnqueuePolicy>,
) -> ApiResult<Response> {
    let mut store = app.store();
    if !store.state().runs.contains_key(&id) {
        return Err(ApiError::not_found(format!("unknown run {id}")));
    }
    let items = store.enqueue(&id, policy)?;
    Ok(Json(json!({ "enqueued": items.len(), "items": items })).into_response())
}

#[derive(Debug, Default, Deserialize)]
pub struct ModelParam {
    #[serde(default)]
    model_id: Option<String>,
}

/// The requested model, or the only one when the store holds exactly one.
fn pick_model(store: &Store, requested: Option<String>) -> ApiResult<String> {
    let models = &store.state().models;
    match requested {
        Some(id) if models.contains_key(&id) => Ok(id),
        Some(id) => Err(ApiError::not_found(format!("unknown model {id}"))),
        None if models.len() == 1 => Ok(models.keys().next().expect("one model").clone()),
        None => Err(ApiError::bad_request("model_id is required")),
    }
}

async fn gold_export(State(app): State<AppState>, Query(p): Query<ModelParam>) -> ApiResult<Response> {
    let store = app.store();
    let model_id = pick_model(&store, p.model_id)?;
    let body = store.state().reviews[&model_id].gold().to_jsonl();
    Ok(([(header::CONTENT_TYPE, "application/x-ndjson")], body).into_response())
}

async fn gold_import(State(app): State<AppState>, Query(p): Query<ModelParam>, body: String) -> ApiResult<Response> {
    let records: Vec<GoldRecord> =
        crate::io::parse_jsonl(&body, "request body").map_err(|e| ApiError::bad_request(format!("{e:#}")))?;
    let mut store = app.store();
    let model_id = pick_model(&store, p.model_id)?;
    let n = records.len();
    store.import_gold(&model_id, records)?;
    Ok(Json(json!({ "imported": n })).into_response())
}

async fn report(State(app): State<AppState>, Path(run_id): Path<String>) -> ApiResult<Response> {
    let store = app.store();
    let s = store.state();
    let run = s
        .runs
        .get(&run_id)
        .ok_or_else(|| ApiError::not_found(format!("unknown run {run_id}")))?;
    let output = s
        .outputs
        .get(&run_id)
        .ok_or_else(|| ApiError::new(StatusCode::CONFLICT, format!("run {run_id} has no output")))?;
    let report = run_report(
        output,
        &s.sets[&run.set_id],
        &s.models[&run.model_id],
        s.reviews[&run.model_id].gold(),
    )?;
    Ok(Json(report).into_response())
}
