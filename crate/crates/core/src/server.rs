//! HTTP front end for lookups and episodes. Each episode sits behind its
//! own lock, so concurrent episodes never block one another.

use std::collections::{BTreeMap, HashMap};
use std::net::SocketAddr;
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use axum::extract::{Path as UrlPath, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value as Json_};

use crate::episode::{EpisodeError, EpisodeOptions, RewardMode, Session};
use crate::lookup::{load_bundle_file, ExperimentTable, TaskBundle};
use crate::model::{validate, CandidateMode};
use crate::proposal::{parse_strict, render_proposal};

pub struct AppState {
    bundles: BTreeMap<String, Arc<TaskBundle>>,
    episodes: Mutex<HashMap<String, Arc<Mutex<Live>>>>,
    next_id: AtomicU64,
}

struct Live {
    bundle: Arc<TaskBundle>,
    session: Session,
}

impl AppState {
    pub fn new(bundles: Vec<TaskBundle>) -> Self {
        Self {
            bundles: bundles.into_iter().map(|b| (b.task_id.clone(), Arc::new(b))).collect(),
            episodes: Mutex::new(HashMap::new()),
            next_id: AtomicU64::new(1),
        }
    }

    /// Loads every bundle file in `dir` (`manifest.json` is skipped).
    pub fn from_dir(dir: &Path) -> Result<Self, String> {
        let mut paths: Vec<_> = std::fs::read_dir(dir)
            .map_err(|e| format!("{}: {e}", dir.display()))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "json") && !p.ends_with("manifest.json"))
            .collect();
        paths.sort();
        let bundles = paths
            .iter()
            .map(|p| load_bundle_file(p).map_err(|e| format!("{}: {e}", p.display())))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self::new(bundles))
    }
}

pub struct ApiError(StatusCode, String);

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.0, Json(json!({ "error": self.1 }))).into_response()
    }
}

fn not_found(what: &str, id: &str) -> ApiError {
    ApiError(StatusCode::NOT_FOUND, format!("unknown {what} `{id}`"))
}

type ApiResult<T> = Result<Json<T>, ApiError>;

fn bundle(state: &AppState, task: &str) -> Result<Arc<TaskBundle>, ApiError> {
    state.bundles.get(task).cloned().ok_or_else(|| not_found("task", task))
}

fn table<'a>(b: &'a TaskBundle, env: &str) -> Result<&'a ExperimentTable, ApiError> {
    b.experiment(env).ok_or_else(|| not_found("environment", env))
}

/// A config is either proposal text or a JSON object of dimension values.
fn config_text(v: &Json_) -> String {
    match v {
        Json_::String(s) => s.clone(),
        other => other.to_string(),
    }
}

async fn list_tasks(State(s): State<Arc<AppState>>) -> Json<Vec<Json_>> {
    Json(
        s.bundles
            .values()
            .map(|b| {
                json!({
                    "task_id": b.task_id,
                    "task_text": b.task_text,
                    "direction": b.direction,
                    "fidelity_key": b.fidelity_key,
                    "envs": b.experiments.iter().map(|e| &e.experiment_id).collect::<Vec<_>>(),
                })
            })
            .collect(),
    )
}

async fn list_envs(State(s): State<Arc<AppState>>, UrlPath(task): UrlPath<String>) -> ApiResult<Vec<Json_>> {
    let b = bundle(&s, &task)?;
    Ok(Json(
        b.experiments
            .iter()
            .map(|e| {
                json!({
                    "env_id": e.experiment_id,
                    "env_text": e.env_text,
                    "fidelity": e.fidelity,
                    "records": e.len(),
                })
            })
            .collect(),
    ))
}

async fn env_space(
    State(s): State<Arc<AppState>>,
    UrlPath((task, env)): UrlPath<(String, String)>,
) -> ApiResult<Json_> {
    let b = bundle(&s, &task)?;
    let t = table(&b, &env)?;
    let mode = t.space.mode();
    let candidates: Option<Vec<String>> = (mode == CandidateMode::ExplicitList)
        .then(|| t.space.candidates().iter().map(|c| render_proposal(c, &t.space)).collect());
    Ok(Json(json!({
        "dimensions": t.space.dimensions(),
        "mode": mode,
        "candidates": candidates,
    })))
}

#[derive(Deserialize)]
struct QueryBody {
    config: Json_,
}

async fn query(
    State(s): State<Arc<AppState>>,
    UrlPath((task, env)): UrlPath<(String, String)>,
    Json(body): Json<QueryBody>,
) -> ApiResult<Json_> {
    let b = bundle(&s, &task)?;
    let t = table(&b, &env)?;
    let text = config_text(&body.config);
    let config = parse_strict(&text, &t.space).map_err(|e| ApiError(StatusCode::UNPROCESSABLE_ENTITY, e.to_string()))?;
    let report = validate(&config, &t.space);
    if !report.is_valid() {
        return Err(ApiError(StatusCode::UNPROCESSABLE_ENTITY, format!("{:?}", report.diagnostics)));
    }
    let outcome = t
        .query(&config)
        .map_err(|e| ApiError(StatusCode::NOT_FOUND, e.to_string()))?;
    Ok(Json(json!({
        "score": outcome.score,
        "additional_information": outcome.details,
    })))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CreateEpisode {
    pub task: String,
    pub env: String,
    pub budget: usize,
    #[serde(default)]
    pub episode_id: Option<String>,
    #[serde(default)]
    pub matching: Option<bool>,
    #[serde(default)]
    pub reward_mode: Option<RewardMode>,
    #[serde(default)]
    pub method: Option<String>,
    #[serde(default)]
    pub seed: Option<u64>,
}

async fn create_episode(State(s): State<Arc<AppState>>, Json(req): Json<CreateEpisode>) -> Result<(StatusCode, Json<Json_>), ApiError> {
    let b = bundle(&s, &req.task)?;
    table(&b, &req.env)?;
    let id = req
        .episode_id
        .clone()
        .unwrap_or_else(|| format!("episode-{}", s.next_id.fetch_add(1, Ordering::Relaxed)));
    let defaults = EpisodeOptions::default();
    let options = EpisodeOptions {
        matching: req.matching.unwrap_or(defaults.matching),
        reward_mode: req.reward_mode.unwrap_or(defaults.reward_mode),
        method: req.method.clone().unwrap_or(defaults.method),
        seed: req.seed,
        wall_clock: false,
    };
    let session = Session::start(&b, &req.env, req.budget, &id, options)
        .map_err(|e| ApiError(StatusCode::UNPROCESSABLE_ENTITY, e.to_string()))?;
    let mut episodes = s.episodes.lock().expect("episode map lock");
    if episodes.contains_key(&id) {
        return Err(ApiError(StatusCode::CONFLICT, format!("episode `{id}` already exists")));
    }
    episodes.insert(id.clone(), Arc::new(Mutex::new(Live { bundle: b, session })));
    Ok((
        StatusCode::CREATED,
        Json(json!({ "episode_id": id, "budget": req.budget, "remaining": req.budget })),
    ))
}

fn live(s: &AppState, id: &str) -> Result<Arc<Mutex<Live>>, ApiError> {
    s.episodes
        .lock()
        .expect("episode map lock")
        .get(id)
        .cloned()
        .ok_or_else(|| not_found("episode", id))
}

#[derive(Deserialize)]
struct StepBody {
    config: Json_,
}

async fn step(
    State(s): State<Arc<AppState>>,
    UrlPath(id): UrlPath<String>,
    Json(body): Json<StepBody>,
) -> ApiResult<Json_> {
    let ep = live(&s, &id)?;
    let mut ep = ep.lock().expect("episode lock");
    let Live { bundle, session } = &mut *ep;
    let t = bundle.experiment(&session.state().experiment_id).expect("episode table exists");
    let obs = session.step(t, &config_text(&body.config)).map_err(|e| match e {
        EpisodeError::BudgetExhausted { .. } | EpisodeError::Finalized => ApiError(StatusCode::CONFLICT, e.to_string()),
        other => ApiError(StatusCode::UNPROCESSABLE_ENTITY, other.to_string()),
    })?;
    if session.is_finished() {
        session.finish();
    }
    let mut v = serde_json::to_value(&obs).expect("observation serializes");
    if let Some(summary) = session.summary() {
        v["episode_end"] = serde_json::to_value(summary).expect("summary serializes");
    }
    Ok(Json(v))
}

async fn get_episode(State(s): State<Arc<AppState>>, UrlPath(id): UrlPath<String>) -> ApiResult<Json_> {
    let ep = live(&s, &id)?;
    let ep = ep.lock().expect("episode lock");
    let log = ep.session.log();
    Ok(Json(json!({
        "episode_id": id,
        "task": log.header.task_id,
        "env": log.header.experiment_id,
        "budget": log.header.budget,
        "remaining": ep.session.state().remaining(),
        "finished": ep.session.is_finished(),
        "turns": log.turns,
        "summary": log.summary,
    })))
}

async fn get_log(State(s): State<Arc<AppState>>, UrlPath(id): UrlPath<String>) -> Result<Response, ApiError> {
    let ep = live(&s, &id)?;
    let text = ep.lock().expect("episode lock").session.log().to_jsonl();
    Ok(([(header::CONTENT_TYPE, "application/x-ndjson")], text).into_response())
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/tasks", get(list_tasks))
        .route("/tasks/{task}/envs", get(list_envs))
        .route("/tasks/{task}/envs/{env}/space", get(env_space))
        .route("/tasks/{task}/envs/{env}/query", post(query))
        .route("/episodes", post(create_episode))
        .route("/episodes/{id}", get(get_episode))
        .route("/episodes/{id}/step", post(step))
        .route("/episodes/{id}/log", get(get_log))
        .with_state(state)
}

pub async fn serve(state: AppState, addr: SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    axum::serve(listener, router(Arc::new(state))).await
}
