//! Versioned HTTP API over an [`ArenaStore`].
//!
//! Routes, all under `/v1`:
//!
//! | method | path | body |
//! |---|---|---|
//! | GET | `/health` | |
//! | POST | `/generators` | `{id}` |
//! | POST | `/sessions` | `{expert_id, paper_id, generator_a, generator_b, iterations?}` |
//! | GET | `/sessions/{id}` | |
//! | POST | `/sessions/{id}/drafts` | `{iteration, slot, text}` |
//! | POST | `/sessions/{id}/feedback` | `{iteration, slot, text}` |
//! | POST | `/sessions/{id}/judgments` | `{iteration, criterion, choice}` |
//! | GET | `/leaderboard?criterion=` | |
//! | GET | `/next-pair` | |
//!
//! Session responses never contain generator ids. Posts answer `201` when
//! they record something new and `200` when they repeat recorded state.

use std::collections::BTreeMap;
use std::future::Future;
use std::sync::Arc;

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use rwgrade_core::arena::{
    annotate, ArenaCriterion, ArenaError, ArenaStore, Command, EventKind, LeaderboardEntry, SessionView, Side, Slot,
};
use rwgrade_core::corpus::CitationSet;
use serde::{Deserialize, Serialize};
use serde_json::json;

#[derive(Clone)]
pub struct AppState {
    pub store: Arc<ArenaStore>,
    /// Papers by id; when present, drafts are annotated and unknown papers rejected.
    pub corpus: Option<Arc<BTreeMap<String, CitationSet>>>,
    pub tolerance: f64,
}

impl AppState {
    pub fn new(store: Arc<ArenaStore>) -> Self {
        Self {
            store,
            corpus: None,
            tolerance: rwgrade_core::metrics::DEFAULT_TOLERANCE,
        }
    }

    pub fn with_corpus(mut self, corpus: Vec<CitationSet>) -> Self {
        self.corpus = Some(Arc::new(corpus.into_iter().map(|s| (s.id().to_string(), s)).collect()));
        self
    }

    fn view(&self, id: &str) -> Result<SessionView, ApiError> {
        let corpus = self.corpus.clone();
        let tolerance = self.tolerance;
        let lookup = move |paper: &str, draft: &str| {
            corpus
                .as_ref()
                .and_then(|c| c.get(paper))
                .and_then(|set| annotate(set, draft, tolerance))
        };
        Ok(self.store.snapshot().session_view(id, &lookup)?)
    }
}

#[derive(Debug)]
pub struct ApiError(StatusCode, String);

impl From<ArenaError> for ApiError {
    fn from(e: ArenaError) -> Self {
        let status = match e {
            ArenaError::Validation(_) => StatusCode::BAD_REQUEST,
            ArenaError::NotFound(_) => StatusCode::NOT_FOUND,
            ArenaError::Conflict(_) => StatusCode::CONFLICT,
            ArenaError::Io(_) | ArenaError::Corrupt { .. } => StatusCode::INTERNAL_SERVER_ERROR,
        };
        ApiError(status, e.to_string())
    }
}

impl From<JsonRejection> for ApiError {
    fn from(e: JsonRejection) -> Self {
        ApiError(StatusCode::BAD_REQUEST, e.body_text())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        if self.0.is_server_error() {
            log::error!("{}", self.1);
        }
        (self.0, Json(json!({"error": self.1}))).into_response()
    }
}

type Body<T> = Result<Json<T>, JsonRejection>;

async fn submit(state: &AppState, command: Command) -> Result<bool, ApiError> {
    let store = state.store.clone();
    tokio::task::spawn_blocking(move || store.submit(command))
        .await
        .map_err(|e| ApiError(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?
        .map(|e| e.is_some())
        .map_err(ApiError::from)
}

fn created(fresh: bool) -> StatusCode {
    if fresh {
        StatusCode::CREATED
    } else {
        StatusCode::OK
    }
}

async fn health() -> Json<serde_json::Value> {
    Json(json!({"status": "ok"}))
}

#[derive(Deserialize)]
struct RegisterBody {
    id: String,
}

async fn register(State(state): State<AppState>, body: Body<RegisterBody>) -> Result<impl IntoResponse, ApiError> {
    let Json(b) = body?;
    let fresh = submit(&state, Command::RegisterGenerator { id: b.id.clone() }).await?;
    Ok((created(fresh), Json(json!({"id": b.id}))))
}

#[derive(Deserialize)]
struct CreateBody {
    expert_id: String,
    paper_id: String,
    generator_a: String,
    generator_b: String,
    #[serde(default)]
    iterations: Option<usize>,
}

async fn create_session(State(state): State<AppState>, body: Body<CreateBody>) -> Result<impl IntoResponse, ApiError> {
    let Json(b) = body?;
    if let Some(corpus) = &state.corpus {
        if !corpus.contains_key(&b.paper_id) {
            return Err(ArenaError::NotFound(format!("paper {}", b.paper_id)).into());
        }
    }
    let store = state.store.clone();
    let command = Command::CreateSession {
        expert_id: b.expert_id,
        paper_id: b.paper_id,
        generator_a: b.generator_a,
        generator_b: b.generator_b,
        iterations: b.iterations,
    };
    let event = tokio::task::spawn_blocking(move || store.submit(command))
        .await
        .map_err(|e| ApiError(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))??;
    let Some(EventKind::SessionCreated { session: id, .. }) = event.map(|e| e.kind) else {
        return Err(ApiError(StatusCode::INTERNAL_SERVER_ERROR, "session was not created".into()));
    };
    Ok((StatusCode::CREATED, Json(state.view(&id)?)))
}

async fn get_session(State(state): State<AppState>, Path(id): Path<String>) -> Result<Json<SessionView>, ApiError> {
    Ok(Json(state.view(&id)?))
}

#[derive(Deserialize)]
struct TextBody {
    iteration: usize,
    slot: Slot,
    text: String,
}

async fn post_draft(
    State(state): State<AppState>,
    Path(id): Path<String>,
    body: Body<TextBody>,
) -> Result<impl IntoResponse, ApiError> {
    let Json(b) = body?;
    let fresh = submit(
        &state,
        Command::PostDraft {
            session: id.clone(),
            iteration: b.iteration,
            slot: b.slot,
            text: b.text,
        },
    )
    .await?;
    Ok((created(fresh), Json(state.view(&id)?)))
}

async fn post_feedback(
    State(state): State<AppState>,
    Path(id): Path<String>,
    body: Body<TextBody>,
) -> Result<impl IntoResponse, ApiError> {
    let Json(b) = body?;
    let fresh = submit(
        &state,
        Command::PostFeedback {
            session: id.clone(),
            iteration: b.iteration,
            slot: b.slot,
            text: b.text,
        },
    )
    .await?;
    Ok((created(fresh), Json(state.view(&id)?)))
}

#[derive(Deserialize)]
struct JudgmentBody {
    iteration: usize,
    criterion: ArenaCriterion,
    choice: Side,
}

async fn post_judgment(
    State(state): State<AppState>,
    Path(id): Path<String>,
    body: Body<JudgmentBody>,
) -> Result<impl IntoResponse, ApiError> {
    let Json(b) = body?;
    let fresh = submit(
        &state,
        Command::PostJudgment {
            session: id.clone(),
            iteration: b.iteration,
            criterion: b.criterion,
            choice: b.choice,
        },
    )
    .await?;
    Ok((created(fresh), Json(state.view(&id)?)))
}

#[derive(Deserialize)]
struct LeaderboardQuery {
    criterion: Option<ArenaCriterion>,
}

#[derive(Serialize)]
struct Leaderboard {
    criterion: Option<ArenaCriterion>,
    matches: usize,
    entries: Vec<LeaderboardEntry>,
}

async fn leaderboard(
    State(state): State<AppState>,
    query: Result<Query<LeaderboardQuery>, axum::extract::rejection::QueryRejection>,
) -> Result<Json<impl Serialize>, ApiError> {
    let Query(q) = query.map_err(|e| ApiError(StatusCode::BAD_REQUEST, e.body_text()))?;
    let snap = state.store.snapshot();
    Ok(Json(Leaderboard {
        criterion: q.criterion,
        matches: snap
            .matches
            .iter()
            .filter(|m| q.criterion.is_none_or(|c| m.criterion == c))
            .count(),
        entries: snap.leaderboard(q.criterion),
    }))
}

async fn next_pair(State(state): State<AppState>) -> Result<Json<serde_json::Value>, ApiError> {
    let (a, b) = state.store.snapshot().next_pair()?;
    Ok(Json(json!({"generator_a": a, "generator_b": b})))
}

async fn not_found() -> ApiError {
    ApiError(StatusCode::NOT_FOUND, "no such route".into())
}

pub fn router(state: AppState) -> Router {
    let v1 = Router::new()
        .route("/health", get(health))
        .route("/generators", post(register))
        .route("/sessions", post(create_session))
        .route("/sessions/{id}", get(get_session))
        .route("/sessions/{id}/drafts", post(post_draft))
        .route("/sessions/{id}/feedback", post(post_feedback))
        .route("/sessions/{id}/judgments", post(post_judgment))
        .route("/leaderboard", get(leaderboard))
        .route("/next-pair", get(next_pair));
    Router::new().nest("/v1", v1).fallback(not_found).with_state(state)
}

/// Serves until `shutdown` resolves, then writes a snapshot of the store.
pub async fn serve(
    listener: tokio::net::TcpListener,
    state: AppState,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    let store = state.store.clone();
    axum::serve(listener, router(state))
        .with_graceful_shutdown(shutdown)
        .await?;
    store
        .write_snapshot()
        .map_err(|e| std::io::Error::other(e.to_string()))?;
    log::info!("arena state persisted");
    Ok(())
}

/// Resolves on Ctrl-C or, on Unix, SIGTERM.
pub async fn shutdown_signal() {
    let ctrl_c = async {
        let _ = tokio::signal::ctrl_c().await;
    };
    #[cfg(unix)]
    let term = async {
        match tokio::signal::unix::signal(tokio::signal::unix::SignalKind::terminate()) {
            Ok(mut s) => {
                s.recv().await;
            }
            Err(_) => std::future::pending::<()>().await,
        }
    };
    #[cfg(not(unix))]
    let term = std::future::pending::<()>();
    tokio::select! {
        _ = ctrl_c => {},
        _ = term => {},
    }
}
