//! JSON-over-HTTP API.
//!
//! Every mutation goes through the engine mutex. Explanation generation
//! releases it while the backend runs and re-checks the policy key before
//! committing.

use std::collections::BTreeMap;
use std::sync::{Arc, Mutex, MutexGuard};

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use tailor_core::{
    Counts, FeedbackEvent, ObservationVector, OptionId, PolicySnapshot, Profile, ProfileId, Verdict,
};

use crate::engine::{BeliefView, Engine, EngineError, ExplainRequest};
use crate::json;
use crate::records::{
    CognitiveUpdate, ContextChange, ExplanationRecord, PlanIngest, ProblemIngest, StoredPlan,
    TimelineEvent, Trigger,
};

/// Attempts at committing an explanation before giving up on a moving policy.
const COMMIT_ATTEMPTS: usize = 3;

pub type SharedEngine = Arc<Mutex<Engine>>;

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    kind: &'static str,
    message: String,
}

#[derive(Serialize)]
struct ErrorBody<'a> {
    error: &'a str,
    message: &'a str,
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = ErrorBody { error: self.kind, message: &self.message };
        (self.status, Json(serde_json::to_value(&body).unwrap_or_default())).into_response()
    }
}

impl From<EngineError> for ApiError {
    fn from(e: EngineError) -> Self {
        use EngineError as E;
        let (status, kind) = match &e {
            E::NotFound(_) => (StatusCode::NOT_FOUND, "not_found"),
            E::Conflict(_) => (StatusCode::CONFLICT, "conflict"),
            E::Stale => (StatusCode::CONFLICT, "stale"),
            E::Backend(_) => (StatusCode::BAD_GATEWAY, "backend"),
            E::BadRequest(_)
            | E::InvalidModel(_)
            | E::Ledger(_)
            | E::Template(_)
            | E::Policy(_)
            | E::Build(_)
            | E::MissingContext(_) => (StatusCode::UNPROCESSABLE_ENTITY, "invalid"),
            _ => (StatusCode::INTERNAL_SERVER_ERROR, "internal"),
        };
        ApiError { status, kind, message: e.to_string() }
    }
}

fn invalid(message: impl Into<String>) -> ApiError {
    ApiError { status: StatusCode::UNPROCESSABLE_ENTITY, kind: "invalid", message: message.into() }
}

fn body<T: DeserializeOwned>(bytes: &Bytes) -> Result<T, ApiError> {
    let text = std::str::from_utf8(bytes).map_err(|e| invalid(e.to_string()))?;
    json::parse(text).map_err(|e| invalid(e.to_string()))
}

fn lock(engine: &SharedEngine) -> MutexGuard<'_, Engine> {
    // A panic mid-trigger leaves the logs authoritative; keep serving.
    engine.lock().unwrap_or_else(|poisoned| poisoned.into_inner())
}

pub fn router(engine: SharedEngine) -> Router {
    Router::new()
        .route("/profiles", get(profiles))
        .route("/plans", post(ingest_plan))
        .route("/plans/{id}", get(get_plan))
        .route("/problems", post(ingest_problem))
        .route("/explanations", post(explain))
        .route("/explanations/{id}", get(get_explanation))
        .route("/explanations/{id}/feedback", post(feedback))
        .route("/policies/{profile}", get(policy))
        .route("/beliefs/{profile}", get(belief))
        .route("/cognitive-model", post(cognitive_model))
        .route("/events", get(events))
        .with_state(engine)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfilesView {
    pub active: ProfileId,
    pub profiles: Vec<Profile>,
}

async fn profiles(State(engine): State<SharedEngine>) -> Json<ProfilesView> {
    let engine = lock(&engine);
    Json(ProfilesView { active: engine.active_profile(), profiles: engine.profiles().to_vec() })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Created {
    pub id: String,
}

async fn ingest_plan(State(engine): State<SharedEngine>, bytes: Bytes) -> Result<(StatusCode, Json<StoredPlan>), ApiError> {
    let ingest: PlanIngest = body(&bytes)?;
    let mut engine = lock(&engine);
    let outcome = engine.handle(Trigger::Context(ContextChange::Plan(ingest)))?;
    let id = outcome.stored_id.expect("plan ingest returns its id");
    Ok((StatusCode::CREATED, Json(engine.plan(&id).expect("just stored").clone())))
}

async fn get_plan(State(engine): State<SharedEngine>, Path(id): Path<String>) -> Result<Json<StoredPlan>, ApiError> {
    let engine = lock(&engine);
    let plan = engine.plan(&id).ok_or_else(|| EngineError::NotFound(format!("plan {id}")))?;
    Ok(Json(plan.clone()))
}

async fn ingest_problem(State(engine): State<SharedEngine>, bytes: Bytes) -> Result<(StatusCode, Json<Created>), ApiError> {
    let ingest: ProblemIngest = body(&bytes)?;
    let outcome = lock(&engine).handle(Trigger::Context(ContextChange::Problem(ingest)))?;
    Ok((StatusCode::CREATED, Json(Created { id: outcome.stored_id.expect("problem ingest returns its id") })))
}

async fn explain(State(engine): State<SharedEngine>, bytes: Bytes) -> Result<(StatusCode, Json<ExplanationRecord>), ApiError> {
    let request: ExplainRequest = if bytes.is_empty() { ExplainRequest::default() } else { body(&bytes)? };
    let mut last = EngineError::Stale;
    for _ in 0..COMMIT_ATTEMPTS {
        let (prepared, backend) = {
            let mut engine = lock(&engine);
            (engine.prepare_explanation(&request)?, engine.backend())
        };
        let prompt = prepared.prompt.clone();
        let generator = Arc::clone(&backend);
        let text = tokio::task::spawn_blocking(move || generator.generate(&prompt))
            .await
            .map_err(|e| ApiError {
                status: StatusCode::INTERNAL_SERVER_ERROR,
                kind: "internal",
                message: e.to_string(),
            })?
            .map_err(EngineError::from)?;
        match lock(&engine).commit_explanation(prepared, &backend.id(), text) {
            Ok(record) => return Ok((StatusCode::CREATED, Json(record))),
            Err(EngineError::Stale) => last = EngineError::Stale,
            Err(e) => return Err(e.into()),
        }
    }
    Err(last.into())
}

async fn get_explanation(
    State(engine): State<SharedEngine>,
    Path(id): Path<String>,
) -> Result<Json<ExplanationRecord>, ApiError> {
    let engine = lock(&engine);
    let record = engine.explanation(&id).ok_or_else(|| EngineError::NotFound(format!("explanation {id}")))?;
    Ok(Json(record.clone()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerdictBody {
    pub verdict: Verdict,
}

async fn feedback(
    State(engine): State<SharedEngine>,
    Path(id): Path<String>,
    bytes: Bytes,
) -> Result<(StatusCode, Json<FeedbackEvent>), ApiError> {
    let VerdictBody { verdict } = body(&bytes)?;
    let event = lock(&engine).feedback_on(&id, verdict)?;
    Ok((StatusCode::CREATED, Json(event)))
}

fn parse_profile(raw: &str) -> Result<ProfileId, ApiError> {
    raw.parse::<ProfileId>().map_err(|_| invalid(format!("`{raw}` is not a profile id")))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyView {
    pub snapshot: PolicySnapshot,
    pub default_observation: ObservationVector,
    pub default_choices: Vec<OptionId>,
    pub counts: BTreeMap<OptionId, Counts>,
    pub estimates: BTreeMap<OptionId, f64>,
}

async fn policy(State(engine): State<SharedEngine>, Path(profile): Path<String>) -> Result<Json<PolicyView>, ApiError> {
    let profile = parse_profile(&profile)?;
    let mut engine = lock(&engine);
    let cached = engine.policy(profile)?;
    let counts = engine.counts().counts.get(&profile).cloned().unwrap_or_default();
    let prior = engine.config().prior;
    let estimates = counts.iter().map(|(id, c)| (*id, c.estimate(&prior))).collect();
    Ok(Json(PolicyView {
        snapshot: cached.snapshot.clone(),
        default_observation: cached.default_observation.clone(),
        default_choices: cached.default_choices(),
        counts,
        estimates,
    }))
}

#[derive(Debug, Default, Deserialize)]
struct BeliefQuery {
    obs: Option<String>,
}

async fn belief(
    State(engine): State<SharedEngine>,
    Path(profile): Path<String>,
    Query(query): Query<BeliefQuery>,
) -> Result<Json<BeliefView>, ApiError> {
    let profile = parse_profile(&profile)?;
    let obs = match query.obs.as_deref() {
        None | Some("") => None,
        Some(raw) => Some(raw.parse::<ObservationVector>().map_err(|e| invalid(format!("obs: {e}")))?),
    };
    Ok(Json(lock(&engine).belief(profile, obs)?))
}

async fn cognitive_model(State(engine): State<SharedEngine>, bytes: Bytes) -> Result<Json<PolicyView>, ApiError> {
    let update: CognitiveUpdate = body(&bytes)?;
    let profile = update.profile;
    lock(&engine).handle(Trigger::CognitivePrediction(update))?;
    policy(State(engine), Path(profile.0.to_string())).await
}

#[derive(Debug, Default, Deserialize)]
struct EventsQuery {
    since: Option<u64>,
}

async fn events(State(engine): State<SharedEngine>, Query(query): Query<EventsQuery>) -> Json<Vec<TimelineEvent>> {
    Json(lock(&engine).events_since(query.since.unwrap_or(0)).to_vec())
}

/// Binds `addr` and serves until ctrl-c.
pub async fn serve(engine: Engine, addr: &str) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    tracing::info!(addr = %listener.local_addr()?, "listening");
    axum::serve(listener, router(Arc::new(Mutex::new(engine))))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
