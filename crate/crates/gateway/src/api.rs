//! HTTP routes.

use std::convert::Infallible;
use std::sync::Arc;

use axum::body::Body;
use axum::extract::rejection::JsonRejection;
use axum::extract::{FromRequest, Path, Query, Request, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post, put};
use axum::{Json, Router};
use edgeai_core::agent::{AgentError, AgentReply, SessionState, Stage};
use edgeai_core::edge::{EdgeError, Resources};
use edgeai_core::pcf::{PolicyError, QosPolicy};
use edgeai_core::registry::{ModelCard, RegistryError};
use edgeai_core::ric::RicError;
use edgeai_core::sim::{SimError, SimTime};
use edgeai_core::world::WorldError;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::Gateway;

/// Longest single `POST /sim/advance`.
pub const MAX_ADVANCE_MS: SimTime = 3_600_000;

#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub message: String,
}

impl ApiError {
    pub fn new(status: StatusCode, message: impl Into<String>) -> Self {
        Self { status, message: message.into() }
    }

    fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, message)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(json!({ "error": self.message }))).into_response()
    }
}

impl From<AgentError> for ApiError {
    fn from(e: AgentError) -> Self {
        let status = match e {
            AgentError::UnknownSession(_) => StatusCode::NOT_FOUND,
            AgentError::OutOfTurn { .. } => StatusCode::CONFLICT,
            AgentError::EmptyIntent | AgentError::BadChoice { .. } | AgentError::Invalid(_) => StatusCode::BAD_REQUEST,
        };
        Self::new(status, e.to_string())
    }
}

impl From<WorldError> for ApiError {
    fn from(e: WorldError) -> Self {
        let status = match &e {
            WorldError::Policy(PolicyError::NotFound(_) | PolicyError::UnknownUe(_)) => StatusCode::NOT_FOUND,
            WorldError::Edge(EdgeError::NotFound(_) | EdgeError::UnknownNode(_)) => StatusCode::NOT_FOUND,
            WorldError::Edge(
                EdgeError::InsufficientCapacity { .. }
                | EdgeError::NoPorts(_)
                | EdgeError::Unavailable(_)
                | EdgeError::IllegalTransition { .. },
            ) => StatusCode::CONFLICT,
            WorldError::Ric(RicError::NotFound(_) | RicError::UnknownSubscription(_)) => StatusCode::NOT_FOUND,
            WorldError::Sim(SimError::UnknownFlow(_)) => StatusCode::NOT_FOUND,
            WorldError::Registry(RegistryError::BackendUnavailable(_)) => StatusCode::BAD_GATEWAY,
            WorldError::Registry(RegistryError::NotFound(_)) => StatusCode::NOT_FOUND,
            _ => StatusCode::BAD_REQUEST,
        };
        Self::new(status, e.to_string())
    }
}

/// JSON body whose rejections come back as 400 with an `error` field.
pub struct ApiJson<T>(pub T);

impl<S, T> FromRequest<S> for ApiJson<T>
where
    T: DeserializeOwned,
    S: Send + Sync,
{
    type Rejection = ApiError;

    async fn from_request(req: Request, state: &S) -> Result<Self, Self::Rejection> {
        match Json::<T>::from_request(req, state).await {
            Ok(Json(v)) => Ok(Self(v)),
            Err(e) => Err(ApiError::bad_request(rejection_text(&e))),
        }
    }
}

fn rejection_text(e: &JsonRejection) -> String {
    format!("invalid body: {}", e.body_text())
}

type Shared = State<Arc<Gateway>>;
type ApiResult<T> = Result<T, ApiError>;

/// A session as the API presents it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApiSession {
    pub session_id: String,
    pub created_at_ms: SimTime,
    pub stage: Stage,
    /// Last agent reply, when the request produced one.
    pub reply: Option<String>,
    pub stream_subscriber_ids: Vec<u64>,
    pub session: SessionState,
}

fn api_session(gw: &Gateway, s: &SessionState, reply: Option<String>) -> ApiSession {
    ApiSession {
        session_id: s.session_id.clone(),
        created_at_ms: s.stage_history.first().map_or(0, |(t, _)| *t),
        stage: s.stage,
        reply,
        stream_subscriber_ids: gw.subscribers_of(&s.session_id),
        session: s.clone(),
    }
}

fn after_reply(gw: &Gateway, r: Result<AgentReply, AgentError>) -> ApiResult<Json<ApiSession>> {
    let r = r?;
    let s = gw.with(|o| o.session(&r.session_id).cloned())?;
    Ok(Json(api_session(gw, &s, r.reply)))
}

#[derive(Deserialize)]
struct Describe {
    description: String,
}

#[derive(Deserialize)]
struct Message {
    text: String,
}

#[derive(Deserialize)]
struct Choice {
    index: usize,
}

#[derive(Deserialize)]
struct Confirm {
    accept: bool,
    #[serde(default)]
    node_id: Option<String>,
    #[serde(default)]
    deploy_at_ms: Option<SimTime>,
}

#[derive(Deserialize)]
struct Advance {
    ms: SimTime,
}

#[derive(Deserialize)]
struct NewService {
    model: ModelCard,
    node_id: String,
    #[serde(default)]
    resources: Option<Resources>,
}

#[derive(Deserialize)]
struct StreamQuery {
    #[serde(default)]
    after: Option<u64>,
    #[serde(default)]
    last_event_id: Option<u64>,
    #[serde(default)]
    session_id: Option<String>,
}

async fn create_session(State(gw): Shared, ApiJson(b): ApiJson<Describe>) -> ApiResult<(StatusCode, Json<ApiSession>)> {
    let s = gw.with(|o| o.start_session(&b.description))?;
    let reply = s.transcript.iter().rev().find_map(|e| match e {
        edgeai_core::agent::TranscriptEntry::Message {
            role: edgeai_core::agent::Role::Agent,
            text,
        } => Some(text.clone()),
        _ => None,
    });
    Ok((StatusCode::CREATED, Json(api_session(&gw, &s, reply))))
}

async fn list_sessions(State(gw): Shared) -> Json<serde_json::Value> {
    let v: Vec<_> = gw.with(|o| {
        o.sessions()
            .map(|s| json!({ "session_id": s.session_id, "stage": s.stage }))
            .collect()
    });
    Json(json!(v))
}

async fn get_session(State(gw): Shared, Path(id): Path<String>) -> ApiResult<Json<ApiSession>> {
    let s = gw.with(|o| o.session(&id).cloned())?;
    Ok(Json(api_session(&gw, &s, None)))
}

async fn post_message(State(gw): Shared, Path(id): Path<String>, ApiJson(b): ApiJson<Message>) -> ApiResult<Json<ApiSession>> {
    let r = gw.with(|o| o.handle_message(&id, &b.text));
    after_reply(&gw, r)
}

async fn model_choice(State(gw): Shared, Path(id): Path<String>, ApiJson(b): ApiJson<Choice>) -> ApiResult<Json<ApiSession>> {
    let r = gw.with(|o| o.choose_model(&id, b.index));
    after_reply(&gw, r)
}

async fn deploy_confirm(State(gw): Shared, Path(id): Path<String>, ApiJson(b): ApiJson<Confirm>) -> ApiResult<Json<ApiSession>> {
    let r = gw.with(|o| o.confirm_deployment(&id, b.accept, b.node_id.as_deref(), b.deploy_at_ms));
    after_reply(&gw, r)
}

async fn services(State(gw): Shared) -> Json<serde_json::Value> {
    Json(gw.with(|o| json!(o.world().edge().instances().collect::<Vec<_>>())))
}

fn sim_time_body(gw: &Gateway) -> serde_json::Value {
    let t = gw.with(|o| o.world().now());
    json!({ "t_ms": t, "tick_ms": edgeai_core::sim::TICK_MS, "last_event_id": gw.hub().last_event_id() })
}

async fn sim_time(State(gw): Shared) -> Json<serde_json::Value> {
    Json(sim_time_body(&gw))
}

async fn sim_advance(State(gw): Shared, ApiJson(b): ApiJson<Advance>) -> ApiResult<Json<serde_json::Value>> {
    if b.ms > MAX_ADVANCE_MS {
        return Err(ApiError::bad_request(format!("ms must be at most {MAX_ADVANCE_MS}")));
    }
    let g = gw.clone();
    tokio::task::spawn_blocking(move || g.with(|o| o.advance(b.ms)))
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))??;
    Ok(Json(sim_time_body(&gw)))
}

async fn stream(State(gw): Shared, Query(q): Query<StreamQuery>, headers: HeaderMap) -> Response {
    let header_id = headers
        .get("last-event-id")
        .and_then(|v| v.to_str().ok())
        .and_then(|v| v.trim().parse().ok());
    let after = q.after.or(q.last_event_id).or(header_id);
    let sub = gw.hub().subscribe(after);
    if let Some(sid) = q.session_id {
        gw.attach_subscriber(&sid, sub.subscriber_id);
    }
    let body = futures::stream::unfold(sub.rx, |mut rx| async move {
        rx.recv().await.map(|line| (Ok::<_, Infallible>(line), rx))
    });
    Response::builder()
        .header(header::CONTENT_TYPE, "application/x-ndjson")
        .header(header::CACHE_CONTROL, "no-cache")
        .header("x-subscriber-id", sub.subscriber_id.to_string())
        .body(Body::from_stream(body))
        .expect("static headers")
}

async fn create_policy(State(gw): Shared, ApiJson(p): ApiJson<QosPolicy>) -> ApiResult<(StatusCode, Json<QosPolicy>)> {
    let p = gw.with(|o| o.world_mut().create_policy(p))?;
    Ok((StatusCode::CREATED, Json(p)))
}

async fn update_policy(State(gw): Shared, Path(id): Path<String>, ApiJson(p): ApiJson<QosPolicy>) -> ApiResult<Json<QosPolicy>> {
    Ok(Json(gw.with(|o| o.world_mut().update_policy(&id, p))?))
}

async fn get_policy(State(gw): Shared, Path(id): Path<String>) -> ApiResult<Json<QosPolicy>> {
    Ok(Json(gw.with(|o| o.world().get_policy(&id))?))
}

async fn effective_rules(State(gw): Shared, Path(ue): Path<String>) -> ApiResult<Json<serde_json::Value>> {
    let r = gw.with(|o| o.world().effective_rules(&ue))?;
    Ok(Json(json!(r)))
}

async fn edge_nodes(State(gw): Shared) -> Json<serde_json::Value> {
    Json(gw.with(|o| json!(o.world().edge().nodes().collect::<Vec<_>>())))
}

async fn deploy_service(State(gw): Shared, ApiJson(b): ApiJson<NewService>) -> ApiResult<(StatusCode, Json<serde_json::Value>)> {
    let resources = b.resources.unwrap_or_else(|| b.model.required_resources());
    let inst = gw.with(|o| o.world_mut().deploy_service(&b.model, &b.node_id, resources))?;
    Ok((StatusCode::CREATED, Json(json!(inst))))
}

async fn get_service(State(gw): Shared, Path(id): Path<String>) -> ApiResult<Json<serde_json::Value>> {
    let inst = gw.with(|o| o.world().edge().instance(&id).map(|i| json!(i)).map_err(WorldError::from))?;
    Ok(Json(inst))
}

async fn delete_service(State(gw): Shared, Path(id): Path<String>) -> ApiResult<StatusCode> {
    gw.with(|o| o.world_mut().terminate_service(&id))?;
    Ok(StatusCode::NO_CONTENT)
}

async fn fallback() -> ApiError {
    ApiError::new(StatusCode::NOT_FOUND, "no such route")
}

pub fn router(gw: Arc<Gateway>) -> Router {
    Router::new()
        .route("/sessions", post(create_session).get(list_sessions))
        .route("/sessions/{id}", get(get_session))
        .route("/sessions/{id}/messages", post(post_message))
        .route("/sessions/{id}/model-choice", post(model_choice))
        .route("/sessions/{id}/deploy-confirm", post(deploy_confirm))
        .route("/services", get(services))
        .route("/sim/time", get(sim_time))
        .route("/sim/advance", post(sim_advance))
        .route("/stream", get(stream))
        .route("/npcf/policies", post(create_policy))
        .route("/npcf/policies/{id}", put(update_policy).get(get_policy))
        .route("/npcf/ues/{ue_id}/effective-rules", get(effective_rules))
        .route("/edge/nodes", get(edge_nodes))
        .route("/edge/services", post(deploy_service))
        .route("/edge/services/{id}", get(get_service).delete(delete_service))
        .fallback(fallback)
        .with_state(gw)
}
