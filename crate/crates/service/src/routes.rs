use std::convert::Infallible;
use std::sync::Arc;
use std::time::{SystemTime, UNIX_EPOCH};

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::sse::{Event as SseEvent, KeepAlive, Sse};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::Router;
use elicit_core::api::{AssuranceRequest, Compute, DoseRequest, FitRequest, OcRequest, PoolRequest, TransformRequest};
use elicit_core::judgement::Judgement;
use elicit_core::session::{
    create_session, ConsensusInput, DossierItem, RecordFormat, Requester, Session, SessionConfig, Stage,
};
use elicit_core::{ApiError, Error};
use futures::Stream;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::json;
use serde_json::value::RawValue;
use tokio::sync::broadcast::error::RecvError;

use crate::error::HttpError;
use crate::state::{AppState, Audience, PendingEvent, Role, Tokens};

type AppResult<T> = std::result::Result<T, HttpError>;
type Shared = Arc<AppState>;

pub fn router(state: Shared) -> Router {
    Router::new()
        .route("/healthz", get(healthz))
        .route("/sessions", post(create))
        .route("/sessions/{id}", get(get_session))
        .route("/sessions/{id}/advance", post(advance))
        .route("/sessions/{id}/experts/{expert}/trained", post(mark_trained))
        .route("/sessions/{id}/dossier", post(add_dossier))
        .route("/sessions/{id}/notes", post(add_note))
        .route("/sessions/{id}/judgements", post(submit_judgement))
        .route("/sessions/{id}/view", get(view))
        .route("/sessions/{id}/consensus", post(set_consensus))
        .route("/sessions/{id}/record", get(record))
        .route("/sessions/{id}/events", get(events))
        .route("/compute/fit", post(compute_fit))
        .route("/compute/pool", post(compute_pool))
        .route("/compute/transform", post(compute_transform))
        .route("/compute/dose", post(compute_dose))
        .route("/compute/assurance", post(compute_assurance))
        .route("/compute/oc", post(compute_oc))
        .route("/jobs/{id}", get(get_job).delete(cancel_job))
        .with_state(state)
}

fn parse<T: DeserializeOwned>(body: &Bytes) -> AppResult<T> {
    serde_json::from_slice(body).map_err(|e| HttpError(Error::Schema(format!("invalid request body: {e}"))))
}

fn json_response<T: Serialize>(status: StatusCode, value: &T) -> Response {
    let body = serde_json::to_vec(value).expect("response serializes");
    (status, [(header::CONTENT_TYPE, "application/json")], body).into_response()
}

fn bearer(headers: &HeaderMap) -> Option<&str> {
    headers
        .get(header::AUTHORIZATION)
        .and_then(|v| v.to_str().ok())
        .and_then(|v| v.strip_prefix("Bearer "))
        .map(str::trim)
}

fn now_ms() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_millis() as u64).unwrap_or(0)
}

async fn healthz() -> Response {
    json_response(StatusCode::OK, &json!({ "status": "ok" }))
}

/// Body of `POST /sessions` and `GET /sessions/{id}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionEnvelope {
    pub session: Session,
    pub tokens: Tokens,
}

async fn create(State(state): State<Shared>, body: Bytes) -> AppResult<Response> {
    let config: SessionConfig = parse(&body)?;
    let session = create_session(config)?;
    let (_, tokens) = state.insert(session.clone()).await?;
    Ok(json_response(StatusCode::CREATED, &SessionEnvelope { session, tokens }))
}

async fn get_session(State(state): State<Shared>, Path(id): Path<String>, headers: HeaderMap) -> AppResult<Response> {
    let slot = state.get(&id).await?;
    slot.require_facilitator(bearer(&headers))?;
    let session = slot.session.read().await.clone();
    Ok(json_response(StatusCode::OK, &SessionEnvelope { session, tokens: slot.tokens.clone() }))
}

#[derive(Deserialize)]
struct AdvanceBody {
    to: Stage,
}

async fn advance(
    State(state): State<Shared>,
    Path(id): Path<String>,
    headers: HeaderMap,
    body: Bytes,
) -> AppResult<Response> {
    let slot = state.get(&id).await?;
    slot.require_facilitator(bearer(&headers))?;
    let req: AdvanceBody = parse(&body)?;
    let s = state
        .mutate(&slot, |s| {
            s.advance(req.to)?;
            let ev = PendingEvent {
                kind: "stage_changed",
                audience: Audience::All,
                data: json!({ "stage": s.stage, "round": s.round }),
            };
            Ok((s.clone(), vec![ev]))
        })
        .await?;
    Ok(json_response(StatusCode::OK, &s))
}

async fn mark_trained(
    State(state): State<Shared>,
    Path((id, expert)): Path<(String, String)>,
    headers: HeaderMap,
) -> AppResult<Response> {
    let slot = state.get(&id).await?;
    slot.require_facilitator(bearer(&headers))?;
    let s = state
        .mutate(&slot, |s| {
            s.mark_trained(&expert)?;
            let ev =
                PendingEvent { kind: "expert_trained", audience: Audience::All, data: json!({ "expert": expert }) };
            Ok((s.clone(), vec![ev]))
        })
        .await?;
    Ok(json_response(StatusCode::OK, &s))
}

async fn add_dossier(
    State(state): State<Shared>,
    Path(id): Path<String>,
    headers: HeaderMap,
    body: Bytes,
) -> AppResult<Response> {
    let slot = state.get(&id).await?;
    slot.require_facilitator(bearer(&headers))?;
    let item: DossierItem = parse(&body)?;
    let s = state
        .mutate(&slot, |s| {
            s.add_dossier_item(item.clone())?;
            Ok((s.clone(), vec![PendingEvent { kind: "dossier_added", audience: Audience::All, data: json!(item) }]))
        })
        .await?;
    Ok(json_response(StatusCode::OK, &s))
}

#[derive(Deserialize)]
struct NoteBody {
    text: String,
    #[serde(default)]
    author: Option<String>,
}

async fn add_note(
    State(state): State<Shared>,
    Path(id): Path<String>,
    headers: HeaderMap,
    body: Bytes,
) -> AppResult<Response> {
    let slot = state.get(&id).await?;
    slot.require_facilitator(bearer(&headers))?;
    let req: NoteBody = parse(&body)?;
    let at = now_ms();
    let note = state
        .mutate(&slot, |s| {
            s.add_note(req.author.as_deref().unwrap_or("facilitator"), &req.text, at)?;
            let note = s.notes.last().expect("just added").clone();
            let audience = if s.revealed() { Audience::All } else { Audience::Facilitator };
            Ok((note.clone(), vec![PendingEvent { kind: "note_added", audience, data: json!(note) }]))
        })
        .await?;
    Ok(json_response(StatusCode::OK, &note))
}

#[derive(Deserialize)]
struct JudgementBody {
    quantity: String,
    judgement: Judgement,
    /// Required when the facilitator submits on an expert's behalf.
    #[serde(default)]
    expert: Option<String>,
}

async fn submit_judgement(
    State(state): State<Shared>,
    Path(id): Path<String>,
    headers: HeaderMap,
    body: Bytes,
) -> AppResult<Response> {
    let slot = state.get(&id).await?;
    let role = slot.role(bearer(&headers))?;
    let req: JudgementBody = parse(&body)?;
    let expert = match (role, req.expert) {
        (Role::Expert(me), None) => me,
        (Role::Expert(me), Some(other)) if me == other => me,
        (Role::Expert(_), Some(_)) => {
            return Err(Error::Auth("experts may only submit their own judgements".into()).into())
        }
        (Role::Facilitator, Some(e)) => e,
        (Role::Facilitator, None) => return Err(Error::Judgement("the facilitator must name the expert".into()).into()),
    };
    let entry = state
        .mutate(&slot, |s| {
            let entry = s.submit_judgement(&expert, &req.quantity, req.judgement.clone())?.clone();
            let ev =
                PendingEvent { kind: "fit_updated", audience: Audience::Expert(expert.clone()), data: json!(entry) };
            Ok((entry, vec![ev]))
        })
        .await?;
    Ok(json_response(StatusCode::OK, &entry))
}

fn requester(role: Role) -> Requester {
    match role {
        Role::Facilitator => Requester::Facilitator,
        Role::Expert(id) => Requester::Expert(id),
    }
}

async fn view(State(state): State<Shared>, Path(id): Path<String>, headers: HeaderMap) -> AppResult<Response> {
    let slot = state.get(&id).await?;
    let role = slot.role(bearer(&headers))?;
    let v = slot.session.read().await.visible_state(&requester(role))?;
    Ok(json_response(StatusCode::OK, &v))
}

#[derive(Deserialize)]
struct ConsensusBody {
    quantity: String,
    label: String,
    input: ConsensusInput,
    rationale: String,
}

async fn set_consensus(
    State(state): State<Shared>,
    Path(id): Path<String>,
    headers: HeaderMap,
    body: Bytes,
) -> AppResult<Response> {
    let slot = state.get(&id).await?;
    slot.require_facilitator(bearer(&headers))?;
    let req: ConsensusBody = parse(&body)?;
    let entry = state
        .mutate(&slot, |s| {
            let entry = s.set_consensus(&req.quantity, &req.label, req.input.clone(), &req.rationale)?.clone();
            Ok((
                entry.clone(),
                vec![PendingEvent { kind: "consensus_added", audience: Audience::All, data: json!(entry) }],
            ))
        })
        .await?;
    Ok(json_response(StatusCode::OK, &entry))
}

#[derive(Deserialize)]
struct RecordQuery {
    #[serde(default)]
    format: Option<String>,
}

async fn record(
    State(state): State<Shared>,
    Path(id): Path<String>,
    Query(q): Query<RecordQuery>,
    headers: HeaderMap,
) -> AppResult<Response> {
    let slot = state.get(&id).await?;
    slot.role(bearer(&headers))?;
    let format: RecordFormat = q.format.as_deref().unwrap_or("markdown").parse()?;
    let doc = slot.session.read().await.export_record(format)?;
    let content_type = match format {
        RecordFormat::Markdown => "text/markdown; charset=utf-8",
        RecordFormat::Html => "text/html; charset=utf-8",
        RecordFormat::Json => "application/json",
    };
    Ok((StatusCode::OK, [(header::CONTENT_TYPE, content_type)], doc).into_response())
}

#[derive(Deserialize)]
struct EventsQuery {
    /// Browsers' EventSource cannot set headers, so the token may come here.
    #[serde(default)]
    token: Option<String>,
}

async fn events(
    State(state): State<Shared>,
    Path(id): Path<String>,
    Query(q): Query<EventsQuery>,
    headers: HeaderMap,
) -> AppResult<Sse<impl Stream<Item = Result<SseEvent, Infallible>>>> {
    let slot = state.get(&id).await?;
    let role = slot.role(bearer(&headers).or(q.token.as_deref()))?;
    let rx = slot.events.subscribe();
    let stream = futures::stream::unfold((rx, role), |(mut rx, role)| async move {
        loop {
            match rx.recv().await {
                Ok(ev) if ev.audience.includes(&role) => {
                    let sse = SseEvent::default().event(ev.kind).id(ev.seq.to_string()).data(ev.data.to_string());
                    return Some((Ok(sse), (rx, role)));
                }
                Ok(_) | Err(RecvError::Lagged(_)) => continue,
                Err(RecvError::Closed) => return None,
            }
        }
    });
    Ok(Sse::new(stream).keep_alive(KeepAlive::default()))
}

#[derive(Deserialize)]
struct ComputeQuery {
    /// `job` runs the request in the background and returns a job id.
    #[serde(default)]
    mode: Option<String>,
}

async fn run_compute<R>(state: Shared, operation: &str, q: ComputeQuery, body: Bytes) -> AppResult<Response>
where
    R: Compute + DeserializeOwned + Send + 'static,
{
    let req: R = parse(&body)?;
    let work = move || req.run().map(|out| serde_json::to_string(&out).expect("output serializes"));
    match q.mode.as_deref() {
        None | Some("sync") => {
            let out = tokio::task::spawn_blocking(work)
                .await
                .map_err(|e| HttpError(Error::Io(format!("compute task failed: {e}"))))??;
            Ok((StatusCode::OK, [(header::CONTENT_TYPE, "application/json")], out).into_response())
        }
        Some("job") => {
            let id = state.jobs.spawn(operation, move || {
                work().map(|s| RawValue::from_string(s).expect("valid JSON")).map_err(ApiError::from)
            });
            Ok(json_response(StatusCode::ACCEPTED, &json!({ "job_id": id, "status_url": format!("/jobs/{id}") })))
        }
        Some(other) => Err(Error::Config(format!("unknown compute mode '{other}'")).into()),
    }
}

async fn compute_fit(State(s): State<Shared>, Query(q): Query<ComputeQuery>, body: Bytes) -> AppResult<Response> {
    run_compute::<FitRequest>(s, "fit", q, body).await
}

async fn compute_pool(State(s): State<Shared>, Query(q): Query<ComputeQuery>, body: Bytes) -> AppResult<Response> {
    run_compute::<PoolRequest>(s, "pool", q, body).await
}

async fn compute_transform(State(s): State<Shared>, Query(q): Query<ComputeQuery>, body: Bytes) -> AppResult<Response> {
    run_compute::<TransformRequest>(s, "transform", q, body).await
}

async fn compute_dose(State(s): State<Shared>, Query(q): Query<ComputeQuery>, body: Bytes) -> AppResult<Response> {
    run_compute::<DoseRequest>(s, "dose", q, body).await
}

async fn compute_assurance(State(s): State<Shared>, Query(q): Query<ComputeQuery>, body: Bytes) -> AppResult<Response> {
    run_compute::<AssuranceRequest>(s, "assurance", q, body).await
}

async fn compute_oc(State(s): State<Shared>, Query(q): Query<ComputeQuery>, body: Bytes) -> AppResult<Response> {
    run_compute::<OcRequest>(s, "oc", q, body).await
}

async fn get_job(State(state): State<Shared>, Path(id): Path<String>) -> AppResult<Response> {
    let job = state.jobs.get(&id).ok_or_else(|| Error::NotFound(format!("no job with id '{id}'")))?;
    Ok(json_response(StatusCode::OK, &job))
}

async fn cancel_job(State(state): State<Shared>, Path(id): Path<String>) -> AppResult<Response> {
    let job = state.jobs.cancel(&id).ok_or_else(|| Error::NotFound(format!("no job with id '{id}'")))?;
    Ok(json_response(StatusCode::OK, &job))
}
