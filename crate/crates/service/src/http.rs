//! HTTP routes and the server-sent event stream.

use std::collections::BTreeMap;
use std::convert::Infallible;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, RwLock};

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::{header, HeaderMap};
use axum::response::sse::{Event, KeepAlive, Sse};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post, put};
use axum::{Json, Router};
use futures::Stream;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use topicflow::ingest::RawDocument;
use topicflow::layout::Viewport;

use crate::config::{FocusRequest, SessionConfig};
use crate::error::{ErrorCode, ServiceError, ServiceResult};
use crate::events::EventLog;
use crate::session::{CutView, DocLinks, FocusSummary, IngestSummary, SearchHit, Session};

pub const SEARCH_LIMIT: usize = 20;

pub struct SessionEntry {
    session: Mutex<Session>,
    pub events: EventLog,
}

impl SessionEntry {
    /// Runs a mutating operation; its events are appended in order while
    /// the session lock is held.
    pub fn write<T>(&self, f: impl FnOnce(&mut Session, &mut dyn FnMut(crate::ServerEvent)) -> T) -> T {
        let mut s = self.session.lock().expect("session lock poisoned");
        f(&mut s, &mut |e| self.events.push(e))
    }

    pub fn read<T>(&self, f: impl FnOnce(&Session) -> T) -> T {
        f(&self.session.lock().expect("session lock poisoned"))
    }
}

#[derive(Default)]
pub struct AppState {
    sessions: RwLock<BTreeMap<String, Arc<SessionEntry>>>,
    next_id: AtomicU64,
}

impl AppState {
    pub fn create(&self, config: SessionConfig) -> ServiceResult<String> {
        let id = format!("s{}", self.next_id.fetch_add(1, Ordering::SeqCst) + 1);
        let session = Session::new(id.clone(), config)?;
        let entry = Arc::new(SessionEntry { session: Mutex::new(session), events: EventLog::default() });
        self.sessions.write().expect("session table poisoned").insert(id.clone(), entry);
        Ok(id)
    }

    pub fn get(&self, id: &str) -> ServiceResult<Arc<SessionEntry>> {
        self.sessions
            .read()
            .expect("session table poisoned")
            .get(id)
            .cloned()
            .ok_or_else(|| ServiceError::new(ErrorCode::UnknownSession, format!("no session {id}")))
    }
}

type Shared = Arc<AppState>;

fn parse<T: DeserializeOwned + Default>(body: &Bytes) -> ServiceResult<T> {
    if body.iter().all(u8::is_ascii_whitespace) {
        return Ok(T::default());
    }
    serde_json::from_slice(body).map_err(|e| ServiceError::new(ErrorCode::BadRequest, e.to_string()))
}

/// Runs blocking session work off the async executor.
async fn blocking<T: Send + 'static>(f: impl FnOnce() -> ServiceResult<T> + Send + 'static) -> ServiceResult<T> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ServiceError::new(ErrorCode::Internal, e.to_string()))?
}

#[derive(Serialize, Deserialize)]
pub struct Created {
    pub id: String,
}

async fn create_session(State(state): State<Shared>, body: Bytes) -> Result<Json<Created>, Response> {
    let config: SessionConfig = parse(&body).map_err(|e| {
        ServiceError::new(ErrorCode::BadConfig, e.message).into_response()
    })?;
    let id = state.create(config).map_err(IntoResponse::into_response)?;
    Ok(Json(Created { id }))
}

#[derive(Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BatchRequest {
    pub documents: Vec<RawDocument>,
}

async fn ingest(State(state): State<Shared>, Path(id): Path<String>, body: Bytes) -> ServiceResult<Json<IngestSummary>> {
    let entry = state.get(&id)?;
    let req: BatchRequest = parse(&body)?;
    blocking(move || entry.write(|s, sink| s.ingest_batch(req.documents, sink))).await.map(Json)
}

async fn focus(State(state): State<Shared>, Path(id): Path<String>, body: Bytes) -> ServiceResult<Json<FocusSummary>> {
    let entry = state.get(&id)?;
    let req: FocusRequest =
        serde_json::from_slice(&body).map_err(|e| ServiceError::new(ErrorCode::BadRequest, e.to_string()))?;
    blocking(move || entry.write(|s, sink| s.set_focus(req, sink))).await.map(Json)
}

async fn split(State(state): State<Shared>, Path((id, t, node)): Path<(String, usize, String)>) -> ServiceResult<Json<CutView>> {
    let entry = state.get(&id)?;
    blocking(move || entry.write(|s, sink| s.split_topic(t, &node, sink))).await.map(Json)
}

#[derive(Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct MergeBody {
    nodes: Option<Vec<String>>,
}

async fn merge(
    State(state): State<Shared>,
    Path((id, t, node)): Path<(String, usize, String)>,
    body: Bytes,
) -> ServiceResult<Json<CutView>> {
    let entry = state.get(&id)?;
    let req: MergeBody = parse(&body)?;
    blocking(move || entry.write(|s, sink| s.merge_topic(t, &node, req.nodes.as_deref(), sink))).await.map(Json)
}

#[derive(Deserialize)]
struct ViewportQuery {
    w: Option<f64>,
    h: Option<f64>,
}

async fn get_layout(
    State(state): State<Shared>,
    Path(id): Path<String>,
    Query(q): Query<ViewportQuery>,
) -> ServiceResult<Response> {
    let entry = state.get(&id)?;
    let json = blocking(move || {
        entry.write(|s, _| {
            let d = s.config().viewport;
            let viewport = Viewport { width: q.w.unwrap_or(d.width), height: q.h.unwrap_or(d.height) };
            if !(viewport.width > 0.0 && viewport.height > 0.0) {
                return Err(ServiceError::new(ErrorCode::ViewportTooSmall, "viewport must be positive"));
            }
            s.layout(viewport)
        })
    })
    .await?;
    Ok(([(header::CONTENT_TYPE, "application/json")], json).into_response())
}

#[derive(Deserialize)]
struct SearchQuery {
    q: String,
}

async fn search(
    State(state): State<Shared>,
    Path(id): Path<String>,
    Query(q): Query<SearchQuery>,
) -> ServiceResult<Json<Vec<SearchHit>>> {
    state.get(&id)?.read(|s| s.search(&q.q, SEARCH_LIMIT)).map(Json)
}

#[derive(Deserialize)]
struct LinksQuery {
    j: Option<usize>,
    w: Option<f64>,
}

async fn doc_links(
    State(state): State<Shared>,
    Path((id, doc)): Path<(String, String)>,
    Query(q): Query<LinksQuery>,
) -> ServiceResult<Json<DocLinks>> {
    state
        .get(&id)?
        .read(|s| s.doc_links(&doc, q.j.unwrap_or(s.config().doc_links), q.w.unwrap_or(s.config().viewport.width)))
        .map(Json)
}

#[derive(Serialize)]
struct CutsResponse {
    cuts: Vec<topicflow::treecut::CutRecord>,
    displayed: Vec<CutView>,
}

async fn cuts(State(state): State<Shared>, Path(id): Path<String>) -> ServiceResult<Json<CutsResponse>> {
    state
        .get(&id)?
        .read(|s| {
            let displayed = (0..s.trees().len()).map(|t| s.cut_view(t)).collect::<ServiceResult<_>>()?;
            Ok(CutsResponse { cuts: s.cut_records(), displayed })
        })
        .map(Json)
}

/// Replays the log from the start, or after `Last-Event-ID`, then follows it.
async fn events(
    State(state): State<Shared>,
    Path(id): Path<String>,
    headers: HeaderMap,
) -> ServiceResult<Sse<impl Stream<Item = Result<Event, Infallible>>>> {
    let entry = state.get(&id)?;
    let start = headers
        .get("last-event-id")
        .and_then(|v| v.to_str().ok())
        .and_then(|v| v.parse::<usize>().ok())
        .map_or(0, |i| i + 1);
    let rx = entry.events.subscribe();
    let stream = futures::stream::unfold((entry, start, rx), |(entry, cursor, mut rx)| async move {
        loop {
            if let Some(ev) = entry.events.get(cursor) {
                let event = Event::default().id(cursor.to_string()).event(ev.name()).data(ev.data_json());
                return Some((Ok(event), (entry, cursor + 1, rx)));
            }
            if rx.changed().await.is_err() {
                return None;
            }
        }
    });
    Ok(Sse::new(stream).keep_alive(KeepAlive::default()))
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/api/session", post(create_session))
        .route("/api/session/{id}/batch", post(ingest))
        .route("/api/session/{id}/focus", put(focus))
        .route("/api/session/{id}/topic/{t}/{node}/split", post(split))
        .route("/api/session/{id}/topic/{t}/{node}/merge", post(merge))
        .route("/api/session/{id}/layout", get(get_layout))
        .route("/api/session/{id}/search", get(search))
        .route("/api/session/{id}/documents/{doc}/links", get(doc_links))
        .route("/api/session/{id}/cuts", get(cuts))
        .route("/api/session/{id}/events", get(events))
        .with_state(state)
}

/// Serves the API on `addr` until the process stops.
pub async fn serve(addr: std::net::SocketAddr, state: Arc<AppState>) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    axum::serve(listener, router(state)).await
}
