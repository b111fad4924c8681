//! Axum routes over [`Service`].

use std::collections::{BTreeSet, VecDeque};
use std::convert::Infallible;
use std::net::{IpAddr, Ipv4Addr, SocketAddr};
use std::sync::Arc;

use axum::extract::rejection::{JsonRejection, QueryRejection};
use axum::extract::{ConnectInfo, FromRequestParts, Path, Query, State};
use axum::http::header::{AUTHORIZATION, CONTENT_TYPE};
use axum::http::request::Parts;
use axum::http::{HeaderMap, StatusCode};
use axum::response::sse::{Event as SseEvent, KeepAlive, Sse};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use chrono::{DateTime, Utc};
use civicsense_core::wire::{Credentials, RateRequest, StreamEvent, SubmitRequest, SyncRequest, SyncResponse, VerdictRequest};
use civicsense_core::{parse_category, render_text, BBox, Category, Detail, Period, ReportId};
use futures::Stream;
use serde::Deserialize;
use tokio::sync::watch;

use crate::error::ApiError;
use crate::service::{Caller, Service};

type Shared = Arc<Service>;

/// Bearer token from the `Authorization` header, if any.
pub struct Token(pub Option<String>);

impl<S: Send + Sync> FromRequestParts<S> for Token {
    type Rejection = ApiError;

    async fn from_request_parts(parts: &mut Parts, _: &S) -> Result<Self, Self::Rejection> {
        let Some(value) = parts.headers.get(AUTHORIZATION) else {
            return Ok(Token(None));
        };
        let value = value.to_str().map_err(|_| ApiError::unauthorized())?;
        match value.strip_prefix("Bearer ") {
            Some(t) if !t.trim().is_empty() => Ok(Token(Some(t.trim().to_string()))),
            _ => Err(ApiError::unauthorized()),
        }
    }
}

impl Token {
    fn as_deref(&self) -> Option<&str> {
        self.0.as_deref()
    }
}

/// Source address of the connection; loopback when not served with
/// connection info.
pub struct ClientAddr(pub IpAddr);

impl<S: Send + Sync> FromRequestParts<S> for ClientAddr {
    type Rejection = Infallible;

    async fn from_request_parts(parts: &mut Parts, _: &S) -> Result<Self, Self::Rejection> {
        let addr = parts
            .extensions
            .get::<ConnectInfo<SocketAddr>>()
            .map(|c| c.0.ip())
            .unwrap_or(IpAddr::V4(Ipv4Addr::LOCALHOST));
        Ok(ClientAddr(addr))
    }
}

fn body<T>(r: Result<Json<T>, JsonRejection>) -> Result<T, ApiError> {
    r.map(|Json(v)| v).map_err(|e| ApiError::from_decode(e.body_text()))
}

fn query<T>(r: Result<Query<T>, QueryRejection>) -> Result<T, ApiError> {
    r.map(|Query(v)| v).map_err(|e| ApiError::bad_request(e.body_text()))
}

pub fn router(service: Shared) -> Router {
    let api = Router::new()
        .route("/auth/register", post(register))
        .route("/auth/login", post(login))
        .route("/reports", post(submit))
        .route("/reports/{id}", get(public_report))
        .route("/reports/{id}/ratings", post(rate))
        .route("/reports/{id}/share", get(share_link))
        .route("/feed", get(feed))
        .route("/map", get(map))
        .route("/stats/categories", get(stats))
        .route("/sync", post(sync))
        .route("/stream", get(stream))
        .route("/admin/queue", get(admin_queue))
        .route("/admin/reports/{id}/verdict", post(verdict))
        .route("/admin/summary", get(summary))
        .route("/admin/media/{hash}", get(media))
        .route("/r/{id}", get(public_report));
    Router::new()
        .nest("/api/v1", api)
        .route("/r/{id}", get(public_report))
        .fallback(|| async { ApiError::new("NotFound", "no such endpoint") })
        .with_state(service)
}

async fn register(
    State(svc): State<Shared>,
    req: Result<Json<Credentials>, JsonRejection>,
) -> Result<impl IntoResponse, ApiError> {
    let req = body(req)?;
    let profile = tokio::task::spawn_blocking(move || svc.register(&req.name, &req.credential))
        .await
        .map_err(|e| ApiError::new("Internal", e.to_string()))??;
    Ok((StatusCode::CREATED, Json(profile)))
}

async fn login(
    State(svc): State<Shared>,
    req: Result<Json<Credentials>, JsonRejection>,
) -> Result<impl IntoResponse, ApiError> {
    let req = body(req)?;
    let session = tokio::task::spawn_blocking(move || svc.login(&req.name, &req.credential))
        .await
        .map_err(|e| ApiError::new("Internal", e.to_string()))??;
    Ok(Json(session))
}

async fn submit(
    State(svc): State<Shared>,
    token: Token,
    ClientAddr(addr): ClientAddr,
    req: Result<Json<SubmitRequest>, JsonRejection>,
) -> Result<impl IntoResponse, ApiError> {
    let user = svc.authenticate(token.as_deref())?;
    let req = body(req)?;
    let done = svc.submit(&Caller { user, addr }, req)?;
    let status = if done.created {
        StatusCode::CREATED
    } else {
        StatusCode::OK
    };
    Ok((status, Json(done.report)))
}

fn report_id(raw: &str) -> Result<ReportId, ApiError> {
    raw.parse::<u64>()
        .map(ReportId)
        .map_err(|_| ApiError::new("UnknownReport", format!("no report with id {raw:?}")))
}

async fn public_report(State(svc): State<Shared>, Path(id): Path<String>) -> Result<impl IntoResponse, ApiError> {
    Ok(Json(svc.public_report(report_id(&id)?)?))
}

async fn share_link(State(svc): State<Shared>, Path(id): Path<String>) -> Result<impl IntoResponse, ApiError> {
    Ok(Json(svc.share_link(report_id(&id)?)?))
}

async fn rate(
    State(svc): State<Shared>,
    token: Token,
    Path(id): Path<String>,
    req: Result<Json<RateRequest>, JsonRejection>,
) -> Result<impl IntoResponse, ApiError> {
    let id = report_id(&id)?;
    let req = body(req)?;
    Ok(Json(svc.rate(token.as_deref(), id, req.vote)?))
}

async fn verdict(
    State(svc): State<Shared>,
    token: Token,
    Path(id): Path<String>,
    req: Result<Json<VerdictRequest>, JsonRejection>,
) -> Result<impl IntoResponse, ApiError> {
    let id = report_id(&id)?;
    let req = body(req)?;
    Ok(Json(svc.verdict(token.as_deref(), id, req.verdict)?))
}

#[derive(Deserialize)]
struct FeedQuery {
    page: Option<u32>,
    page_size: Option<u32>,
}

async fn feed(
    State(svc): State<Shared>,
    q: Result<Query<FeedQuery>, QueryRejection>,
) -> Result<impl IntoResponse, ApiError> {
    let q = query(q).map_err(|e| ApiError::new("BadPage", e.message))?;
    Ok(Json(svc.feed(q.page.unwrap_or(1), q.page_size.unwrap_or(20))?))
}

#[derive(Deserialize)]
struct MapQuery {
    min_lat: f64,
    min_lon: f64,
    max_lat: f64,
    max_lon: f64,
    cell_size: Option<f64>,
    /// One category, or several separated by commas.
    category: Option<String>,
}

async fn map(
    State(svc): State<Shared>,
    q: Result<Query<MapQuery>, QueryRejection>,
) -> Result<impl IntoResponse, ApiError> {
    let q = query(q).map_err(|e| ApiError::new("BadBBox", e.message))?;
    let bbox = BBox {
        min_lat: q.min_lat,
        min_lon: q.min_lon,
        max_lat: q.max_lat,
        max_lon: q.max_lon,
    };
    let filter = match q.category.as_deref() {
        None | Some("") => None,
        Some(list) => Some(
            list.split(',')
                .map(|c| parse_category(c.trim()))
                .collect::<Result<BTreeSet<Category>, _>>()?,
        ),
    };
    Ok(Json(svc.map(&bbox, q.cell_size, filter.as_ref())?))
}

async fn stats(State(svc): State<Shared>) -> impl IntoResponse {
    Json(svc.stats())
}

async fn sync(
    State(svc): State<Shared>,
    token: Token,
    ClientAddr(addr): ClientAddr,
    req: Result<Json<SyncRequest>, JsonRejection>,
) -> Result<impl IntoResponse, ApiError> {
    let user = svc.authenticate(token.as_deref())?;
    let req = body(req)?;
    let results = svc.sync(&Caller { user, addr }, req.entries)?;
    Ok(Json(SyncResponse { results }))
}

async fn admin_queue(State(svc): State<Shared>, token: Token) -> Result<impl IntoResponse, ApiError> {
    Ok(Json(svc.queue(token.as_deref())?))
}

async fn media(
    State(svc): State<Shared>,
    token: Token,
    Path(hash): Path<String>,
) -> Result<impl IntoResponse, ApiError> {
    let bytes = svc.attachment(token.as_deref(), &hash)?;
    Ok(([(CONTENT_TYPE, "application/octet-stream")], bytes))
}

#[derive(Deserialize)]
struct SummaryQuery {
    start: DateTime<Utc>,
    end: DateTime<Utc>,
    detail: Option<Detail>,
    format: Option<String>,
}

async fn summary(
    State(svc): State<Shared>,
    token: Token,
    q: Result<Query<SummaryQuery>, QueryRejection>,
) -> Result<Response, ApiError> {
    let q = query(q).map_err(|e| ApiError::new("BadPeriod", e.message))?;
    let period = Period::new(q.start, q.end)?;
    let doc = svc.summary(token.as_deref(), period, q.detail.unwrap_or(Detail::Summarized))?;
    match q.format.as_deref() {
        None | Some("json") => Ok(Json(doc).into_response()),
        Some("text") => Ok(([(CONTENT_TYPE, "text/plain; charset=utf-8")], render_text(&doc)).into_response()),
        Some(other) => Err(ApiError::bad_request(format!("format must be json or text, got {other:?}"))),
    }
}

#[derive(Deserialize)]
struct StreamQuery {
    since_seq: Option<u64>,
}

const STREAM_BATCH: usize = 256;

struct Cursor {
    svc: Shared,
    rx: watch::Receiver<u64>,
    after: u64,
    pending: VecDeque<StreamEvent>,
}

/// Resumes after `since_seq` (or the `Last-Event-ID` header, which wins):
/// first everything already in the log, then live events.
async fn stream(
    State(svc): State<Shared>,
    headers: HeaderMap,
    q: Result<Query<StreamQuery>, QueryRejection>,
) -> Result<Sse<impl Stream<Item = Result<SseEvent, Infallible>>>, ApiError> {
    let q = query(q)?;
    let last_event_id = headers
        .get("last-event-id")
        .and_then(|v| v.to_str().ok())
        .and_then(|v| v.trim().parse::<u64>().ok());
    let after = last_event_id.or(q.since_seq).unwrap_or(0);
    // Subscribe before reading history so nothing committed in between is missed.
    let rx = svc.subscribe();
    let cursor = Cursor {
        svc,
        rx,
        after,
        pending: VecDeque::new(),
    };
    let events = futures::stream::unfold(cursor, |mut c| async move {
        loop {
            if let Some(ev) = c.pending.pop_front() {
                let sse = SseEvent::default()
                    .id(ev.seq.to_string())
                    .event(ev.body.kind())
                    .data(serde_json::to_string(&ev).expect("stream events serialize"));
                return Some((Ok(sse), c));
            }
            let batch = c.svc.stream_since(c.after, STREAM_BATCH);
            if let Some(last) = batch.last() {
                c.after = last.seq;
                c.pending.extend(batch);
                continue;
            }
            c.rx.changed().await.ok()?;
        }
    });
    Ok(Sse::new(events).keep_alive(KeepAlive::default()))
}
