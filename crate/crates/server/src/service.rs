//! Request handling independent of HTTP. Every write funnels through one
//! mutex around the log and derived state, so trust operations on a report
//! are applied in a single serial order.

use std::collections::{BTreeSet, HashMap};
use std::net::IpAddr;
use std::path::Path;
use std::sync::{Arc, Mutex, MutexGuard};
use std::time::Instant;

use base64::Engine;
use chrono::{DateTime, Duration, Utc};
use civicsense_core::geo::{self, cell_of, cell_snapshot};
use civicsense_core::model::validate_draft;
use civicsense_core::store::{
    blobs, BlobStore, DerivedState, Event, EventLog, EventPayload, FileStorage, KeyScope, LogStorage,
    MemoryStorage, UserRecord,
};
use civicsense_core::trust::{self, Rating, Verdict, Vote, INITIAL_REPUTATION};
use civicsense_core::wire::{
    FeedPage, LoginResponse, QueueItem, ShareLink, StatsResponse, StreamBody, StreamEvent, SubmitRequest,
    SyncEntryResult, SyncOutcome, TrustSummary, MAX_PAGE_SIZE, MAX_SYNC_BATCH,
};
use civicsense_core::{
    aggregate_map, build_summary, category_distribution, BBox, Category, Detail, MapCell, Period,
    PublicReport, Redact, Report, ReportId, ReporterProfile, Role, StoreError, SummaryDocument, UserId,
    ValidationStatus,
};
use tokio::sync::watch;

use crate::auth;
use crate::config::Config;
use crate::error::ApiError;
use crate::ratelimit::RateLimiter;

pub type Clock = Box<dyn Fn() -> DateTime<Utc> + Send + Sync>;

#[derive(Debug, Clone, PartialEq)]
pub struct ServiceConfig {
    pub threshold: f64,
    pub default_cell_size: f64,
    pub anonymous_rate_limit: u32,
    pub session_ttl: Duration,
    pub credential_iterations: u32,
}

impl From<&Config> for ServiceConfig {
    fn from(c: &Config) -> Self {
        ServiceConfig {
            threshold: c.threshold,
            default_cell_size: c.default_cell_size,
            anonymous_rate_limit: c.anonymous_rate_limit,
            session_ttl: Duration::seconds(c.session_ttl_secs),
            credential_iterations: c.credential_iterations,
        }
    }
}

impl Default for ServiceConfig {
    fn default() -> Self {
        (&Config::default()).into()
    }
}

#[derive(Debug, Clone)]
struct Session {
    user_id: UserId,
    expiry: DateTime<Utc>,
}

struct Inner {
    log: EventLog<Box<dyn LogStorage + Send>>,
    state: DerivedState,
    history: Vec<StreamEvent>,
    last_time: DateTime<Utc>,
}

/// Who is making a request.
#[derive(Debug, Clone, PartialEq)]
pub struct Caller {
    pub user: Option<UserId>,
    pub addr: IpAddr,
}

/// Result of a single submission.
#[derive(Debug, Clone, PartialEq)]
pub struct Submitted {
    pub report: PublicReport,
    pub created: bool,
}

pub struct Service {
    config: ServiceConfig,
    inner: Mutex<Inner>,
    sessions: Mutex<HashMap<String, Session>>,
    limiter: Mutex<RateLimiter>,
    blobs: Option<BlobStore>,
    seq_tx: watch::Sender<u64>,
    clock: Clock,
}

fn lock<T>(m: &Mutex<T>) -> MutexGuard<'_, T> {
    // A panic while holding the lock cannot leave the log and state out of
    // step: state is only touched after a durable append, by infallible code.
    m.lock().unwrap_or_else(|p| p.into_inner())
}

impl Service {
    /// Opens (or creates) `data_dir/events.log` and the blob directory.
    pub fn open(data_dir: &Path, config: ServiceConfig) -> Result<Self, StoreError> {
        std::fs::create_dir_all(data_dir)?;
        let storage = FileStorage::open(data_dir.join("events.log"))?;
        Self::with_storage(Box::new(storage), Some(BlobStore::new(data_dir)), config, Box::new(Utc::now))
    }

    /// A service over an in-memory log. Attachment bytes are checked but
    /// not kept.
    pub fn in_memory(config: ServiceConfig) -> Self {
        Self::with_storage(Box::new(MemoryStorage::default()), None, config, Box::new(Utc::now))
            .expect("an empty log always opens")
    }

    pub fn with_storage(
        storage: Box<dyn LogStorage + Send>,
        blobs: Option<BlobStore>,
        config: ServiceConfig,
        clock: Clock,
    ) -> Result<Self, StoreError> {
        let (log, events) = EventLog::open(storage)?;
        let mut state = DerivedState::new();
        let mut history = Vec::new();
        let mut last_time = DateTime::<Utc>::MIN_UTC;
        for event in &events {
            let before = status_before(&state, &event.payload);
            state
                .apply(event)
                .map_err(|e| StoreError::CorruptLog {
                    seq: event.seq,
                    reason: e.to_string(),
                })?;
            history.extend(stream_event(event, before, &state, config.default_cell_size));
            last_time = last_time.max(event.server_time);
        }
        let (seq_tx, _) = watch::channel(state.last_seq());
        Ok(Service {
            limiter: Mutex::new(RateLimiter::new(config.anonymous_rate_limit)),
            config,
            inner: Mutex::new(Inner {
                log,
                state,
                history,
                last_time,
            }),
            sessions: Mutex::new(HashMap::new()),
            blobs,
            seq_tx,
            clock,
        })
    }

    pub fn config(&self) -> &ServiceConfig {
        &self.config
    }

    /// Copy of the derived state, for inspection and tests.
    pub fn snapshot(&self) -> DerivedState {
        lock(&self.inner).state.clone()
    }

    pub fn last_seq(&self) -> u64 {
        lock(&self.inner).state.last_seq()
    }

    pub fn subscribe(&self) -> watch::Receiver<u64> {
        self.seq_tx.subscribe()
    }

    /// Stream events with seq greater than `after`, at most `limit`.
    pub fn stream_since(&self, after: u64, limit: usize) -> Vec<StreamEvent> {
        let inner = lock(&self.inner);
        let start = inner.history.partition_point(|e| e.seq <= after);
        inner.history[start..].iter().take(limit).cloned().collect()
    }

    /// Appends one event and applies it. State changes only after the
    /// append is durable.
    fn commit(&self, inner: &mut Inner, payload: EventPayload) -> Result<Event, ApiError> {
        let now = (self.clock)().max(inner.last_time);
        let event = inner.log.stage(now, payload);
        let prepared = inner.state.prepare(&event)?;
        let before = status_before(&inner.state, &event.payload);
        inner.log.commit(&event)?;
        inner.state.commit(prepared);
        inner.last_time = now;
        let streamed = stream_event(&event, before, &inner.state, self.config.default_cell_size);
        inner.history.extend(streamed);
        self.seq_tx.send_replace(event.seq);
        Ok(event)
    }

    /// Validates a pending report whose score has reached the threshold.
    fn evaluate(&self, inner: &mut Inner, id: ReportId) -> Result<(), ApiError> {
        let Some(state) = inner.state.trust(id) else {
            return Ok(());
        };
        if !state.status.is_pending() {
            return Ok(());
        }
        let t = trust::evaluate(state, self.config.threshold)?;
        if t.state.status.is_validated() {
            self.commit(
                inner,
                EventPayload::CommunityValidated {
                    report_id: id,
                    threshold: self.config.threshold,
                },
            )?;
        }
        Ok(())
    }

    // ---- identity ----

    pub fn register(&self, name: &str, credential: &str) -> Result<ReporterProfile, ApiError> {
        self.register_with_role(name, credential, Role::Citizen)
    }

    pub fn register_with_role(&self, name: &str, credential: &str, role: Role) -> Result<ReporterProfile, ApiError> {
        let name = name.trim();
        if name.is_empty()
            || name.chars().count() > auth::MAX_NAME_CHARS
            || name.eq_ignore_ascii_case(civicsense_core::model::ANONYMOUS_MARKER)
        {
            return Err(ApiError::new("BadName", "display name must be 1 to 64 characters and not reserved"));
        }
        if credential.chars().count() < auth::MIN_CREDENTIAL_CHARS {
            return Err(ApiError::new("WeakCredential", "credential must be at least 8 characters"));
        }
        if lock(&self.inner).state.user_by_name(name).is_some() {
            return Err(ApiError::new("NameTaken", "display name already taken"));
        }
        // Hashing is slow on purpose; keep it outside the write lock.
        let credential_hash = auth::hash_credential(credential, self.config.credential_iterations);
        let profile = ReporterProfile {
            user_id: UserId(auth::new_user_id()),
            display_name: name.to_string(),
            reputation: INITIAL_REPUTATION,
            role,
        };
        let mut inner = lock(&self.inner);
        self.commit(
            &mut inner,
            EventPayload::UserRegistered(UserRecord {
                profile: profile.clone(),
                credential_hash,
            }),
        )?;
        Ok(profile)
    }

    /// Creates an admin account unless the name is already registered.
    pub fn ensure_admin(&self, name: &str, credential: &str) -> Result<(), ApiError> {
        if lock(&self.inner).state.user_by_name(name).is_some() {
            return Ok(());
        }
        self.register_with_role(name, credential, Role::Admin).map(|_| ())
    }

    pub fn login(&self, name: &str, credential: &str) -> Result<LoginResponse, ApiError> {
        let record = lock(&self.inner).state.user_by_name(name).cloned();
        let bad = || ApiError::new("BadCredentials", "unknown name or wrong credential");
        let record = record.ok_or_else(bad)?;
        if !auth::verify_credential(&record.credential_hash, credential) {
            return Err(bad());
        }
        let token = auth::new_token();
        let expiry = (self.clock)() + self.config.session_ttl;
        lock(&self.sessions).insert(
            token.clone(),
            Session {
                user_id: record.profile.user_id.clone(),
                expiry,
            },
        );
        Ok(LoginResponse {
            token,
            user_id: record.profile.user_id,
            expiry,
        })
    }

    /// Resolves an optional bearer token. A token that is present but
    /// unknown or expired is an error even where a session is optional.
    pub fn authenticate(&self, token: Option<&str>) -> Result<Option<UserId>, ApiError> {
        let Some(token) = token else {
            return Ok(None);
        };
        let now = (self.clock)();
        let mut sessions = lock(&self.sessions);
        match sessions.get(token) {
            Some(s) if s.expiry > now => Ok(Some(s.user_id.clone())),
            Some(_) => {
                sessions.remove(token);
                Err(ApiError::unauthorized())
            }
            None => Err(ApiError::unauthorized()),
        }
    }

    pub fn require_user(&self, token: Option<&str>) -> Result<UserId, ApiError> {
        self.authenticate(token)?.ok_or_else(ApiError::unauthorized)
    }

    fn require_admin(&self, token: Option<&str>) -> Result<UserId, ApiError> {
        let user = self.require_user(token)?;
        let inner = lock(&self.inner);
        match inner.state.profile(&user) {
            Some(p) if p.is_admin() => Ok(user),
            _ => Err(ApiError::new("NotAdmin", "admin role required")),
        }
    }

    pub fn profile(&self, user: &UserId) -> Option<ReporterProfile> {
        lock(&self.inner).state.profile(user).cloned()
    }

    // ---- reports ----

    pub fn submit(&self, caller: &Caller, request: SubmitRequest) -> Result<Submitted, ApiError> {
        let SubmitRequest {
            draft,
            attachment_data,
        } = request;
        let draft = validate_draft(draft)?;
        let scope = if draft.anonymous {
            KeyScope::Anonymous
        } else {
            KeyScope::User(caller.user.clone().ok_or_else(ApiError::unauthorized)?)
        };

        let mut inner = lock(&self.inner);
        if let Some(id) = inner.state.lookup_client_key(&scope, &draft.client_key) {
            let report = inner.state.report(id).expect("indexed report exists");
            return Ok(Submitted {
                report: report.redact(&inner.state),
                created: false,
            });
        }
        if draft.anonymous && !lock(&self.limiter).try_acquire(caller.addr, Instant::now()) {
            return Err(ApiError::new("RateLimited", "too many anonymous submissions, retry in a minute"));
        }

        let mut draft = draft;
        if let Some(meta) = draft.attachment.as_mut() {
            meta.media_ref = self.store_attachment(&meta.content_hash, meta.size_bytes, attachment_data.as_deref())?;
        } else if attachment_data.is_some() {
            return Err(ApiError::new("BadAttachment", "attachment data sent without attachment metadata"));
        }

        let submitter = match &scope {
            KeyScope::User(id) => Some(id.clone()),
            KeyScope::Anonymous => None,
        };
        let id = inner.state.next_report_id();
        let report = Report::from_draft(id, draft, submitter, inner.last_time);
        let weight = inner.state.author_weight(&report.author)?;
        self.commit(
            &mut inner,
            EventPayload::ReportSubmitted {
                report,
                author_reputation_at_submit: weight,
            },
        )?;
        self.evaluate(&mut inner, id)?;
        let report = inner.state.report(id).expect("just submitted");
        Ok(Submitted {
            report: report.redact(&inner.state),
            created: true,
        })
    }

    fn store_attachment(&self, hash: &str, size: u64, data: Option<&str>) -> Result<String, ApiError> {
        let bad = |msg: &str| ApiError::new("BadAttachment", msg.to_string());
        match data {
            Some(encoded) => {
                let bytes = base64::engine::general_purpose::STANDARD
                    .decode(encoded)
                    .map_err(|_| bad("attachment data is not valid base64"))?;
                if bytes.len() as u64 != size || blobs::content_hash(&bytes) != hash {
                    return Err(bad("attachment bytes do not match their declared hash and size"));
                }
                if let Some(store) = &self.blobs {
                    store.put(&bytes).map_err(StoreError::from)?;
                }
            }
            None => {
                // Metadata alone is fine if the bytes arrived earlier.
                if let Some(store) = &self.blobs {
                    if !store.path_for(hash).exists() {
                        return Err(bad("attachment bytes missing"));
                    }
                }
            }
        }
        Ok(blobs::media_ref(hash))
    }

    pub fn attachment(&self, token: Option<&str>, hash: &str) -> Result<Vec<u8>, ApiError> {
        self.require_admin(token)?;
        let store = self
            .blobs
            .as_ref()
            .ok_or_else(|| ApiError::new("NotFound", "no attachment store"))?;
        store
            .get(hash)
            .map_err(|_| ApiError::new("NotFound", "no such attachment"))
    }

    pub fn rate(&self, token: Option<&str>, id: ReportId, vote: Vote) -> Result<TrustSummary, ApiError> {
        let rater = self.require_user(token)?;
        let mut inner = lock(&self.inner);
        if inner.state.trust(id).is_none() {
            return Err(ApiError::new("UnknownReport", "no such report"));
        }
        let reputation = inner
            .state
            .profile(&rater)
            .map(|p| p.reputation)
            .ok_or_else(ApiError::unauthorized)?;
        let time = (self.clock)().max(inner.last_time);
        self.commit(
            &mut inner,
            EventPayload::RatingApplied(Rating {
                report_id: id,
                rater_id: rater,
                vote,
                rater_reputation_at_vote: reputation,
                time,
            }),
        )?;
        self.evaluate(&mut inner, id)?;
        Ok(trust_summary(&inner.state, id))
    }

    pub fn verdict(&self, token: Option<&str>, id: ReportId, verdict: Verdict) -> Result<TrustSummary, ApiError> {
        let admin = self.require_admin(token)?;
        let mut inner = lock(&self.inner);
        if inner.state.trust(id).is_none() {
            return Err(ApiError::new("UnknownReport", "no such report"));
        }
        self.commit(
            &mut inner,
            EventPayload::AdminVerdict {
                report_id: id,
                verdict,
                admin_id: admin,
            },
        )?;
        Ok(trust_summary(&inner.state, id))
    }

    pub fn sync(&self, caller: &Caller, entries: Vec<serde_json::Value>) -> Result<Vec<SyncEntryResult>, ApiError> {
        if entries.len() > MAX_SYNC_BATCH {
            return Err(ApiError::new(
                "BatchTooLarge",
                format!("{} entries, limit is {MAX_SYNC_BATCH}", entries.len()),
            ));
        }
        let results = entries
            .into_iter()
            .map(|value| {
                let client_key = value
                    .get("client_key")
                    .and_then(|k| k.as_str())
                    .map(str::to_string);
                let outcome = serde_json::from_value::<SubmitRequest>(value)
                    .map_err(|e| ApiError::from_decode(e.to_string()))
                    .and_then(|req| self.submit(caller, req));
                let outcome = match outcome {
                    Ok(s) if s.created => SyncOutcome::Created {
                        report_id: s.report.report_id,
                    },
                    Ok(s) => SyncOutcome::Duplicate {
                        report_id: s.report.report_id,
                    },
                    Err(e) => SyncOutcome::Error {
                        code: e.code,
                        message: e.message,
                    },
                };
                SyncEntryResult { client_key, outcome }
            })
            .collect();
        Ok(results)
    }

    // ---- reads ----

    pub fn feed(&self, page: u32, page_size: u32) -> Result<FeedPage, ApiError> {
        if page == 0 || page_size == 0 || page_size > MAX_PAGE_SIZE {
            return Err(ApiError::new(
                "BadPage",
                format!("page must be >= 1 and page_size within 1..={MAX_PAGE_SIZE}"),
            ));
        }
        let inner = lock(&self.inner);
        let mut visible: Vec<&Report> = inner
            .state
            .reports()
            .filter(|r| !r.status.is_rejected())
            .collect();
        visible.sort_by(|a, b| {
            b.server_time
                .cmp(&a.server_time)
                .then(b.report_id.cmp(&a.report_id))
        });
        let start = (page as usize - 1).saturating_mul(page_size as usize);
        let reports = visible
            .iter()
            .skip(start)
            .take(page_size as usize)
            .map(|r| r.redact(&inner.state))
            .collect();
        Ok(FeedPage {
            page,
            page_size,
            total: visible.len() as u64,
            reports,
        })
    }

    pub fn map(
        &self,
        bbox: &BBox,
        cell_size: Option<f64>,
        categories: Option<&BTreeSet<Category>>,
    ) -> Result<Vec<MapCell>, ApiError> {
        let inner = lock(&self.inner);
        Ok(aggregate_map(
            inner.state.validated_reports(),
            bbox,
            cell_size.unwrap_or(self.config.default_cell_size),
            categories,
        )?)
    }

    pub fn stats(&self) -> StatsResponse {
        let inner = lock(&self.inner);
        StatsResponse {
            validated: inner.state.validated_reports().count() as u64,
            distribution: category_distribution(inner.state.validated_reports()),
        }
    }

    pub fn public_report(&self, id: ReportId) -> Result<PublicReport, ApiError> {
        let inner = lock(&self.inner);
        let report = inner
            .state
            .report(id)
            .ok_or_else(|| ApiError::new("UnknownReport", "no such report"))?;
        if report.status.is_rejected() {
            return Err(ApiError::new("ReportRejected", "report was rejected"));
        }
        Ok(report.redact(&inner.state))
    }

    pub fn share_link(&self, id: ReportId) -> Result<ShareLink, ApiError> {
        self.public_report(id)?;
        Ok(ShareLink {
            report_id: id,
            path: format!("/r/{}", id.0),
        })
    }

    /// Pending reports, oldest first.
    pub fn queue(&self, token: Option<&str>) -> Result<Vec<QueueItem>, ApiError> {
        self.require_admin(token)?;
        let inner = lock(&self.inner);
        Ok(inner
            .state
            .reports()
            .filter(|r| r.status.is_pending())
            .map(|r| QueueItem {
                report: r.redact(&inner.state),
                score: inner.state.trust(r.report_id).map_or(0.0, |t| t.score),
                media_ref: r.attachment.as_ref().map(|a| a.media_ref.clone()),
            })
            .collect())
    }

    pub fn summary(&self, token: Option<&str>, period: Period, detail: Detail) -> Result<SummaryDocument, ApiError> {
        self.require_admin(token)?;
        let inner = lock(&self.inner);
        Ok(build_summary(
            inner.state.reports(),
            period,
            detail,
            self.config.default_cell_size,
            &inner.state,
        )?)
    }
}

fn trust_summary(state: &DerivedState, id: ReportId) -> TrustSummary {
    let t = state.trust(id).expect("checked by caller");
    TrustSummary {
        report_id: id,
        score: t.score,
        status: t.status,
    }
}

/// Status of the report an event concerns, before the event.
fn status_before(state: &DerivedState, payload: &EventPayload) -> Option<ValidationStatus> {
    let id = match payload {
        EventPayload::CommunityValidated { report_id, .. } | EventPayload::AdminVerdict { report_id, .. } => {
            *report_id
        }
        _ => return None,
    };
    state.report(id).map(|r| r.status)
}

/// The stream event, if any, for an event that has just been applied.
/// Used both live and when rebuilding history at startup.
fn stream_event(
    event: &Event,
    before: Option<ValidationStatus>,
    state: &DerivedState,
    cell_size: f64,
) -> Option<StreamEvent> {
    let id = match &event.payload {
        EventPayload::ReportSubmitted { report, .. } => report.report_id,
        EventPayload::CommunityValidated { report_id, .. } | EventPayload::AdminVerdict { report_id, .. } => {
            *report_id
        }
        EventPayload::UserRegistered(_) | EventPayload::RatingApplied(_) => return None,
    };
    let report = state.report(id)?;
    let public = report.redact(state);
    let map_update = || -> Option<(MapCell, Vec<geo::CategoryShare>)> {
        let index = cell_of(&report.location, cell_size).ok()?;
        let cell = cell_snapshot(state.validated_reports(), index, cell_size).ok()?;
        Some((cell, category_distribution(state.validated_reports())))
    };
    let was_validated = before.is_some_and(ValidationStatus::is_validated);
    let body = match &event.payload {
        EventPayload::ReportSubmitted { .. } => StreamBody::ReportSubmitted { report: public },
        _ if report.status.is_rejected() => {
            let update = if was_validated { map_update() } else { None };
            let (cell, stats) = update.unzip();
            StreamBody::ReportRejected {
                report: public,
                cell,
                stats,
            }
        }
        _ if was_validated => StreamBody::ReportConfirmed { report: public },
        _ => {
            let (cell, stats) = map_update()?;
            StreamBody::ReportValidated {
                report: public,
                cell,
                stats,
            }
        }
    };
    Some(StreamEvent {
        seq: event.seq,
        server_time: event.server_time,
        body,
    })
}

pub type SharedService = Arc<Service>;
