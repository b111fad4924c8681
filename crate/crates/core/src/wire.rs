//! Request and response bodies of the HTTP API, shared by server and clients.

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::geo::{CategoryShare, MapCell};
use crate::model::{PublicReport, ReportDraft, ReportId, ReporterProfile, UserId, ValidationStatus};
use crate::trust::{Verdict, Vote};

/// Most entries a single sync batch may carry.
pub const MAX_SYNC_BATCH: usize = 100;
pub const MAX_PAGE_SIZE: u32 = 100;

/// Body of every error response: `{"error": {"code": .., "message": ..}}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: ErrorInfo,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorInfo {
    pub code: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Credentials {
    pub name: String,
    pub credential: String,
}

pub type RegisterResponse = ReporterProfile;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoginResponse {
    pub token: String,
    pub user_id: UserId,
    pub expiry: DateTime<Utc>,
}

/// A draft plus, optionally, the attachment bytes (standard base64).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubmitRequest {
    #[serde(flatten)]
    pub draft: ReportDraft,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub attachment_data: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateRequest {
    pub vote: Vote,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VerdictRequest {
    pub verdict: Verdict,
}

/// Score and status of a report after a rating or verdict.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrustSummary {
    pub report_id: ReportId,
    pub score: f64,
    pub status: ValidationStatus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeedPage {
    pub page: u32,
    pub page_size: u32,
    pub total: u64,
    pub reports: Vec<PublicReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsResponse {
    /// Number of validated reports the distribution covers.
    pub validated: u64,
    pub distribution: Vec<CategoryShare>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyncRequest {
    pub entries: Vec<serde_json::Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "lowercase")]
pub enum SyncOutcome {
    Created { report_id: ReportId },
    Duplicate { report_id: ReportId },
    Error { code: String, message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyncEntryResult {
    /// Echoed from the entry when it could be read.
    pub client_key: Option<String>,
    #[serde(flatten)]
    pub outcome: SyncOutcome,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyncResponse {
    pub results: Vec<SyncEntryResult>,
}

/// A pending report awaiting moderation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueueItem {
    pub report: PublicReport,
    pub score: f64,
    pub media_ref: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShareLink {
    pub report_id: ReportId,
    pub path: String,
}

/// One entry of the live stream. `seq` is the log sequence number of the
/// event that caused it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StreamEvent {
    pub seq: u64,
    pub server_time: DateTime<Utc>,
    #[serde(flatten)]
    pub body: StreamBody,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StreamBody {
    /// A new pending report, for feeds.
    ReportSubmitted { report: PublicReport },
    /// A report entered the map. `cell` is its cell at the default cell size
    /// after the change; `stats` is the new category distribution.
    ReportValidated {
        report: PublicReport,
        cell: MapCell,
        stats: Vec<CategoryShare>,
    },
    /// An admin confirmed a report that was already on the map.
    ReportConfirmed { report: PublicReport },
    /// A report was rejected. `cell` and `stats` are present when it left
    /// the map.
    ReportRejected {
        report: PublicReport,
        cell: Option<MapCell>,
        stats: Option<Vec<CategoryShare>>,
    },
}

impl StreamBody {
    pub fn kind(&self) -> &'static str {
        match self {
            StreamBody::ReportSubmitted { .. } => "report_submitted",
            StreamBody::ReportValidated { .. } => "report_validated",
            StreamBody::ReportConfirmed { .. } => "report_confirmed",
            StreamBody::ReportRejected { .. } => "report_rejected",
        }
    }

    pub fn report(&self) -> &PublicReport {
        match self {
            StreamBody::ReportSubmitted { report }
            | StreamBody::ReportValidated { report, .. }
            | StreamBody::ReportConfirmed { report }
            | StreamBody::ReportRejected { report, .. } => report,
        }
    }
}
