use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::model::{ReportId, Report, ReporterProfile, UserId};
use crate::trust::{Rating, Verdict};

/// A registered identity as persisted: profile plus salted credential hash.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserRecord {
    pub profile: ReporterProfile,
    pub credential_hash: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "payload")]
pub enum EventPayload {
    UserRegistered(UserRecord),
    ReportSubmitted {
        report: Report,
        author_reputation_at_submit: f64,
    },
    RatingApplied(Rating),
    CommunityValidated {
        report_id: ReportId,
        threshold: f64,
    },
    AdminVerdict {
        report_id: ReportId,
        verdict: Verdict,
        admin_id: UserId,
    },
}

impl EventPayload {
    pub fn kind(&self) -> &'static str {
        match self {
            EventPayload::UserRegistered(_) => "UserRegistered",
            EventPayload::ReportSubmitted { .. } => "ReportSubmitted",
            EventPayload::RatingApplied(_) => "RatingApplied",
            EventPayload::CommunityValidated { .. } => "CommunityValidated",
            EventPayload::AdminVerdict { .. } => "AdminVerdict",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub seq: u64,
    pub server_time: DateTime<Utc>,
    #[serde(flatten)]
    pub payload: EventPayload,
}
