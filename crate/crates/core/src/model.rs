//! Shared domain vocabulary: categories, locations, drafts, reports,
//! identities, and the validation and redaction rules that go with them.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{DraftError, UnknownCategory};

/// Maximum length of a report's free text, in characters.
pub const MAX_TEXT_CHARS: usize = 2000;

/// Maximum length of a client idempotency key, in characters.
pub const MAX_CLIENT_KEY_CHARS: usize = 64;

/// Hex length of an attachment digest (SHA-256).
pub const CONTENT_HASH_HEX_LEN: usize = 64;

/// The author marker shown for anonymous reports.
pub const ANONYMOUS_MARKER: &str = "anonymous";

/// Closed set of pollution categories.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", try_from = "String")]
pub enum Category {
    Garbage,
    Air,
    Water,
    Noise,
    Light,
    Visual,
    Other,
}

impl Category {
    pub const ALL: [Category; 7] = [
        Category::Garbage,
        Category::Air,
        Category::Water,
        Category::Noise,
        Category::Light,
        Category::Visual,
        Category::Other,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Category::Garbage => "garbage",
            Category::Air => "air",
            Category::Water => "water",
            Category::Noise => "noise",
            Category::Light => "light",
            Category::Visual => "visual",
            Category::Other => "other",
        }
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl TryFrom<String> for Category {
    type Error = UnknownCategory;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        parse_category(&s)
    }
}

impl FromStr for Category {
    type Err = UnknownCategory;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_category(s)
    }
}

/// Case-insensitive exact match over the closed category set.
/// `waste` is accepted as an alias for [`Category::Garbage`].
pub fn parse_category(label: &str) -> Result<Category, UnknownCategory> {
    let lower = label.to_ascii_lowercase();
    if lower == "waste" {
        return Ok(Category::Garbage);
    }
    Category::ALL
        .into_iter()
        .find(|c| c.label() == lower)
        .ok_or_else(|| UnknownCategory(label.to_string()))
}

/// How a location fix was obtained. Recorded verbatim.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LocationSource {
    Gps,
    Network,
    Manual,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoPoint {
    pub lat: f64,
    pub lon: f64,
    pub source: LocationSource,
}

impl GeoPoint {
    pub fn new(lat: f64, lon: f64, source: LocationSource) -> Self {
        Self { lat, lon, source }
    }

    pub fn is_valid(&self) -> bool {
        (-90.0..=90.0).contains(&self.lat) && (-180.0..=180.0).contains(&self.lon)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AttachmentKind {
    Photo,
    Video,
}

/// Metadata for an attachment whose bytes live in the blob store.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttachmentMeta {
    pub kind: AttachmentKind,
    /// Lowercase hex SHA-256 of the file bytes.
    pub content_hash: String,
    pub size_bytes: u64,
    /// Assigned by the server once the bytes are stored.
    #[serde(default)]
    pub media_ref: String,
}

impl AttachmentMeta {
    pub fn is_valid(&self) -> bool {
        self.size_bytes > 0
            && self.content_hash.len() == CONTENT_HASH_HEX_LEN
            && self
                .content_hash
                .bytes()
                .all(|b| b.is_ascii_digit() || (b'a'..=b'f').contains(&b))
    }
}

/// A report as composed on the client, before the server accepts it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportDraft {
    pub categories: BTreeSet<Category>,
    pub location: GeoPoint,
    #[serde(default)]
    pub text: String,
    #[serde(default)]
    pub attachment: Option<AttachmentMeta>,
    #[serde(default)]
    pub anonymous: bool,
    pub client_key: String,
    pub client_time: DateTime<Utc>,
}

/// Returns the draft unchanged iff every draft invariant holds, otherwise the
/// error for the first violated field (in declaration order).
pub fn validate_draft(draft: ReportDraft) -> Result<ReportDraft, DraftError> {
    if draft.categories.is_empty() {
        return Err(DraftError::EmptyCategories);
    }
    if !draft.location.is_valid() {
        return Err(DraftError::BadCoordinates {
            lat: draft.location.lat,
            lon: draft.location.lon,
        });
    }
    let chars = draft.text.chars().count();
    if chars > MAX_TEXT_CHARS {
        return Err(DraftError::TextTooLong { chars });
    }
    if let Some(att) = &draft.attachment {
        if !att.is_valid() {
            return Err(DraftError::BadAttachment);
        }
    }
    let key_chars = draft.client_key.chars().count();
    if key_chars == 0 || key_chars > MAX_CLIENT_KEY_CHARS {
        return Err(DraftError::BadClientKey);
    }
    Ok(draft)
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct UserId(pub String);

impl UserId {
    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for UserId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct ReportId(pub u64);

impl fmt::Display for ReportId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Who authored a report: a registered user or the shared anonymous principal.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", content = "user_id", rename_all = "lowercase")]
pub enum ReporterRef {
    Registered(UserId),
    Anonymous,
}

impl ReporterRef {
    pub fn user_id(&self) -> Option<&UserId> {
        match self {
            ReporterRef::Registered(id) => Some(id),
            ReporterRef::Anonymous => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Community,
    Admin,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "state", content = "provenance", rename_all = "lowercase")]
pub enum ValidationStatus {
    Pending,
    Validated(Provenance),
    Rejected(Provenance),
}

impl ValidationStatus {
    pub fn is_pending(self) -> bool {
        matches!(self, ValidationStatus::Pending)
    }

    pub fn is_validated(self) -> bool {
        matches!(self, ValidationStatus::Validated(_))
    }

    pub fn is_rejected(self) -> bool {
        matches!(self, ValidationStatus::Rejected(_))
    }

    pub fn label(self) -> &'static str {
        match self {
            ValidationStatus::Pending => "pending",
            ValidationStatus::Validated(_) => "validated",
            ValidationStatus::Rejected(_) => "rejected",
        }
    }

    /// Whether moving from `self` to `next` is one of the permitted
    /// transitions: pending→validated, pending→rejected, validated→rejected
    /// (admin only). Re-labelling a validated report's provenance is not a
    /// state change and is allowed.
    pub fn may_become(self, next: ValidationStatus) -> bool {
        use ValidationStatus::*;
        match (self, next) {
            (Pending, Validated(_)) | (Pending, Rejected(_)) => true,
            (Validated(_), Rejected(Provenance::Admin)) => true,
            (Validated(_), Validated(_)) => true,
            _ => false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Citizen,
    Admin,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReporterProfile {
    pub user_id: UserId,
    pub display_name: String,
    pub reputation: f64,
    pub role: Role,
}

impl ReporterProfile {
    pub fn is_admin(&self) -> bool {
        self.role == Role::Admin
    }

    /// Adds `delta` to the reputation, clamping the result into [0, 1].
    pub fn adjust_reputation(&mut self, delta: f64) {
        self.reputation = clamp_reputation(self.reputation + delta);
    }
}

pub fn clamp_reputation(value: f64) -> f64 {
    value.clamp(0.0, 1.0)
}

/// An accepted report as held by the server.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub report_id: ReportId,
    pub categories: BTreeSet<Category>,
    pub location: GeoPoint,
    pub text: String,
    pub attachment: Option<AttachmentMeta>,
    pub anonymous: bool,
    pub client_key: String,
    pub client_time: DateTime<Utc>,
    pub author: ReporterRef,
    pub server_time: DateTime<Utc>,
    pub status: ValidationStatus,
}

impl Report {
    /// Builds a pending report from an accepted draft. Anonymous drafts are
    /// always attributed to the anonymous principal.
    pub fn from_draft(
        report_id: ReportId,
        draft: ReportDraft,
        submitter: Option<UserId>,
        server_time: DateTime<Utc>,
    ) -> Self {
        let author = match submitter {
            Some(user) if !draft.anonymous => ReporterRef::Registered(user),
            _ => ReporterRef::Anonymous,
        };
        Report {
            report_id,
            categories: draft.categories,
            location: draft.location,
            text: draft.text,
            attachment: draft.attachment,
            anonymous: draft.anonymous,
            client_key: draft.client_key,
            client_time: draft.client_time,
            author,
            server_time,
            status: ValidationStatus::Pending,
        }
    }
}

/// The externally visible projection of a report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PublicReport {
    pub report_id: ReportId,
    pub categories: BTreeSet<Category>,
    pub location: GeoPoint,
    pub text: String,
    pub attachment_kind: Option<AttachmentKind>,
    pub status: ValidationStatus,
    pub server_time: DateTime<Utc>,
    /// Display name of a registered author, or [`ANONYMOUS_MARKER`].
    pub author: String,
}

/// Resolves a registered user to their display name.
pub trait DisplayNames {
    fn display_name(&self, user: &UserId) -> Option<&str>;
}

impl DisplayNames for std::collections::HashMap<UserId, String> {
    fn display_name(&self, user: &UserId) -> Option<&str> {
        self.get(user).map(String::as_str)
    }
}

/// Produces the public view of a value. Applying it to something already
/// public returns it unchanged.
pub trait Redact {
    fn redact(&self, names: &dyn DisplayNames) -> PublicReport;
}

impl Redact for Report {
    fn redact(&self, names: &dyn DisplayNames) -> PublicReport {
        let author = match &self.author {
            ReporterRef::Anonymous => ANONYMOUS_MARKER.to_string(),
            // An unresolvable author is shown as anonymous rather than by id.
            ReporterRef::Registered(id) => names
                .display_name(id)
                .unwrap_or(ANONYMOUS_MARKER)
                .to_string(),
        };
        PublicReport {
            report_id: self.report_id,
            categories: self.categories.clone(),
            location: self.location,
            text: self.text.clone(),
            attachment_kind: self.attachment.as_ref().map(|a| a.kind),
            status: self.status,
            server_time: self.server_time,
            author,
        }
    }
}

impl Redact for PublicReport {
    fn redact(&self, _names: &dyn DisplayNames) -> PublicReport {
        self.clone()
    }
}
