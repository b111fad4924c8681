use thiserror::Error;

/// A category label outside the closed set.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown category `{0}`")]
pub struct UnknownCategory(pub String);

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DraftError {
    #[error("a report needs at least one category")]
    EmptyCategories,
    #[error("coordinates out of range: lat {lat}, lon {lon}")]
    BadCoordinates { lat: f64, lon: f64 },
    #[error("text is {chars} characters, limit is 2000")]
    TextTooLong { chars: usize },
    #[error("attachment metadata is malformed")]
    BadAttachment,
    #[error("client key must be 1 to 64 characters")]
    BadClientKey,
}

impl DraftError {
    pub fn code(&self) -> &'static str {
        match self {
            DraftError::EmptyCategories => "EmptyCategories",
            DraftError::BadCoordinates { .. } => "BadCoordinates",
            DraftError::TextTooLong { .. } => "TextTooLong",
            DraftError::BadAttachment => "BadAttachment",
            DraftError::BadClientKey => "BadClientKey",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum TrustError {
    #[error("authors cannot rate their own report")]
    SelfRating,
    #[error("report has been rejected")]
    ReportRejected,
    #[error("unknown report")]
    UnknownReport,
    #[error("report is not pending")]
    NotPending,
    #[error("admin role required")]
    NotAdmin,
    #[error("report is already confirmed by an admin")]
    AlreadyConfirmed,
}

impl TrustError {
    pub fn code(&self) -> &'static str {
        match self {
            TrustError::SelfRating => "SelfRating",
            TrustError::ReportRejected => "ReportRejected",
            TrustError::UnknownReport => "UnknownReport",
            TrustError::NotPending => "NotPending",
            TrustError::NotAdmin => "NotAdmin",
            TrustError::AlreadyConfirmed => "AlreadyConfirmed",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeoError {
    #[error("cell size must be a positive finite number of degrees, got {0}")]
    BadCellSize(f64),
    #[error("bounding box is malformed")]
    BadBBox,
    #[error("period start must precede its end")]
    BadPeriod,
}

impl GeoError {
    pub fn code(&self) -> &'static str {
        match self {
            GeoError::BadCellSize(_) => "BadCellSize",
            GeoError::BadBBox => "BadBBox",
            GeoError::BadPeriod => "BadPeriod",
        }
    }
}

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("storage failure: {0}")]
    Storage(#[from] std::io::Error),
    #[error("corrupt log at seq {seq}: {reason}")]
    CorruptLog { seq: u64, reason: String },
    #[error("failed to encode event: {0}")]
    Encode(#[from] serde_json::Error),
}

impl StoreError {
    pub fn code(&self) -> &'static str {
        match self {
            StoreError::Storage(_) | StoreError::Encode(_) => "StorageFailure",
            StoreError::CorruptLog { .. } => "CorruptLog",
        }
    }

    pub(crate) fn corrupt(seq: u64, reason: impl Into<String>) -> Self {
        StoreError::CorruptLog {
            seq,
            reason: reason.into(),
        }
    }
}
