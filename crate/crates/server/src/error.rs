use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use civicsense_core::store::ApplyError;
use civicsense_core::{DraftError, GeoError, StoreError, TrustError, UnknownCategory};
use serde::{Deserialize, Serialize};

/// An error as reported to API clients: a stable code plus a human message.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApiError {
    pub code: String,
    pub message: String,
}

#[derive(Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: ApiError,
}

impl ApiError {
    pub fn new(code: &str, message: impl Into<String>) -> Self {
        ApiError {
            code: code.to_string(),
            message: message.into(),
        }
    }

    pub fn unauthorized() -> Self {
        Self::new("Unauthorized", "missing, unknown or expired session token")
    }

    pub fn bad_request(message: impl Into<String>) -> Self {
        Self::new("BadRequest", message)
    }

    pub fn status(&self) -> StatusCode {
        match self.code.as_str() {
            "Unauthorized" | "BadCredentials" => StatusCode::UNAUTHORIZED,
            "NotAdmin" | "SelfRating" => StatusCode::FORBIDDEN,
            "UnknownReport" | "NotFound" => StatusCode::NOT_FOUND,
            "NameTaken" | "ReportRejected" | "NotPending" | "AlreadyConfirmed" => StatusCode::CONFLICT,
            "BatchTooLarge" => StatusCode::PAYLOAD_TOO_LARGE,
            "RateLimited" => StatusCode::TOO_MANY_REQUESTS,
            "StorageFailure" | "CorruptLog" | "Internal" => StatusCode::INTERNAL_SERVER_ERROR,
            _ => StatusCode::BAD_REQUEST,
        }
    }

    /// Classifies a body that failed to decode. Unknown category labels get
    /// their own code so clients can report them precisely.
    pub fn from_decode(message: String) -> Self {
        if message.contains("unknown category") {
            Self::new("UnknownCategory", message)
        } else {
            Self::bad_request(message)
        }
    }
}

impl std::fmt::Display for ApiError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.code, self.message)
    }
}

impl std::error::Error for ApiError {}

impl From<TrustError> for ApiError {
    fn from(e: TrustError) -> Self {
        Self::new(e.code(), e.to_string())
    }
}

impl From<DraftError> for ApiError {
    fn from(e: DraftError) -> Self {
        Self::new(e.code(), e.to_string())
    }
}

impl From<GeoError> for ApiError {
    fn from(e: GeoError) -> Self {
        Self::new(e.code(), e.to_string())
    }
}

impl From<UnknownCategory> for ApiError {
    fn from(e: UnknownCategory) -> Self {
        Self::new("UnknownCategory", e.to_string())
    }
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        tracing::error!(error = %e, "store failure");
        Self::new(e.code(), e.to_string())
    }
}

impl From<ApplyError> for ApiError {
    fn from(e: ApplyError) -> Self {
        match e {
            ApplyError::Trust(t) => t.into(),
            ApplyError::Draft(d) => d.into(),
            ApplyError::NameTaken => Self::new("NameTaken", e.to_string()),
            other => {
                tracing::error!(error = %other, "event rejected by derived state");
                Self::new("Internal", other.to_string())
            }
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status(), Json(ErrorBody { error: self })).into_response()
    }
}
