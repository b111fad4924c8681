//! Core of a participatory pollution-reporting platform: the shared domain
//! model, report trust scoring, grid aggregation for the pollution map, and
//! the event log every score and view is derived from.

pub mod error;
pub mod fixture;
pub mod geo;
pub mod model;
pub mod store;
pub mod summary;
pub mod trust;
pub mod wire;

pub use error::{DraftError, GeoError, StoreError, TrustError, UnknownCategory};
pub use geo::{aggregate_map, category_distribution, cell_of, BBox, CategoryShare, CellIndex, MapCell};
pub use model::{
    parse_category, validate_draft, AttachmentKind, AttachmentMeta, Category, GeoPoint, LocationSource,
    Provenance, PublicReport, Redact, Report, ReportDraft, ReportId, ReporterProfile, ReporterRef, Role,
    UserId, ValidationStatus,
};
pub use summary::{build_summary, render_text, Detail, Period, SummaryDocument};
pub use trust::{Rating, TrustState, Verdict, Vote};
