//! Durable append-only event log, attachment blobs, and derived state.

pub mod blobs;
pub mod event;
pub mod log;
pub mod state;

pub use blobs::BlobStore;
pub use event::{Event, EventPayload, UserRecord};
pub use log::{EventLog, FileStorage, LogStorage, MemoryStorage};
pub use state::{Applied, ApplyError, DerivedState, KeyScope, Prepared, Visibility};
