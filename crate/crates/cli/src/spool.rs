//! Offline queue: one JSON file per entry in a spool directory.
//!
//! File names start with the enqueue time in nanoseconds, so a directory
//! listing sorted by name is the queue order. Every write goes to a
//! temporary file first and is renamed into place.

use std::io::Write;
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use civicsense_core::wire::SubmitRequest;
use civicsense_core::ReportId;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "state", rename_all = "lowercase")]
pub enum EntryState {
    Queued,
    Synced { report_id: ReportId },
    Failed { code: String, message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueueEntry {
    /// Fixed at enqueue time and reused on every retry.
    pub client_key: String,
    pub request: SubmitRequest,
    pub queued_at: DateTime<Utc>,
    pub state: EntryState,
}

/// A queue entry together with its file.
#[derive(Debug, Clone)]
pub struct Spooled {
    pub path: PathBuf,
    pub entry: QueueEntry,
}

pub struct Spool {
    dir: PathBuf,
}

/// 128-bit random idempotency key, hex encoded.
pub fn new_client_key() -> String {
    let bytes: [u8; 16] = rand::random();
    hex::encode(bytes)
}

impl Spool {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Spool { dir: dir.into() }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    /// Adds an entry and returns its 1-based position among queued entries.
    pub fn enqueue(&self, request: SubmitRequest) -> std::io::Result<usize> {
        let queued_at = Utc::now();
        let entry = QueueEntry {
            client_key: request.draft.client_key.clone(),
            request,
            queued_at,
            state: EntryState::Queued,
        };
        let nanos = queued_at.timestamp_nanos_opt().unwrap_or_default();
        let path = self.dir.join(format!("{nanos:020}-{}.json", entry.client_key));
        write_atomic(&path, &serde_json::to_vec_pretty(&entry)?)?;
        Ok(self.queued()?.len())
    }

    /// All entries in queue order. Stray temporary files are ignored.
    pub fn entries(&self) -> std::io::Result<Vec<Spooled>> {
        let read = match std::fs::read_dir(&self.dir) {
            Ok(r) => r,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
            Err(e) => return Err(e),
        };
        let mut paths: Vec<PathBuf> = read
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "json"))
            .collect();
        paths.sort();
        paths
            .into_iter()
            .map(|path| {
                let bytes = std::fs::read(&path)?;
                let entry = serde_json::from_slice(&bytes).map_err(|e| {
                    std::io::Error::new(
                        std::io::ErrorKind::InvalidData,
                        format!("{}: {e}", path.display()),
                    )
                })?;
                Ok(Spooled { path, entry })
            })
            .collect()
    }

    pub fn queued(&self) -> std::io::Result<Vec<Spooled>> {
        Ok(self
            .entries()?
            .into_iter()
            .filter(|s| s.entry.state == EntryState::Queued)
            .collect())
    }

    pub fn set_state(&self, spooled: &Spooled, state: EntryState) -> std::io::Result<()> {
        let mut entry = spooled.entry.clone();
        entry.state = state;
        write_atomic(&spooled.path, &serde_json::to_vec_pretty(&entry)?)
    }
}

fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let dir = path.parent().expect("spool paths have a parent");
    std::fs::create_dir_all(dir)?;
    let tmp = path.with_extension("tmp");
    let mut file = std::fs::File::create(&tmp)?;
    file.write_all(bytes)?;
    file.sync_all()?;
    std::fs::rename(&tmp, path)?;
    // Make the rename itself durable.
    std::fs::File::open(dir)?.sync_all()
}
