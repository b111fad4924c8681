//! Append-only event log.
//!
//! Each record is laid out as
//!
//! ```text
//! +----------------+---------------------------+----------------+
//! | len: u32 (BE)  | payload: len bytes (JSON) | crc32: u32 (BE)|
//! +----------------+---------------------------+----------------+
//! ```
//!
//! where the checksum is CRC-32 (IEEE) over the payload bytes only. A record
//! cut short at the end of the file is a torn write from a crash and is
//! discarded on open; any other damage is reported as corruption.

use std::fs::{File, OpenOptions};
use std::io::{self, Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};

use crate::error::StoreError;
use crate::store::event::{Event, EventPayload};

/// Records larger than this are treated as corruption rather than a torn tail.
pub const MAX_RECORD_LEN: u32 = 16 * 1024 * 1024;

const FRAME_OVERHEAD: usize = 8;

/// Byte sink behind an [`EventLog`].
pub trait LogStorage {
    fn read_all(&mut self) -> io::Result<Vec<u8>>;
    /// Appends bytes; must be durable when it returns.
    fn append(&mut self, bytes: &[u8]) -> io::Result<()>;
    fn truncate(&mut self, len: u64) -> io::Result<()>;
}

/// In-memory storage using the same byte format as files.
#[derive(Debug, Default, Clone)]
pub struct MemoryStorage {
    pub bytes: Vec<u8>,
}

impl LogStorage for MemoryStorage {
    fn read_all(&mut self) -> io::Result<Vec<u8>> {
        Ok(self.bytes.clone())
    }

    fn append(&mut self, bytes: &[u8]) -> io::Result<()> {
        self.bytes.extend_from_slice(bytes);
        Ok(())
    }

    fn truncate(&mut self, len: u64) -> io::Result<()> {
        self.bytes.truncate(len as usize);
        Ok(())
    }
}

#[derive(Debug)]
pub struct FileStorage {
    path: PathBuf,
    file: File,
}

impl FileStorage {
    pub fn open(path: impl AsRef<Path>) -> io::Result<Self> {
        let path = path.as_ref().to_path_buf();
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)?;
        }
        let file = OpenOptions::new()
            .read(true)
            .append(true)
            .create(true)
            .open(&path)?;
        Ok(FileStorage { path, file })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }
}

impl LogStorage for FileStorage {
    fn read_all(&mut self) -> io::Result<Vec<u8>> {
        let mut buf = Vec::new();
        self.file.seek(SeekFrom::Start(0))?;
        self.file.read_to_end(&mut buf)?;
        Ok(buf)
    }

    fn append(&mut self, bytes: &[u8]) -> io::Result<()> {
        let before = self.file.metadata()?.len();
        let written = self.file.write_all(bytes).and_then(|_| self.file.sync_data());
        if written.is_err() {
            // leave no partial record behind for later appends to follow
            let _ = self.file.set_len(before);
        }
        written
    }

    fn truncate(&mut self, len: u64) -> io::Result<()> {
        self.file.set_len(len)?;
        self.file.sync_all()
    }
}

pub fn encode_record(event: &Event) -> Result<Vec<u8>, StoreError> {
    let payload = serde_json::to_vec(event)?;
    let len = u32::try_from(payload.len())
        .ok()
        .filter(|l| *l <= MAX_RECORD_LEN)
        .ok_or_else(|| StoreError::corrupt(event.seq, "record too large"))?;
    let mut out = Vec::with_capacity(payload.len() + FRAME_OVERHEAD);
    out.extend_from_slice(&len.to_be_bytes());
    out.extend_from_slice(&payload);
    out.extend_from_slice(&crc32fast::hash(&payload).to_be_bytes());
    Ok(out)
}

/// Result of scanning a log image.
#[derive(Debug)]
pub struct Decoded {
    pub events: Vec<Event>,
    /// Length of the well-formed prefix.
    pub valid_len: usize,
    /// Whether trailing bytes past `valid_len` form an incomplete record.
    pub torn_tail: bool,
}

/// Decodes every record, checking checksums and that seq runs 1, 2, 3, ...
pub fn decode_records(bytes: &[u8]) -> Result<Decoded, StoreError> {
    let mut events = Vec::new();
    let mut offset = 0usize;
    loop {
        let expected_seq = events.len() as u64 + 1;
        let rest = &bytes[offset..];
        if rest.is_empty() {
            return Ok(Decoded {
                events,
                valid_len: offset,
                torn_tail: false,
            });
        }
        if rest.len() < 4 {
            break;
        }
        let len = u32::from_be_bytes(rest[..4].try_into().expect("4 bytes"));
        if len > MAX_RECORD_LEN {
            return Err(StoreError::corrupt(expected_seq, "record length out of range"));
        }
        let len = len as usize;
        if rest.len() < len + FRAME_OVERHEAD {
            break;
        }
        let payload = &rest[4..4 + len];
        let stored_crc = u32::from_be_bytes(rest[4 + len..len + FRAME_OVERHEAD].try_into().expect("4 bytes"));
        if crc32fast::hash(payload) != stored_crc {
            return Err(StoreError::corrupt(expected_seq, "checksum mismatch"));
        }
        let event: Event = serde_json::from_slice(payload)
            .map_err(|e| StoreError::corrupt(expected_seq, format!("undecodable payload: {e}")))?;
        if event.seq != expected_seq {
            return Err(StoreError::corrupt(
                expected_seq,
                format!("sequence break: found seq {}", event.seq),
            ));
        }
        events.push(event);
        offset += len + FRAME_OVERHEAD;
    }
    Ok(Decoded {
        events,
        valid_len: offset,
        torn_tail: true,
    })
}

/// Single-writer append-only log.
#[derive(Debug)]
pub struct EventLog<S: LogStorage> {
    storage: S,
    last_seq: u64,
}

impl<S: LogStorage> EventLog<S> {
    /// Opens the log, dropping a torn trailing record if present, and returns
    /// every committed event for replay.
    pub fn open(mut storage: S) -> Result<(Self, Vec<Event>), StoreError> {
        let bytes = storage.read_all()?;
        let decoded = decode_records(&bytes)?;
        if decoded.torn_tail {
            storage.truncate(decoded.valid_len as u64)?;
        }
        let last_seq = decoded.events.len() as u64;
        Ok((EventLog { storage, last_seq }, decoded.events))
    }

    pub fn last_seq(&self) -> u64 {
        self.last_seq
    }

    pub fn next_seq(&self) -> u64 {
        self.last_seq + 1
    }

    /// Builds the event that the next append would write, without writing it.
    pub fn stage(&self, server_time: DateTime<Utc>, payload: EventPayload) -> Event {
        Event {
            seq: self.next_seq(),
            server_time,
            payload,
        }
    }

    /// Durably appends a staged event. Its seq must be the next one.
    pub fn commit(&mut self, event: &Event) -> Result<(), StoreError> {
        if event.seq != self.next_seq() {
            return Err(StoreError::corrupt(
                self.next_seq(),
                format!("out-of-order append of seq {}", event.seq),
            ));
        }
        let record = encode_record(event)?;
        self.storage.append(&record)?;
        self.last_seq = event.seq;
        Ok(())
    }

    pub fn append(&mut self, server_time: DateTime<Utc>, payload: EventPayload) -> Result<Event, StoreError> {
        let event = self.stage(server_time, payload);
        self.commit(&event)?;
        Ok(event)
    }

    pub fn storage(&self) -> &S {
        &self.storage
    }

    pub fn into_storage(self) -> S {
        self.storage
    }
}

/// Reads a log file without modifying it.
pub fn read_log_file(path: impl AsRef<Path>) -> Result<Vec<Event>, StoreError> {
    let bytes = std::fs::read(path)?;
    Ok(decode_records(&bytes)?.events)
}

impl LogStorage for Box<dyn LogStorage + Send> {
    fn read_all(&mut self) -> io::Result<Vec<u8>> {
        (**self).read_all()
    }

    fn append(&mut self, bytes: &[u8]) -> io::Result<()> {
        (**self).append(bytes)
    }

    fn truncate(&mut self, len: u64) -> io::Result<()> {
        (**self).truncate(len)
    }
}
