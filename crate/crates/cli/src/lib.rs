//! Scriptable reporter client. Submits reports, rates them, browses the
//! feed, map and statistics, and keeps an offline queue that is synced
//! later with idempotent batch uploads.

pub mod client;
pub mod render;
pub mod settings;
pub mod spool;

use std::path::PathBuf;

use base64::Engine;
use chrono::Utc;
use civicsense_core::store::blobs::content_hash;
use civicsense_core::wire::{SubmitRequest, SyncOutcome, MAX_SYNC_BATCH};
use civicsense_core::{
    parse_category, validate_draft, AttachmentKind, AttachmentMeta, BBox, GeoPoint, LocationSource, ReportDraft,
    ReportId, Verdict, Vote,
};
use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::client::ApiClient;
use crate::settings::Settings;
use crate::spool::{EntryState, Spool};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Rejected locally before any request was made.
    #[error("{code}: {message}")]
    Invalid { code: String, message: String },
    /// Error returned by the server.
    #[error("{code}: {message}")]
    Api { code: String, message: String },
    #[error("network unavailable: {0}")]
    Network(String),
    #[error("{0}")]
    Local(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Network(_) => 2,
            _ => 1,
        }
    }

    fn invalid(code: &str, message: impl Into<String>) -> Self {
        CliError::Invalid {
            code: code.into(),
            message: message.into(),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Local(e.to_string())
    }
}

#[derive(Debug, Parser)]
#[command(name = "civicsense", version, about = "Report and browse pollution incidents")]
pub struct Cli {
    /// Server base URL (default: from config, else http://127.0.0.1:8080).
    #[arg(long, global = true, env = "CIVICSENSE_SERVER")]
    pub server: Option<String>,
    /// Client config file holding the server URL and session token. The
    /// offline queue lives in a `spool` directory next to it.
    #[arg(long, global = true, env = "CIVICSENSE_CONFIG")]
    pub config: Option<PathBuf>,
    /// Print machine-readable JSON instead of text.
    #[arg(long, global = true)]
    pub json: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Create an account.
    Register {
        name: String,
        #[arg(long, env = "CIVICSENSE_CREDENTIAL", hide_env_values = true)]
        credential: String,
    },
    /// Log in and cache the session token.
    Login {
        name: String,
        #[arg(long, env = "CIVICSENSE_CREDENTIAL", hide_env_values = true)]
        credential: String,
    },
    /// Forget the cached session.
    Logout,
    /// Submit a report, or queue it when offline.
    #[command(allow_negative_numbers = true)]
    Report(ReportArgs),
    /// Support or dispute someone else's report.
    Rate { id: u64, vote: VoteArg },
    /// Confirm or reject a report (admins only).
    Verdict { id: u64, verdict: VerdictArg },
    /// Recent reports, newest first.
    Feed {
        #[arg(long, default_value_t = 1)]
        page: u32,
        #[arg(long, default_value_t = 20)]
        page_size: u32,
    },
    /// Pollution map of validated reports as a grid of cell totals.
    #[command(allow_negative_numbers = true)]
    Map {
        /// min_lat,min_lon,max_lat,max_lon
        #[arg(long, allow_hyphen_values = true)]
        bbox: String,
        /// Cell edge in degrees (server default when omitted).
        #[arg(long)]
        cell_size: Option<f64>,
        #[arg(long)]
        category: Option<String>,
    },
    /// Category shares of validated reports.
    Stats,
    /// Upload queued reports.
    Sync {
        /// Entries per request, 1 to 100.
        #[arg(long, default_value_t = 100, value_parser = clap::value_parser!(u16).range(1..=100))]
        chunk_size: u16,
    },
    /// Show the offline queue.
    Queue,
}

#[derive(Debug, clap::Args)]
pub struct ReportArgs {
    /// Comma-separated categories: garbage, air, water, noise, light, visual, other.
    pub categories: String,
    pub lat: f64,
    pub lon: f64,
    #[arg(default_value = "")]
    pub text: String,
    /// Photo or video file to attach.
    #[arg(long)]
    pub attachment: Option<PathBuf>,
    /// Attachment kind; guessed from the file extension when omitted.
    #[arg(long)]
    pub kind: Option<KindArg>,
    #[arg(long, value_enum, default_value_t = SourceArg::Gps)]
    pub source: SourceArg,
    /// Submit without attaching your identity.
    #[arg(long)]
    pub anonymous: bool,
    /// Queue locally instead of sending now.
    #[arg(long)]
    pub offline: bool,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum VoteArg {
    Support,
    Dispute,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum VerdictArg {
    Confirm,
    Reject,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum KindArg {
    Photo,
    Video,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum SourceArg {
    Gps,
    Network,
    Manual,
}

struct Context {
    config_path: PathBuf,
    settings: Settings,
    server: String,
    json: bool,
}

impl Context {
    fn client(&self) -> Result<ApiClient, CliError> {
        ApiClient::new(&self.server, self.settings.token.clone())
    }

    fn spool(&self) -> Spool {
        let dir = self
            .config_path
            .parent()
            .map(|p| p.join("spool"))
            .unwrap_or_else(|| PathBuf::from("spool"));
        Spool::new(dir)
    }

    fn out<T: Serialize>(&self, value: &T, text: impl FnOnce(&T) -> String) -> Result<String, CliError> {
        if self.json {
            serde_json::to_string_pretty(value)
                .map(|s| s + "\n")
                .map_err(|e| CliError::Local(e.to_string()))
        } else {
            Ok(text(value))
        }
    }
}

/// Runs one command and returns what it prints on success.
pub fn run(cli: Cli) -> Result<String, CliError> {
    let config_path = cli.config.clone().unwrap_or_else(settings::default_path);
    let settings = Settings::load(&config_path)?;
    let server = cli
        .server
        .clone()
        .or_else(|| settings.server.clone())
        .unwrap_or_else(|| settings::DEFAULT_SERVER.to_string());
    let mut ctx = Context {
        config_path,
        settings,
        server,
        json: cli.json,
    };

    match cli.command {
        Command::Register { name, credential } => {
            let profile = ctx.client()?.register(&name, &credential)?;
            ctx.out(&profile, |p| format!("registered {} as {}\n", p.display_name, p.user_id.0))
        }
        Command::Login { name, credential } => {
            let session = ctx.client()?.login(&name, &credential)?;
            ctx.settings.server = Some(ctx.server.clone());
            ctx.settings.name = Some(name.clone());
            ctx.settings.user_id = Some(session.user_id.0.clone());
            ctx.settings.token = Some(session.token.clone());
            ctx.settings.save(&ctx.config_path)?;
            ctx.out(&session, |s| format!("logged in as {name}, session valid until {}\n", s.expiry))
        }
        Command::Logout => {
            ctx.settings.token = None;
            ctx.settings.save(&ctx.config_path)?;
            Ok("logged out\n".into())
        }
        Command::Report(args) => report(&ctx, args),
        Command::Rate { id, vote } => {
            let vote = match vote {
                VoteArg::Support => Vote::Support,
                VoteArg::Dispute => Vote::Dispute,
            };
            let s = ctx.client()?.rate(ReportId(id), vote)?;
            ctx.out(&s, render::trust)
        }
        Command::Verdict { id, verdict } => {
            let verdict = match verdict {
                VerdictArg::Confirm => Verdict::Confirm,
                VerdictArg::Reject => Verdict::Reject,
            };
            let s = ctx.client()?.verdict(ReportId(id), verdict)?;
            ctx.out(&s, render::trust)
        }
        Command::Feed { page, page_size } => {
            let page = ctx.client()?.feed(page, page_size)?;
            ctx.out(&page, render::feed)
        }
        Command::Map {
            bbox,
            cell_size,
            category,
        } => {
            let bbox = parse_bbox(&bbox)?;
            if let Some(list) = &category {
                for c in list.split(',') {
                    parse_category(c.trim()).map_err(|e| CliError::invalid("UnknownCategory", e.to_string()))?;
                }
            }
            let cells = ctx.client()?.map(&bbox, cell_size, category.as_deref())?;
            ctx.out(&cells, |c| render::map(c))
        }
        Command::Stats => {
            let stats = ctx.client()?.stats()?;
            ctx.out(&stats, render::stats)
        }
        Command::Sync { chunk_size } => sync(&ctx, usize::from(chunk_size)),
        Command::Queue => {
            let entries = ctx.spool().entries()?;
            let plain: Vec<_> = entries.iter().map(|s| &s.entry).collect();
            ctx.out(&plain, |_| render::queue(&entries))
        }
    }
}

fn parse_bbox(raw: &str) -> Result<BBox, CliError> {
    let parts: Vec<f64> = raw
        .split(',')
        .map(|p| p.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|_| CliError::invalid("BadBBox", "expected min_lat,min_lon,max_lat,max_lon"))?;
    let [min_lat, min_lon, max_lat, max_lon] = parts[..] else {
        return Err(CliError::invalid("BadBBox", "expected four comma-separated numbers"));
    };
    BBox::new(min_lat, min_lon, max_lat, max_lon).map_err(|e| CliError::invalid(e.code(), e.to_string()))
}

/// Builds and checks the request locally; nothing is sent.
pub fn build_request(args: &ReportArgs, client_key: String) -> Result<SubmitRequest, CliError> {
    let categories = args
        .categories
        .split(',')
        .filter(|c| !c.trim().is_empty())
        .map(|c| parse_category(c.trim()))
        .collect::<Result<_, _>>()
        .map_err(|e| CliError::invalid("UnknownCategory", e.to_string()))?;
    let source = match args.source {
        SourceArg::Gps => LocationSource::Gps,
        SourceArg::Network => LocationSource::Network,
        SourceArg::Manual => LocationSource::Manual,
    };
    let (attachment, attachment_data) = match &args.attachment {
        Some(path) => {
            let bytes = std::fs::read(path)
                .map_err(|e| CliError::invalid("BadAttachment", format!("{}: {e}", path.display())))?;
            let kind = match args.kind {
                Some(KindArg::Photo) => AttachmentKind::Photo,
                Some(KindArg::Video) => AttachmentKind::Video,
                None => guess_kind(path),
            };
            let meta = AttachmentMeta {
                kind,
                content_hash: content_hash(&bytes),
                size_bytes: bytes.len() as u64,
                media_ref: String::new(),
            };
            (Some(meta), Some(base64::engine::general_purpose::STANDARD.encode(&bytes)))
        }
        None => (None, None),
    };
    let draft = ReportDraft {
        categories,
        location: GeoPoint::new(args.lat, args.lon, source),
        text: args.text.clone(),
        attachment,
        anonymous: args.anonymous,
        client_key,
        client_time: Utc::now(),
    };
    let draft = validate_draft(draft).map_err(|e| CliError::invalid(e.code(), e.to_string()))?;
    Ok(SubmitRequest {
        draft,
        attachment_data,
    })
}

fn guess_kind(path: &std::path::Path) -> AttachmentKind {
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .map(str::to_ascii_lowercase)
        .unwrap_or_default();
    match ext.as_str() {
        "mp4" | "mov" | "avi" | "mkv" | "webm" | "3gp" => AttachmentKind::Video,
        _ => AttachmentKind::Photo,
    }
}

#[derive(Serialize)]
#[serde(tag = "result", rename_all = "lowercase")]
enum ReportOutcome {
    Created { report: civicsense_core::PublicReport },
    Duplicate { report: civicsense_core::PublicReport },
    Queued { client_key: String, position: usize },
}

fn report(ctx: &Context, args: ReportArgs) -> Result<String, CliError> {
    let request = build_request(&args, spool::new_client_key())?;
    let queue = |request: SubmitRequest| -> Result<String, CliError> {
        let client_key = request.draft.client_key.clone();
        let position = ctx.spool().enqueue(request)?;
        let outcome = ReportOutcome::Queued { client_key, position };
        ctx.out(&outcome, |_| format!("queued offline (position {position})\n"))
    };
    if args.offline {
        return queue(request);
    }
    match ctx.client()?.submit(&request) {
        Ok(reply) => {
            let outcome = if reply.created {
                ReportOutcome::Created { report: reply.report }
            } else {
                ReportOutcome::Duplicate { report: reply.report }
            };
            ctx.out(&outcome, |o| match o {
                ReportOutcome::Created { report } => {
                    format!("created report {} ({})\n", report.report_id.0, render::status(&report.status))
                }
                ReportOutcome::Duplicate { report } => format!("report {} already submitted\n", report.report_id.0),
                ReportOutcome::Queued { .. } => unreachable!(),
            })
        }
        Err(CliError::Network(_)) => queue(request),
        Err(e) => Err(e),
    }
}

/// Codes after which an entry stays queued for a later attempt.
fn retryable(code: &str) -> bool {
    matches!(code, "Unauthorized" | "RateLimited" | "StorageFailure" | "Internal")
}

fn sync(ctx: &Context, chunk_size: usize) -> Result<String, CliError> {
    let spool = ctx.spool();
    let queued = spool.queued()?;
    if queued.is_empty() {
        return ctx.out(&Vec::<civicsense_core::wire::SyncEntryResult>::new(), |_| "nothing to sync\n".into());
    }
    let client = ctx.client()?;
    let mut all = Vec::with_capacity(queued.len());
    for chunk in queued.chunks(chunk_size.clamp(1, MAX_SYNC_BATCH)) {
        let requests: Vec<SubmitRequest> = chunk.iter().map(|s| s.entry.request.clone()).collect();
        let response = client.sync(&requests)?;
        if response.results.len() != chunk.len() {
            return Err(CliError::Local("server returned a result count that does not match the batch".into()));
        }
        for (spooled, result) in chunk.iter().zip(&response.results) {
            let state = match &result.outcome {
                SyncOutcome::Created { report_id } | SyncOutcome::Duplicate { report_id } => {
                    Some(EntryState::Synced { report_id: *report_id })
                }
                SyncOutcome::Error { code, .. } if retryable(code) => None,
                SyncOutcome::Error { code, message } => Some(EntryState::Failed {
                    code: code.clone(),
                    message: message.clone(),
                }),
            };
            if let Some(state) = state {
                spool.set_state(spooled, state)?;
            }
        }
        all.extend(response.results);
    }
    ctx.out(&all, |r| render::sync_results(r))
}

/// Parses `args`, runs the command and prints the result. Returns the
/// process exit code.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    let json = cli.json;
    match run(cli) {
        Ok(text) => {
            print!("{text}");
            0
        }
        Err(e) => {
            if json {
                let (code, message) = match &e {
                    CliError::Invalid { code, message } | CliError::Api { code, message } => {
                        (code.clone(), message.clone())
                    }
                    CliError::Network(m) => ("NetworkUnavailable".to_string(), m.clone()),
                    CliError::Local(m) => ("LocalError".to_string(), m.clone()),
                };
                eprintln!("{}", serde_json::json!({"error": {"code": code, "message": message}}));
            } else {
                eprintln!("error: {e}");
            }
            e.exit_code()
        }
    }
}
