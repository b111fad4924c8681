//! Plain-text rendering of API responses.

use std::collections::BTreeMap;
use std::fmt::Write;

use civicsense_core::wire::{FeedPage, StatsResponse, SyncEntryResult, SyncOutcome, TrustSummary};
use civicsense_core::{MapCell, Provenance, PublicReport, ValidationStatus};

use crate::spool::{EntryState, Spooled};

/// Grids wider or taller than this are printed as a cell list instead.
const MAX_GRID: i64 = 60;

pub fn status(s: &ValidationStatus) -> String {
    match s {
        ValidationStatus::Pending => "pending".into(),
        ValidationStatus::Validated(p) => format!("validated ({})", provenance(p)),
        ValidationStatus::Rejected(p) => format!("rejected ({})", provenance(p)),
    }
}

fn provenance(p: &Provenance) -> &'static str {
    match p {
        Provenance::Community => "community",
        Provenance::Admin => "admin",
    }
}

fn categories(r: &PublicReport) -> String {
    r.categories
        .iter()
        .map(|c| c.label())
        .collect::<Vec<_>>()
        .join(",")
}

pub fn report_line(r: &PublicReport) -> String {
    format!(
        "#{} {} [{}] {} at {:.5},{:.5} by {}: {}",
        r.report_id.0,
        r.server_time.format("%Y-%m-%d %H:%M"),
        categories(r),
        status(&r.status),
        r.location.lat,
        r.location.lon,
        r.author,
        r.text
    )
}

pub fn feed(page: &FeedPage) -> String {
    if page.reports.is_empty() {
        return "no reports\n".into();
    }
    let mut out = String::new();
    for r in &page.reports {
        let _ = writeln!(out, "{}", report_line(r));
    }
    let pages = page.total.div_ceil(u64::from(page.page_size)).max(1);
    let _ = writeln!(out, "page {} of {} ({} reports)", page.page, pages, page.total);
    out
}

pub fn trust(s: &TrustSummary) -> String {
    format!("report {}: score {:.3}, {}\n", s.report_id.0, s.score, status(&s.status))
}

pub fn stats(s: &StatsResponse) -> String {
    if s.distribution.is_empty() {
        return "no validated reports\n".into();
    }
    let mut out = format!("{:<10}{:>8}{:>10}\n", "CATEGORY", "SHARE", "REPORTS");
    for share in &s.distribution {
        let _ = writeln!(
            out,
            "{:<10}{:>7.1}%{:>10.2}",
            share.category.label(),
            share.fraction * 100.0,
            share.count
        );
    }
    let _ = writeln!(out, "{} validated reports", s.validated);
    out
}

/// Cell totals as a grid, north at the top. Each row is labelled with the
/// latitude of its southern edge; the header gives the western edge of the
/// first column.
pub fn map(cells: &[MapCell]) -> String {
    let Some(first) = cells.first() else {
        return "no validated reports in this area\n".into();
    };
    let size = first.cell_size;
    let (min_row, max_row) = cells.iter().fold((i64::MAX, i64::MIN), |(lo, hi), c| (lo.min(c.row), hi.max(c.row)));
    let (min_col, max_col) = cells.iter().fold((i64::MAX, i64::MIN), |(lo, hi), c| (lo.min(c.col), hi.max(c.col)));
    let mut out = String::new();
    if max_row - min_row >= MAX_GRID || max_col - min_col >= MAX_GRID {
        let _ = writeln!(out, "{:>10}{:>11}{:>7}", "LAT", "LON", "TOTAL");
        for c in cells {
            let (lat, lon) = c.origin();
            let _ = writeln!(out, "{lat:>10.4}{lon:>11.4}{:>7}", c.total);
        }
        return out;
    }
    let by_index: BTreeMap<(i64, i64), u64> = cells.iter().map(|c| ((c.row, c.col), c.total)).collect();
    let _ = writeln!(
        out,
        "cell size {size} deg, {} columns from lon {:.4}",
        max_col - min_col + 1,
        min_col as f64 * size
    );
    for row in (min_row..=max_row).rev() {
        let _ = write!(out, "{:>10.4} |", row as f64 * size);
        for col in min_col..=max_col {
            match by_index.get(&(row, col)) {
                Some(total) => {
                    let _ = write!(out, "{total:>4}");
                }
                None => out.push_str("   ."),
            }
        }
        out.push('\n');
    }
    out
}

pub fn sync_results(results: &[SyncEntryResult]) -> String {
    let mut out = String::new();
    let (mut created, mut duplicate, mut failed) = (0, 0, 0);
    for r in results {
        let key = r.client_key.as_deref().unwrap_or("?");
        match &r.outcome {
            SyncOutcome::Created { report_id } => {
                created += 1;
                let _ = writeln!(out, "{key}  created {}", report_id.0);
            }
            SyncOutcome::Duplicate { report_id } => {
                duplicate += 1;
                let _ = writeln!(out, "{key}  duplicate {}", report_id.0);
            }
            SyncOutcome::Error { code, message } => {
                failed += 1;
                let _ = writeln!(out, "{key}  error {code}: {message}");
            }
        }
    }
    let _ = writeln!(out, "{created} created, {duplicate} duplicate, {failed} failed");
    out
}

pub fn queue(entries: &[Spooled]) -> String {
    if entries.is_empty() {
        return "queue is empty\n".into();
    }
    let mut out = String::new();
    for (i, s) in entries.iter().enumerate() {
        let e = &s.entry;
        let state = match &e.state {
            EntryState::Queued => "queued".to_string(),
            EntryState::Synced { report_id } => format!("synced #{}", report_id.0),
            EntryState::Failed { code, .. } => format!("failed {code}"),
        };
        let cats: Vec<_> = e.request.draft.categories.iter().map(|c| c.label()).collect();
        let _ = writeln!(
            out,
            "{:>3}  {:<16}  {}  {}  {}",
            i + 1,
            state,
            e.client_key,
            e.queued_at.format("%Y-%m-%d %H:%M:%S"),
            cats.join(",")
        );
    }
    out
}
