//! Authority summary documents and their printable rendering.
//!
//! The plain-text layout is fixed-width so it can be printed or mailed as-is.
//! See the README for the column specification.

use std::fmt::Write as _;

use chrono::{DateTime, SecondsFormat, Utc};
use serde::{Deserialize, Serialize};

use crate::error::GeoError;
use crate::geo::{aggregate_map, category_distribution, BBox, MapCell};
use crate::model::{Category, DisplayNames, PublicReport, Redact, Report};

/// Number of busiest cells listed in a summary.
pub const TOP_CELLS: usize = 5;

/// Half-open time interval `[start, end)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Period {
    pub start: DateTime<Utc>,
    pub end: DateTime<Utc>,
}

impl Period {
    pub fn new(start: DateTime<Utc>, end: DateTime<Utc>) -> Result<Self, GeoError> {
        if start < end {
            Ok(Period { start, end })
        } else {
            Err(GeoError::BadPeriod)
        }
    }

    pub fn contains(&self, t: DateTime<Utc>) -> bool {
        self.start <= t && t < self.end
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Detail {
    Detailed,
    Summarized,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryTotal {
    pub category: Category,
    /// Reports tagged with this category.
    pub reports: u64,
    /// Fractional share (1/k attribution for multi-category reports).
    pub share: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryDocument {
    pub period: Period,
    pub detail: Detail,
    pub report_count: u64,
    /// Every category, busiest first.
    pub totals: Vec<CategoryTotal>,
    pub top_cells: Vec<MapCell>,
    /// Present only for [`Detail::Detailed`], oldest first.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reports: Option<Vec<PublicReport>>,
}

/// Summarises the validated reports whose server time falls in `period`.
pub fn build_summary<'a>(
    reports: impl IntoIterator<Item = &'a Report>,
    period: Period,
    detail: Detail,
    cell_size: f64,
    names: &dyn DisplayNames,
) -> Result<SummaryDocument, GeoError> {
    if period.start >= period.end {
        return Err(GeoError::BadPeriod);
    }
    let mut selected: Vec<&Report> = reports
        .into_iter()
        .filter(|r| r.status.is_validated() && period.contains(r.server_time))
        .collect();
    selected.sort_by_key(|r| (r.server_time, r.report_id));

    let shares = category_distribution(selected.iter().copied());
    let mut totals: Vec<CategoryTotal> = Category::ALL
        .into_iter()
        .map(|category| CategoryTotal {
            category,
            reports: selected.iter().filter(|r| r.categories.contains(&category)).count() as u64,
            share: shares
                .iter()
                .find(|s| s.category == category)
                .map_or(0.0, |s| s.fraction),
        })
        .collect();
    totals.sort_by(|a, b| {
        b.reports
            .cmp(&a.reports)
            .then(b.share.total_cmp(&a.share))
            .then(a.category.cmp(&b.category))
    });

    let mut top_cells = aggregate_map(selected.iter().copied(), &BBox::WORLD, cell_size, None)?;
    top_cells.sort_by(|a, b| b.total.cmp(&a.total).then(a.index().cmp(&b.index())));
    top_cells.truncate(TOP_CELLS);

    let reports = match detail {
        Detail::Detailed => Some(selected.iter().map(|r| r.redact(names)).collect()),
        Detail::Summarized => None,
    };

    Ok(SummaryDocument {
        period,
        detail,
        report_count: selected.len() as u64,
        totals,
        top_cells,
        reports,
    })
}

fn ts(t: DateTime<Utc>) -> String {
    t.to_rfc3339_opts(SecondsFormat::Secs, true)
}

fn clip(s: &str, width: usize) -> String {
    let flat: String = s.chars().map(|c| if c.is_control() { ' ' } else { c }).collect();
    if flat.chars().count() <= width {
        flat
    } else {
        let mut out: String = flat.chars().take(width.saturating_sub(1)).collect();
        out.push('~');
        out
    }
}

/// Fixed-column plain-text rendering of a summary.
pub fn render_text(doc: &SummaryDocument) -> String {
    let mut out = String::new();
    let detail = match doc.detail {
        Detail::Detailed => "detailed",
        Detail::Summarized => "summarized",
    };
    let _ = writeln!(out, "POLLUTION REPORT SUMMARY");
    let _ = writeln!(out, "period   {} .. {}", ts(doc.period.start), ts(doc.period.end));
    let _ = writeln!(out, "detail   {detail}");
    let _ = writeln!(out, "reports  {}", doc.report_count);
    let _ = writeln!(out);

    let _ = writeln!(out, "{:<10}{:>9}{:>9}", "CATEGORY", "REPORTS", "SHARE");
    for t in &doc.totals {
        let _ = writeln!(
            out,
            "{:<10}{:>9}{:>8.1}%",
            t.category.label(),
            t.reports,
            t.share * 100.0
        );
    }
    let _ = writeln!(out);

    let _ = writeln!(out, "TOP CELLS");
    let _ = writeln!(
        out,
        "{:>8}{:>9}{:>11}{:>12}{:>7}  {:<20}",
        "ROW", "COL", "LAT", "LON", "TOTAL", "LATEST"
    );
    for c in &doc.top_cells {
        let (lat, lon) = c.origin();
        let latest = c.latest_time.map(ts).unwrap_or_default();
        let _ = writeln!(
            out,
            "{:>8}{:>9}{:>11.4}{:>12.4}{:>7}  {:<20}",
            c.row, c.col, lat, lon, c.total, latest
        );
    }

    if let Some(reports) = &doc.reports {
        let _ = writeln!(out);
        let _ = writeln!(out, "REPORTS");
        let _ = writeln!(
            out,
            "{:>6}  {:<20}  {:>9}  {:>10}  {:<20}  {:<16}  TEXT",
            "ID", "TIME", "LAT", "LON", "CATEGORIES", "AUTHOR"
        );
        for r in reports {
            let cats: Vec<&str> = r.categories.iter().map(|c| c.label()).collect();
            let _ = writeln!(
                out,
                "{:>6}  {:<20}  {:>9.4}  {:>10.4}  {:<20}  {:<16}  {}",
                r.report_id.0,
                ts(r.server_time),
                r.location.lat,
                r.location.lon,
                clip(&cats.join(","), 20),
                clip(&r.author, 16),
                clip(&r.text, 60)
            );
        }
    }
    out
}
