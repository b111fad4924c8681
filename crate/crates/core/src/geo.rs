//! Fixed-grid binning of validated reports and category distributions.

use std::collections::{BTreeMap, BTreeSet};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::error::GeoError;
use crate::model::{Category, GeoPoint, Report};

/// Default grid cell edge, in degrees (about 550 m at Dhaka's latitude).
pub const DEFAULT_CELL_SIZE: f64 = 0.005;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct CellIndex {
    pub row: i64,
    pub col: i64,
}

pub fn check_cell_size(cell_size: f64) -> Result<(), GeoError> {
    if cell_size.is_finite() && cell_size > 0.0 {
        Ok(())
    } else {
        Err(GeoError::BadCellSize(cell_size))
    }
}

/// Floor-division grid index of a point.
pub fn cell_of(point: &GeoPoint, cell_size: f64) -> Result<CellIndex, GeoError> {
    check_cell_size(cell_size)?;
    Ok(CellIndex {
        row: (point.lat / cell_size).floor() as i64,
        col: (point.lon / cell_size).floor() as i64,
    })
}

/// A lat/lon rectangle, inclusive on every edge.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub min_lat: f64,
    pub min_lon: f64,
    pub max_lat: f64,
    pub max_lon: f64,
}

impl BBox {
    pub const WORLD: BBox = BBox {
        min_lat: -90.0,
        min_lon: -180.0,
        max_lat: 90.0,
        max_lon: 180.0,
    };

    pub fn new(min_lat: f64, min_lon: f64, max_lat: f64, max_lon: f64) -> Result<Self, GeoError> {
        let bbox = BBox {
            min_lat,
            min_lon,
            max_lat,
            max_lon,
        };
        bbox.check()?;
        Ok(bbox)
    }

    pub fn check(&self) -> Result<(), GeoError> {
        let lat_ok = |v: f64| (-90.0..=90.0).contains(&v);
        let lon_ok = |v: f64| (-180.0..=180.0).contains(&v);
        if lat_ok(self.min_lat)
            && lat_ok(self.max_lat)
            && lon_ok(self.min_lon)
            && lon_ok(self.max_lon)
            && self.min_lat <= self.max_lat
            && self.min_lon <= self.max_lon
        {
            Ok(())
        } else {
            Err(GeoError::BadBBox)
        }
    }

    pub fn contains(&self, p: &GeoPoint) -> bool {
        (self.min_lat..=self.max_lat).contains(&p.lat) && (self.min_lon..=self.max_lon).contains(&p.lon)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapCell {
    pub row: i64,
    pub col: i64,
    pub cell_size: f64,
    /// Per-category counts; categories with no reports are omitted.
    pub counts: BTreeMap<Category, u64>,
    /// Number of reports in the cell. A report with several categories
    /// counts once here and once per category in `counts`.
    pub total: u64,
    pub latest_time: Option<DateTime<Utc>>,
}

impl MapCell {
    pub fn index(&self) -> CellIndex {
        CellIndex {
            row: self.row,
            col: self.col,
        }
    }

    fn empty(index: CellIndex, cell_size: f64) -> Self {
        MapCell {
            row: index.row,
            col: index.col,
            cell_size,
            counts: BTreeMap::new(),
            total: 0,
            latest_time: None,
        }
    }

    fn add(&mut self, report: &Report, categories: impl Iterator<Item = Category>) {
        for c in categories {
            *self.counts.entry(c).or_default() += 1;
        }
        self.total += 1;
        self.latest_time = self.latest_time.max(Some(report.server_time));
    }

    /// South-west corner of the cell.
    pub fn origin(&self) -> (f64, f64) {
        (self.row as f64 * self.cell_size, self.col as f64 * self.cell_size)
    }
}

/// Bins reports inside `bbox` into grid cells. Callers pass validated
/// reports only. With a category filter, only reports carrying one of the
/// filtered categories contribute, and only those categories are counted.
/// Cells come back ordered by (row, col); empty cells are never emitted.
pub fn aggregate_map<'a>(
    reports: impl IntoIterator<Item = &'a Report>,
    bbox: &BBox,
    cell_size: f64,
    category_filter: Option<&BTreeSet<Category>>,
) -> Result<Vec<MapCell>, GeoError> {
    bbox.check()?;
    check_cell_size(cell_size)?;

    let mut cells: BTreeMap<CellIndex, MapCell> = BTreeMap::new();
    for report in reports {
        if !bbox.contains(&report.location) {
            continue;
        }
        let wanted: Vec<Category> = match category_filter {
            Some(filter) => report.categories.intersection(filter).copied().collect(),
            None => report.categories.iter().copied().collect(),
        };
        if wanted.is_empty() {
            continue;
        }
        let index = cell_of(&report.location, cell_size)?;
        cells
            .entry(index)
            .or_insert_with(|| MapCell::empty(index, cell_size))
            .add(report, wanted.into_iter());
    }
    Ok(cells.into_values().collect())
}

/// The current state of one cell, including an empty cell with total 0.
/// Used for incremental map updates when a report enters or leaves the map.
pub fn cell_snapshot<'a>(
    reports: impl IntoIterator<Item = &'a Report>,
    index: CellIndex,
    cell_size: f64,
) -> Result<MapCell, GeoError> {
    check_cell_size(cell_size)?;
    let mut cell = MapCell::empty(index, cell_size);
    for report in reports {
        if cell_of(&report.location, cell_size)? == index {
            cell.add(report, report.categories.iter().copied());
        }
    }
    Ok(cell)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryShare {
    pub category: Category,
    /// Fractional report count: a report tagged with k categories adds 1/k
    /// to each of them.
    pub count: f64,
    pub fraction: f64,
}

/// Share of each category across the reports, largest first (ties broken
/// by category order). Categories with no reports are omitted.
pub fn category_distribution<'a>(reports: impl IntoIterator<Item = &'a Report>) -> Vec<CategoryShare> {
    let mut weights: BTreeMap<Category, f64> = BTreeMap::new();
    let mut n = 0usize;
    for report in reports {
        let k = report.categories.len();
        if k == 0 {
            continue;
        }
        n += 1;
        let w = 1.0 / k as f64;
        for c in &report.categories {
            *weights.entry(*c).or_default() += w;
        }
    }
    if n == 0 {
        return Vec::new();
    }
    let mut shares: Vec<CategoryShare> = weights
        .into_iter()
        .map(|(category, count)| CategoryShare {
            category,
            count,
            fraction: count / n as f64,
        })
        .collect();
    shares.sort_by(|a, b| b.count.total_cmp(&a.count).then(a.category.cmp(&b.category)));
    shares
}
