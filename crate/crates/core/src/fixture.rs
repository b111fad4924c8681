//! The bundled Dhaka study fixture: 53 reports from three neighbourhoods.

use chrono::{DateTime, Utc};
use serde::Deserialize;

use crate::model::{Category, GeoPoint, LocationSource, ReportDraft};

const STUDY_JSON: &str = include_str!("../fixtures/study_dhaka.json");

#[derive(Debug, Clone, Deserialize)]
pub struct StudyEntry {
    pub client_key: String,
    pub neighborhood: String,
    pub categories: Vec<Category>,
    pub lat: f64,
    pub lon: f64,
    pub source: LocationSource,
    pub text: String,
    pub client_time: DateTime<Utc>,
}

impl StudyEntry {
    pub fn draft(&self, anonymous: bool) -> ReportDraft {
        ReportDraft {
            categories: self.categories.iter().copied().collect(),
            location: GeoPoint::new(self.lat, self.lon, self.source),
            text: self.text.clone(),
            attachment: None,
            anonymous,
            client_key: self.client_key.clone(),
            client_time: self.client_time,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
pub struct StudyFixture {
    pub description: String,
    pub reports: Vec<StudyEntry>,
}

impl StudyFixture {
    pub fn load() -> Self {
        serde_json::from_str(STUDY_JSON).expect("bundled fixture is valid JSON")
    }

    pub fn raw_json() -> &'static str {
        STUDY_JSON
    }
}
