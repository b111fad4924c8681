//! Blocking HTTP client for the /api/v1 endpoints.

use std::time::Duration;

use civicsense_core::wire::{
    Credentials, ErrorBody, FeedPage, LoginResponse, RateRequest, RegisterResponse, StatsResponse,
    SubmitRequest, SyncRequest, SyncResponse, TrustSummary, VerdictRequest,
};
use civicsense_core::{BBox, MapCell, PublicReport, ReportId, Verdict, Vote};
use reqwest::blocking::{Client, RequestBuilder};
use serde::de::DeserializeOwned;

use crate::CliError;

pub struct ApiClient {
    base: String,
    token: Option<String>,
    http: Client,
}

/// Response of a single submission.
pub struct SubmitReply {
    pub report: PublicReport,
    pub created: bool,
}

impl ApiClient {
    pub fn new(base: &str, token: Option<String>) -> Result<Self, CliError> {
        let http = Client::builder()
            .timeout(Duration::from_secs(30))
            .connect_timeout(Duration::from_secs(5))
            .build()
            .map_err(|e| CliError::Local(e.to_string()))?;
        Ok(ApiClient {
            base: base.trim_end_matches('/').to_string(),
            token,
            http,
        })
    }

    fn url(&self, path: &str) -> String {
        format!("{}/api/v1{path}", self.base)
    }

    fn authed(&self, req: RequestBuilder) -> RequestBuilder {
        match &self.token {
            Some(t) => req.bearer_auth(t),
            None => req,
        }
    }

    fn send<T: DeserializeOwned>(&self, req: RequestBuilder) -> Result<(u16, T), CliError> {
        let resp = self.authed(req).send().map_err(network)?;
        let status = resp.status();
        let bytes = resp.bytes().map_err(network)?;
        if status.is_success() {
            let value = serde_json::from_slice(&bytes)
                .map_err(|e| CliError::Local(format!("unexpected response from server: {e}")))?;
            return Ok((status.as_u16(), value));
        }
        match serde_json::from_slice::<ErrorBody>(&bytes) {
            Ok(body) => Err(CliError::Api {
                code: body.error.code,
                message: body.error.message,
            }),
            Err(_) => Err(CliError::Api {
                code: format!("Http{}", status.as_u16()),
                message: String::from_utf8_lossy(&bytes).into_owned(),
            }),
        }
    }

    pub fn register(&self, name: &str, credential: &str) -> Result<RegisterResponse, CliError> {
        let body = Credentials {
            name: name.into(),
            credential: credential.into(),
        };
        Ok(self.send(self.http.post(self.url("/auth/register")).json(&body))?.1)
    }

    pub fn login(&self, name: &str, credential: &str) -> Result<LoginResponse, CliError> {
        let body = Credentials {
            name: name.into(),
            credential: credential.into(),
        };
        Ok(self.send(self.http.post(self.url("/auth/login")).json(&body))?.1)
    }

    pub fn submit(&self, request: &SubmitRequest) -> Result<SubmitReply, CliError> {
        let (status, report) = self.send(self.http.post(self.url("/reports")).json(request))?;
        Ok(SubmitReply {
            report,
            created: status == 201,
        })
    }

    pub fn rate(&self, id: ReportId, vote: Vote) -> Result<TrustSummary, CliError> {
        let req = self
            .http
            .post(self.url(&format!("/reports/{}/ratings", id.0)))
            .json(&RateRequest { vote });
        Ok(self.send(req)?.1)
    }

    pub fn verdict(&self, id: ReportId, verdict: Verdict) -> Result<TrustSummary, CliError> {
        let req = self
            .http
            .post(self.url(&format!("/admin/reports/{}/verdict", id.0)))
            .json(&VerdictRequest { verdict });
        Ok(self.send(req)?.1)
    }

    pub fn feed(&self, page: u32, page_size: u32) -> Result<FeedPage, CliError> {
        let req = self
            .http
            .get(self.url("/feed"))
            .query(&[("page", page), ("page_size", page_size)]);
        Ok(self.send(req)?.1)
    }

    pub fn map(&self, bbox: &BBox, cell_size: Option<f64>, category: Option<&str>) -> Result<Vec<MapCell>, CliError> {
        let mut query = vec![
            ("min_lat", bbox.min_lat.to_string()),
            ("min_lon", bbox.min_lon.to_string()),
            ("max_lat", bbox.max_lat.to_string()),
            ("max_lon", bbox.max_lon.to_string()),
        ];
        if let Some(c) = cell_size {
            query.push(("cell_size", c.to_string()));
        }
        if let Some(c) = category {
            query.push(("category", c.to_string()));
        }
        Ok(self.send(self.http.get(self.url("/map")).query(&query))?.1)
    }

    pub fn stats(&self) -> Result<StatsResponse, CliError> {
        Ok(self.send(self.http.get(self.url("/stats/categories")))?.1)
    }

    pub fn sync(&self, entries: &[SubmitRequest]) -> Result<SyncResponse, CliError> {
        let body = SyncRequest {
            entries: entries
                .iter()
                .map(serde_json::to_value)
                .collect::<Result<_, _>>()
                .map_err(|e| CliError::Local(e.to_string()))?,
        };
        Ok(self.send(self.http.post(self.url("/sync")).json(&body))?.1)
    }
}

fn network(e: reqwest::Error) -> CliError {
    CliError::Network(e.to_string())
}
