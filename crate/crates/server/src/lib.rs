//! HTTP+JSON service for pollution reports: accounts, submissions, ratings,
//! feed, map, statistics, offline sync, a live event stream and moderation.

pub mod auth;
pub mod config;
pub mod error;
pub mod http;
pub mod ratelimit;
pub mod service;

use std::net::SocketAddr;
use std::sync::Arc;

pub use config::Config;
pub use error::ApiError;
pub use service::{Caller, Service, ServiceConfig, Submitted};

/// Opens the store, creates bootstrap admins and serves until `shutdown`
/// resolves.
pub async fn serve(
    config: Config,
    listener: tokio::net::TcpListener,
    shutdown: impl std::future::Future<Output = ()> + Send + 'static,
) -> anyhow::Result<()> {
    let service = Arc::new(Service::open(&config.data_dir, ServiceConfig::from(&config))?);
    for admin in &config.bootstrap_admins {
        service.ensure_admin(&admin.name, &admin.credential)?;
    }
    serve_service(service, listener, shutdown).await
}

pub async fn serve_service(
    service: Arc<Service>,
    listener: tokio::net::TcpListener,
    shutdown: impl std::future::Future<Output = ()> + Send + 'static,
) -> anyhow::Result<()> {
    let app = http::router(service).into_make_service_with_connect_info::<SocketAddr>();
    axum::serve(listener, app).with_graceful_shutdown(shutdown).await?;
    Ok(())
}
