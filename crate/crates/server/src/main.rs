use std::path::PathBuf;

use anyhow::Context;
use civicsense_server::Config;
use clap::Parser;
use tracing_subscriber::EnvFilter;

/// Pollution reporting API server.
#[derive(Parser)]
#[command(version)]
struct Args {
    /// TOML config file. CIVICSENSE_* environment variables override it.
    #[arg(long, env = "CIVICSENSE_CONFIG")]
    config: Option<PathBuf>,
}

#[tokio::main]
async fn main() -> anyhow::Result<()> {
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new("info")))
        .init();
    let args = Args::parse();
    let config = Config::load(args.config.as_deref())?;
    let listener = tokio::net::TcpListener::bind(config.listen)
        .await
        .with_context(|| format!("binding {}", config.listen))?;
    tracing::info!(addr = %listener.local_addr()?, data_dir = %config.data_dir.display(), "listening");
    civicsense_server::serve(config, listener, async {
        let _ = tokio::signal::ctrl_c().await;
    })
    .await
}
