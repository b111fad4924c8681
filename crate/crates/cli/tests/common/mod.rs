//! An in-process API server on a random loopback port.

#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::sync::Arc;

use civicsense_cli::{run, Cli};
use civicsense_server::{Service, ServiceConfig};
use clap::Parser;

pub struct TestServer {
    pub url: String,
    pub service: Arc<Service>,
    runtime: tokio::runtime::Runtime,
}

pub fn fast_config() -> ServiceConfig {
    ServiceConfig {
        credential_iterations: 1,
        ..ServiceConfig::default()
    }
}

impl TestServer {
    pub fn in_memory(config: ServiceConfig) -> Self {
        Self::with_service(Service::in_memory(config))
    }

    pub fn on_disk(dir: &Path, config: ServiceConfig) -> Self {
        Self::with_service(Service::open(dir, config).unwrap())
    }

    pub fn with_service(service: Service) -> Self {
        let service = Arc::new(service);
        service.ensure_admin("ops", "adminpass1").unwrap();
        let runtime = tokio::runtime::Builder::new_multi_thread()
            .worker_threads(2)
            .enable_all()
            .build()
            .unwrap();
        let listener = runtime
            .block_on(tokio::net::TcpListener::bind("127.0.0.1:0"))
            .unwrap();
        let url = format!("http://{}", listener.local_addr().unwrap());
        runtime.spawn(civicsense_server::serve_service(
            service.clone(),
            listener,
            std::future::pending(),
        ));
        TestServer {
            url,
            service,
            runtime,
        }
    }
}

/// A CLI user: its own config file and spool directory.
pub struct Client {
    pub config: PathBuf,
    pub server: String,
}

impl Client {
    pub fn new(dir: &Path, name: &str, server: &str) -> Self {
        Client {
            config: dir.join(name).join("config.toml"),
            server: server.to_string(),
        }
    }

    pub fn args(&self, rest: &[&str]) -> Vec<String> {
        let mut v = vec![
            "civicsense".to_string(),
            "--server".into(),
            self.server.clone(),
            "--config".into(),
            self.config.display().to_string(),
        ];
        v.extend(rest.iter().map(|s| s.to_string()));
        v
    }

    /// Runs a command in-process.
    pub fn run(&self, rest: &[&str]) -> Result<String, civicsense_cli::CliError> {
        run(Cli::try_parse_from(self.args(rest)).expect("valid arguments"))
    }

    pub fn ok(&self, rest: &[&str]) -> String {
        self.run(rest)
            .unwrap_or_else(|e| panic!("{rest:?} failed: {e}"))
    }

    pub fn signup(&self, name: &str) {
        self.ok(&["register", name, "--credential", "password123"]);
        self.ok(&["login", name, "--credential", "password123"]);
    }

    pub fn spool_dir(&self) -> PathBuf {
        self.config.parent().unwrap().join("spool")
    }
}
