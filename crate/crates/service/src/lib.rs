//! HTTP front end for running budget elections.
//!
//! Each election lives in its own directory under the data root. Ballots are
//! appended to a JSON-lines log and fsynced before they are acknowledged, and
//! the log is replayed on startup.

mod api;
mod error;
mod store;

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

pub use api::router;
pub use error::ServiceError;
pub use store::{CreateOptions, ElectionState, LogEntry, Meta, Receipt, Status, Store};

pub const DEFAULT_DATA_DIR: &str = "pb-data";
pub const DEFAULT_BIND_ADDR: &str = "127.0.0.1:8080";

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ServiceConfig {
    pub data_dir: PathBuf,
    pub bind_addr: String,
}

impl ServiceConfig {
    /// Reads `PB_DATA_DIR` and `PB_BIND_ADDR`, falling back to the defaults.
    pub fn from_env() -> Self {
        ServiceConfig {
            data_dir: std::env::var_os("PB_DATA_DIR")
                .map(PathBuf::from)
                .unwrap_or_else(|| PathBuf::from(DEFAULT_DATA_DIR)),
            bind_addr: std::env::var("PB_BIND_ADDR").unwrap_or_else(|_| DEFAULT_BIND_ADDR.into()),
        }
    }
}

/// Serves until interrupted. The bound address is printed to stderr as
/// `listening on http://ADDR` once the socket is ready.
pub async fn run(config: ServiceConfig) -> Result<(), ServiceError> {
    let store = Arc::new(Store::open(&config.data_dir)?);
    let listener = tokio::net::TcpListener::bind(&config.bind_addr).await?;
    let addr: SocketAddr = listener.local_addr()?;
    eprintln!("listening on http://{addr}");
    axum::serve(listener, router(store))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}
