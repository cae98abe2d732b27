//! Local HTTP service for clinician review sessions.
//!
//! A session holds one uploaded recording, the rule config it is analysed
//! under and the latest report. Threshold patches are audited field by
//! field and re-run detection before they return; clinician verdicts on
//! events are recorded alongside but never feed back into detection.
//!
//! There is no authentication. The service is meant to bind to localhost
//! or sit behind a deployment's own access control, and the data
//! directory holds patient audio, so storage protection is likewise left
//! to the deployment.

pub mod error;
pub mod http;
pub mod model;
pub mod session;
pub mod store;
pub mod waveform;

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use dysfluency_core::RuleConfig;

pub use error::{Result, ServiceError};
pub use http::router;
pub use model::{replay_audit, AuditEntry, FeedbackEntry, ReportView, SessionView, Verdict};
pub use session::{SessionManager, DEFAULT_MAX_UPLOAD_BYTES};

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    pub data_dir: PathBuf,
    pub addr: SocketAddr,
    pub max_upload_bytes: usize,
    pub default_config: RuleConfig,
}

/// Load sessions from `data_dir` and serve until the process is stopped.
pub async fn serve(cfg: ServiceConfig) -> std::io::Result<()> {
    let manager = SessionManager::open(&cfg.data_dir, cfg.max_upload_bytes)
        .and_then(|m| m.with_default_config(cfg.default_config))
        .map_err(std::io::Error::other)?;
    let listener = tokio::net::TcpListener::bind(cfg.addr).await?;
    log::info!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, router(Arc::new(manager))).await
}
