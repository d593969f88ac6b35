//! HTTP API for elicitation sessions and the stateless compute operations.
//!
//! Each session issues a facilitator token and one token per expert at
//! creation; requests carry them as `Authorization: Bearer <token>`. Live
//! updates are pushed over server-sent events, filtered by role so that an
//! expert never receives another expert's judgements before the reveal.

mod error;
mod jobs;
mod routes;
mod state;

use std::future::Future;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use axum::Router;
use tokio::net::TcpListener;
use tokio::sync::oneshot;
use tokio::task::JoinHandle;
use tower_http::services::ServeDir;

pub use error::{status_for, ServiceError};
pub use jobs::{JobStatus, JobView};
pub use routes::SessionEnvelope;
pub use state::{AppState, Role, Tokens};

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    pub bind: SocketAddr,
    /// Directory holding one JSON file per session plus its token file.
    pub store: PathBuf,
    /// Built front-end assets, served for paths no route matches.
    pub static_dir: Option<PathBuf>,
}

/// Router over an already opened state, for embedding and tests.
pub fn app(state: Arc<AppState>, static_dir: Option<PathBuf>) -> Router {
    let router = routes::router(state);
    match static_dir {
        Some(dir) => router.fallback_service(ServeDir::new(dir)),
        None => router,
    }
}

pub struct RunningService {
    pub addr: SocketAddr,
    shutdown: Option<oneshot::Sender<()>>,
    handle: JoinHandle<Result<(), ServiceError>>,
}

impl RunningService {
    /// Stop accepting connections, finish in-flight requests and flush sessions.
    pub async fn shutdown(mut self) -> Result<(), ServiceError> {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        self.handle.await.map_err(|e| ServiceError::Startup(format!("service task failed: {e}")))?
    }
}

/// Bind and start serving in the background.
pub async fn start(config: ServiceConfig) -> Result<RunningService, ServiceError> {
    let state = Arc::new(AppState::open(&config.store)?);
    let listener = TcpListener::bind(config.bind)
        .await
        .map_err(|e| ServiceError::Startup(format!("cannot bind {}: {e}", config.bind)))?;
    let addr = listener.local_addr().map_err(|e| ServiceError::Startup(e.to_string()))?;
    let (tx, rx) = oneshot::channel::<()>();
    let router = app(state.clone(), config.static_dir);
    let handle = tokio::spawn(async move {
        axum::serve(listener, router)
            .with_graceful_shutdown(async {
                let _ = rx.await;
            })
            .await
            .map_err(|e| ServiceError::Startup(e.to_string()))?;
        state.flush().await?;
        Ok(())
    });
    Ok(RunningService { addr, shutdown: Some(tx), handle })
}

/// Serve until `signal` resolves.
pub async fn serve(config: ServiceConfig, signal: impl Future<Output = ()>) -> Result<(), ServiceError> {
    let running = start(config).await?;
    signal.await;
    running.shutdown().await
}
