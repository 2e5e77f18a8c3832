//! HTTP session API over the composition engine.
//!
//! Each session pins the knowledge base snapshot that was current when it
//! was created. KB mutations go through a single writer, are saved to the
//! backing file and only affect sessions created afterwards.

mod error;
mod routes;
mod session;

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::{Arc, RwLock};
use std::time::Duration;

use axum::extract::{Request, State};
use axum::http::{header, StatusCode};
use axum::middleware::{self, Next};
use axum::response::{IntoResponse, Response};
use axum::Router;
use senscomp_core::kb::{add_description, resolve_entity, save_kb, EntityDoc, KbError};
use senscomp_core::{ComposeLimits, KnowledgeBase};
use tower_http::services::ServeDir;

pub use error::ApiError;
pub use session::{ServerSession, SessionStore};

pub const DEFAULT_SESSION_TTL: Duration = Duration::from_secs(3600);

#[derive(Debug, Clone)]
pub struct Config {
    /// Where accepted KB mutations are saved. `None` keeps them in memory.
    pub kb_path: Option<PathBuf>,
    pub session_ttl: Duration,
    pub limits: ComposeLimits,
    /// Shared bearer token required on API routes when set.
    pub token: Option<String>,
    /// Built web UI bundle, served for any other path.
    pub static_dir: Option<PathBuf>,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            kb_path: None,
            session_ttl: DEFAULT_SESSION_TTL,
            limits: ComposeLimits::default(),
            token: None,
            static_dir: None,
        }
    }
}

pub struct AppState {
    pub config: Config,
    kb: RwLock<Arc<KnowledgeBase>>,
    writer: tokio::sync::Mutex<()>,
    pub sessions: SessionStore,
}

impl AppState {
    pub fn new(config: Config, kb: KnowledgeBase) -> Arc<Self> {
        Arc::new(Self {
            sessions: SessionStore::new(config.session_ttl),
            config,
            kb: RwLock::new(Arc::new(kb)),
            writer: tokio::sync::Mutex::new(()),
        })
    }

    /// The current snapshot.
    pub fn kb(&self) -> Arc<KnowledgeBase> {
        self.kb.read().expect("kb lock").clone()
    }

    /// Adds one description, saves the file and publishes the new snapshot.
    pub async fn ingest(&self, doc: &EntityDoc) -> Result<Arc<KnowledgeBase>, KbError> {
        let _writer = self.writer.lock().await;
        let current = self.kb();
        let entity = resolve_entity(&current, doc)?;
        let next = Arc::new(add_description(&current, entity)?);
        if let Some(path) = &self.config.kb_path {
            save_kb(&next, path)?;
        }
        *self.kb.write().expect("kb lock") = next.clone();
        Ok(next)
    }
}

async fn require_token(State(state): State<Arc<AppState>>, req: Request, next: Next) -> Response {
    let Some(token) = &state.config.token else {
        return next.run(req).await;
    };
    let ok = req
        .headers()
        .get(header::AUTHORIZATION)
        .and_then(|v| v.to_str().ok())
        .and_then(|v| v.strip_prefix("Bearer "))
        .is_some_and(|v| v == token);
    if ok {
        next.run(req).await
    } else {
        ApiError::new(StatusCode::UNAUTHORIZED, "unauthorized", "missing or wrong API token").into_response()
    }
}

pub fn router(state: Arc<AppState>) -> Router {
    let api = routes::api()
        .route_layer(middleware::from_fn_with_state(state.clone(), require_token))
        .with_state(state.clone());
    match &state.config.static_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api,
    }
}

/// Serves until ctrl-c.
pub async fn serve(state: Arc<AppState>, addr: SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    tracing::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
