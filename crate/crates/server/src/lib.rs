//! HTTP/JSON exploration service over the subgroup discovery engine.
//!
//! Sessions hold one loaded dataset each. Discovery results are cached per
//! session so re-ranking, rule editing and the map never repeat the search.

pub mod api;
pub mod error;
pub mod session;

use std::net::SocketAddr;
use std::sync::Arc;

use axum::routing::{get, post};
use axum::Router;
use tower_http::services::ServeDir;

pub use error::{ApiError, ApiResult};
pub use session::{AppState, DatasetSource, Pool, ServerConfig, Snapshot, SubgroupView};

pub fn router(state: Arc<AppState>) -> Router {
    let static_dir = state.config.static_dir.clone();
    let app = Router::new()
        .route(
            "/sessions",
            post(api::create_session).get(api::list_sessions),
        )
        .route(
            "/sessions/{id}",
            get(api::session_info).delete(api::delete_session),
        )
        .route("/sessions/{id}/discover", post(api::discover))
        .route("/sessions/{id}/jobs/{job}", get(api::job_status))
        .route("/sessions/{id}/results", get(api::results))
        .route("/sessions/{id}/rerank", post(api::rerank))
        .route("/sessions/{id}/rules/evaluate", post(api::evaluate))
        .route("/sessions/{id}/rules/edit", post(api::edit))
        .route("/sessions/{id}/map", get(api::map_get).post(api::map_post))
        .route("/sessions/{id}/map/search", post(api::map_search))
        .route(
            "/sessions/{id}/map/distinguishing",
            post(api::map_distinguishing),
        )
        .route(
            "/sessions/{id}/favorites",
            get(api::get_favorites).put(api::put_favorites),
        )
        .with_state(state);
    match static_dir {
        Some(dir) => app.fallback_service(ServeDir::new(dir)),
        None => app,
    }
}

/// Restores persisted sessions, then serves until Ctrl-C.
pub async fn serve(addr: SocketAddr, config: ServerConfig) -> std::io::Result<()> {
    let state = Arc::new(AppState::new(config));
    let restore = state.clone();
    let restored = tokio::task::spawn_blocking(move || restore.restore())
        .await
        .map_err(std::io::Error::other)?;
    if !restored.is_empty() {
        log::info!("restored {} session(s)", restored.len());
    }
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
