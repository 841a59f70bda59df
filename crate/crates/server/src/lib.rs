//! HTTP session service for live scribble refinement.
//!
//! Clients open a session on a catalogue sample, submit strokes, and ask for
//! predictions; each prediction is one refinement round whose correction is
//! the set of strokes submitted since the previous one.

mod error;
mod routes;
mod session;
mod state;

pub use error::{ApiError, ApiResult};
pub use routes::{api_description, router};
pub use session::{replay_log, strokes_to_scribble, LoggedRound, Prediction, Session, Stroke, StrokeLog};
pub use state::{AppState, Catalog};

use std::net::SocketAddr;
use std::time::Duration;

/// Serves the API on `addr` until the process ends, purging idle sessions
/// in the background.
pub async fn serve(state: AppState, addr: SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    let sweeper = state.clone();
    let every = sweeper.ttl().clamp(Duration::from_secs(1), Duration::from_secs(60));
    tokio::spawn(async move {
        let mut tick = tokio::time::interval(every);
        loop {
            tick.tick().await;
            sweeper.purge_expired();
        }
    });
    axum::serve(listener, router(state)).await
}
