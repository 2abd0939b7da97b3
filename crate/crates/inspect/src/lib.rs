//! Read-mostly HTTP service over a finished deduplication run: browse
//! clusters, trace the path linking two projects, stage blacklist rules and
//! preview how a component would split under them.
//!
//! | method | path | body / query |
//! |---|---|---|
//! | GET | `/clusters` | `min_size`, `limit` |
//! | GET | `/clusters/{id}` | |
//! | GET | `/path` | `from`, `to` (project names) |
//! | POST | `/blacklist` | `{"kind": "name", "value": "owner/repo"}` |
//! | GET | `/blacklist` | |
//! | DELETE | `/blacklist/{rule-id}` | |
//! | POST | `/whatif` | `{"component_id": 0}` |
//! | GET | `/export/blacklist` | |
//!
//! Run artifacts are never written; staged rules live in a session file.

mod api;
mod error;
pub mod session;
mod snapshot;
pub mod whatif;

use std::net::SocketAddr;
use std::path::Path;

pub use api::{router, AppState, ClusterDetail, ClusterRow, Member, PathEdge, PathResponse};
pub use error::InspectError;
pub use session::{Session, StagedRule};
pub use snapshot::RunSnapshot;
pub use whatif::{what_if, ResultingComponent, WhatIfResult};

/// Default session file name inside the run's work directory.
pub const SESSION_FILE: &str = "staged_blacklist.txt";

/// Loads the run in `work_dir` and serves it on `addr` until the process ends.
pub async fn serve(
    work_dir: &Path,
    session_file: Option<&Path>,
    addr: SocketAddr,
) -> Result<(), InspectError> {
    let snapshot = RunSnapshot::load(work_dir)?;
    let session_path = session_file.map_or_else(|| work_dir.join(SESSION_FILE), Path::to_owned);
    let session = Session::open(session_path)?;
    let app = router(AppState::new(snapshot, session));
    let io = |source| InspectError::Io {
        path: addr.to_string().into(),
        source,
    };
    let listener = tokio::net::TcpListener::bind(addr).await.map_err(io)?;
    log::info!(
        "inspect API listening on http://{}",
        listener.local_addr().map_err(io)?
    );
    axum::serve(listener, app).await.map_err(io)
}
