//! JSON endpoints.

use std::sync::Arc;

use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::IntoResponse;
use axum::routing::{delete, get, post};
use axum::{Json, Router};
use repodedup_core::blacklist::{Rule, RuleKind};
use repodedup_core::graph::shortest_path;
use repodedup_core::ProjectId;
use serde::{Deserialize, Serialize};
use tokio::sync::RwLock;

use crate::session::{Session, StagedRule};
use crate::whatif::{what_if, WhatIfResult};
use crate::{InspectError, RunSnapshot};

type ApiResult<T> = Result<T, InspectError>;

/// Shared service state: an immutable run plus the single-writer session.
#[derive(Clone)]
pub struct AppState {
    pub snapshot: Arc<RunSnapshot>,
    pub session: Arc<RwLock<Session>>,
}

impl AppState {
    pub fn new(snapshot: RunSnapshot, session: Session) -> Self {
        AppState {
            snapshot: Arc::new(snapshot),
            session: Arc::new(RwLock::new(session)),
        }
    }
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/clusters", get(list_clusters))
        .route("/clusters/{id}", get(cluster_detail))
        .route("/path", get(path))
        .route("/blacklist", post(stage_rule).get(list_rules))
        .route("/blacklist/{id}", delete(unstage_rule))
        .route("/whatif", post(whatif))
        .route("/export/blacklist", get(export_blacklist))
        .with_state(state)
}

#[derive(Debug, Serialize, Deserialize, PartialEq)]
pub struct ClusterRow {
    pub id: u32,
    pub size: u64,
    pub leader: String,
    pub leader_score: f64,
}

#[derive(Debug, Deserialize)]
pub struct ClusterQuery {
    pub min_size: Option<u64>,
    pub limit: Option<usize>,
}

async fn list_clusters(
    State(st): State<AppState>,
    Query(q): Query<ClusterQuery>,
) -> Json<Vec<ClusterRow>> {
    let snap = &st.snapshot;
    let mut rows: Vec<&_> = snap
        .summaries
        .iter()
        .filter(|s| s.size >= q.min_size.unwrap_or(1))
        .collect();
    rows.sort_by(|a, b| {
        b.size
            .cmp(&a.size)
            .then(a.component_id.cmp(&b.component_id))
    });
    let rows = rows
        .into_iter()
        .take(q.limit.unwrap_or(usize::MAX))
        .map(|s| ClusterRow {
            id: s.component_id,
            size: s.size,
            leader: snap.name(s.leader),
            leader_score: s.leader_score,
        })
        .collect();
    Json(rows)
}

#[derive(Debug, Serialize, Deserialize, PartialEq)]
pub struct Member {
    pub name: String,
    pub score: f64,
}

#[derive(Debug, Serialize, Deserialize, PartialEq)]
pub struct ClusterDetail {
    pub id: u32,
    pub size: u64,
    pub leader: String,
    pub leader_score: f64,
    /// Ranked by the run's leader strategy, best first.
    pub members: Vec<Member>,
}

async fn cluster_detail(
    State(st): State<AppState>,
    Path(id): Path<u32>,
) -> ApiResult<Json<ClusterDetail>> {
    let snap = &st.snapshot;
    let members = snap.members(id).ok_or(InspectError::UnknownComponent(id))?;
    let s = &snap.summaries[id as usize];
    let mut ranked: Vec<ProjectId> = members.to_vec();
    ranked.sort_by_key(|&p| std::cmp::Reverse(snap.strategy.key(&snap.scores, p)));
    Ok(Json(ClusterDetail {
        id,
        size: s.size,
        leader: snap.name(s.leader),
        leader_score: s.leader_score,
        members: ranked
            .into_iter()
            .map(|p| Member {
                name: snap.name(p),
                score: snap.score(p),
            })
            .collect(),
    }))
}

#[derive(Debug, Deserialize)]
pub struct PathQuery {
    pub from: String,
    pub to: String,
}

#[derive(Debug, Serialize, Deserialize, PartialEq)]
pub struct PathEdge {
    pub from: String,
    pub to: String,
    pub provenance: String,
}

#[derive(Debug, Serialize, Deserialize, PartialEq)]
pub struct PathResponse {
    pub hops: usize,
    pub nodes: Vec<Member>,
    pub edges: Vec<PathEdge>,
}

async fn path(
    State(st): State<AppState>,
    Query(q): Query<PathQuery>,
) -> ApiResult<Json<PathResponse>> {
    let snap = &st.snapshot;
    let lookup = |n: &str| {
        snap.names
            .id(n)
            .ok_or_else(|| InspectError::UnknownProject(n.to_owned()))
    };
    let (a, b) = (lookup(&q.from)?, lookup(&q.to)?);
    let no_path = || InspectError::NoPath {
        from: q.from.clone(),
        to: q.to.clone(),
    };
    // Projects outside the denoised graph are connected to nothing.
    if !snap.graph.contains(a) || !snap.graph.contains(b) {
        return Err(no_path());
    }
    let p = shortest_path(&snap.graph, a, b)?.ok_or_else(no_path)?;
    let edges = p
        .nodes
        .windows(2)
        .zip(&p.provenance)
        .map(|(w, prov)| PathEdge {
            from: snap.name(w[0]),
            to: snap.name(w[1]),
            provenance: prov.to_string(),
        })
        .collect();
    Ok(Json(PathResponse {
        hops: p.hops(),
        nodes: p
            .nodes
            .iter()
            .map(|&id| Member {
                name: snap.name(id),
                score: snap.score(id),
            })
            .collect(),
        edges,
    }))
}

#[derive(Debug, Deserialize)]
pub struct RuleBody {
    pub kind: String,
    pub value: String,
}

async fn stage_rule(
    State(st): State<AppState>,
    Json(body): Json<RuleBody>,
) -> ApiResult<(StatusCode, Json<StagedRule>)> {
    let kind: RuleKind = body.kind.parse().map_err(InspectError::InvalidRule)?;
    let rule = Rule::new(kind, body.value).map_err(InspectError::InvalidRule)?;
    let staged = st.session.write().await.stage(rule)?;
    Ok((StatusCode::CREATED, Json(staged)))
}

async fn list_rules(State(st): State<AppState>) -> Json<Vec<StagedRule>> {
    Json(st.session.read().await.staged())
}

async fn unstage_rule(
    State(st): State<AppState>,
    Path(id): Path<String>,
) -> ApiResult<Json<StagedRule>> {
    Ok(Json(st.session.write().await.unstage(&id)?))
}

#[derive(Debug, Deserialize)]
pub struct WhatIfBody {
    pub component_id: u32,
}

async fn whatif(
    State(st): State<AppState>,
    Json(body): Json<WhatIfBody>,
) -> ApiResult<Json<WhatIfResult>> {
    let rules = st.session.read().await.rule_set();
    let snap = Arc::clone(&st.snapshot);
    let result = tokio::task::spawn_blocking(move || what_if(&snap, body.component_id, &rules))
        .await
        .map_err(|e| InspectError::BadRequest(format!("what-if task failed: {e}")))??;
    Ok(Json(result))
}

async fn export_blacklist(State(st): State<AppState>) -> impl IntoResponse {
    let text = st.session.read().await.export(&st.snapshot.base_blacklist);
    ([(header::CONTENT_TYPE, "text/plain; charset=utf-8")], text)
}
