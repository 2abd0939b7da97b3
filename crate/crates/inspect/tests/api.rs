use std::path::{Path, PathBuf};

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use repodedup_core::config::PipelineConfig;
use repodedup_core::dedup_output::LeaderStrategy;
use repodedup_core::graph::{DedupGraph, DenoiseParams};
use repodedup_core::ingest::ProjectNames;
use repodedup_core::pipeline::{run, RunOptions};
use repodedup_core::ScoreTable64;
use repodedup_inspect::{router, AppState, RunSnapshot, Session};
use serde_json::{json, Value};
use tower::ServiceExt;

fn fixture_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures/inspect")
}

/// Runs the pipeline on the dumbbell/diamond corpus into `dir/work`.
fn finished_run(dir: &Path) -> PathBuf {
    let mut cfg = PipelineConfig::load(&fixture_dir().join("pipeline.conf")).unwrap();
    cfg.work_dir = dir.join("work");
    run(&cfg, RunOptions::default()).unwrap();
    cfg.work_dir
}

fn app(work: &Path, session: &Path) -> Router {
    let snap = RunSnapshot::load(work).unwrap();
    router(AppState::new(snap, Session::open(session).unwrap()))
}

async fn call(app: &Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Vec<u8>) {
    let req = Request::builder().method(method).uri(uri);
    let req = match body {
        Some(v) => req
            .header("content-type", "application/json")
            .body(Body::from(v.to_string())),
        None => req.body(Body::empty()),
    }
    .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp
        .into_body()
        .collect()
        .await
        .unwrap()
        .to_bytes()
        .to_vec();
    (status, bytes)
}

async fn json(app: &Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let (s, b) = call(app, method, uri, body).await;
    (s, serde_json::from_slice(&b).unwrap_or(Value::Null))
}

async fn component_of(app: &Router, leader: &str) -> u64 {
    let (_, rows) = json(app, "GET", "/clusters", None).await;
    rows.as_array()
        .unwrap()
        .iter()
        .find(|r| r["leader"] == leader)
        .unwrap()["id"]
        .as_u64()
        .unwrap()
}

#[tokio::test]
async fn clusters_sorted_filtered_and_limited() {
    let tmp = tempfile::tempdir().unwrap();
    let work = finished_run(tmp.path());
    let app = app(&work, &tmp.path().join("s.txt"));

    let (status, rows) = json(&app, "GET", "/clusters", None).await;
    assert_eq!(status, StatusCode::OK);
    let sizes: Vec<u64> = rows
        .as_array()
        .unwrap()
        .iter()
        .map(|r| r["size"].as_u64().unwrap())
        .collect();
    assert_eq!(sizes, vec![24, 15]);
    assert_eq!(rows[1]["leader"], "hub/bridge");

    let (_, rows) = json(&app, "GET", "/clusters?min_size=20", None).await;
    assert_eq!(rows.as_array().unwrap().len(), 1);
    let (_, rows) = json(&app, "GET", "/clusters?limit=1", None).await;
    assert_eq!(rows.as_array().unwrap().len(), 1);
    assert_eq!(rows[0]["size"], 24);
}

#[tokio::test]
async fn cluster_detail_ranks_members() {
    let tmp = tempfile::tempdir().unwrap();
    let work = finished_run(tmp.path());
    let app = app(&work, &tmp.path().join("s.txt"));
    let id = component_of(&app, "hub/bridge").await;
    let (status, detail) = json(&app, "GET", &format!("/clusters/{id}"), None).await;
    assert_eq!(status, StatusCode::OK);
    let members = detail["members"].as_array().unwrap();
    assert_eq!(members.len(), 15);
    assert_eq!(members[0]["name"], "hub/bridge");
    let scores: Vec<f64> = members
        .iter()
        .map(|m| m["score"].as_f64().unwrap())
        .collect();
    assert!(scores.windows(2).all(|w| w[0] >= w[1]));
    let (status, _) = json(&app, "GET", "/clusters/99", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn path_queries() {
    let tmp = tempfile::tempdir().unwrap();
    let work = finished_run(tmp.path());
    let app = app(&work, &tmp.path().join("s.txt"));

    let (status, p) = json(&app, "GET", "/path?from=dia/a&to=dia/d", None).await;
    assert_eq!(status, StatusCode::OK);
    let names: Vec<&str> = p["nodes"]
        .as_array()
        .unwrap()
        .iter()
        .map(|n| n["name"].as_str().unwrap())
        .collect();
    assert_eq!(names, vec!["dia/a", "dia/c", "dia/d"]);
    assert_eq!(p["hops"], 2);
    assert_eq!(p["edges"][0]["provenance"], "shared_commit");

    let (status, p) = json(&app, "GET", "/path?from=left/l0&to=hub/bridge", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(p["hops"], 1);

    let (status, _) = json(&app, "GET", "/path?from=left/l0&to=dia/a", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    let (status, body) = json(&app, "GET", "/path?from=nobody/here&to=dia/a", None).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert!(body["error"].as_str().unwrap().contains("nobody/here"));
}

#[tokio::test]
async fn staging_bridge_splits_dumbbell() {
    let tmp = tempfile::tempdir().unwrap();
    let work = finished_run(tmp.path());
    let app = app(&work, &tmp.path().join("s.txt"));
    let id = component_of(&app, "hub/bridge").await;

    let (_, identity) = json(&app, "POST", "/whatif", Some(json!({"component_id": id}))).await;
    assert_eq!(
        identity["resulting_components"].as_array().unwrap().len(),
        1
    );
    assert_eq!(identity["resulting_components"][0]["size"], 15);
    assert_eq!(identity["scope"], "induced_subgraph");

    let (status, staged) = json(
        &app,
        "POST",
        "/blacklist",
        Some(json!({"kind": "name", "value": "hub/bridge"})),
    )
    .await;
    assert_eq!(status, StatusCode::CREATED);
    assert_eq!(staged["id"].as_str().unwrap().len(), 12);

    let (status, r) = json(&app, "POST", "/whatif", Some(json!({"component_id": id}))).await;
    assert_eq!(status, StatusCode::OK);
    let parts = r["resulting_components"].as_array().unwrap();
    assert_eq!(parts.len(), 2);
    assert!(parts.iter().all(|c| c["size"] == 7));
    assert_eq!(r["removed_nodes"], json!(["hub/bridge"]));

    // The run on disk is untouched.
    let (_, rows) = json(&app, "GET", "/clusters", None).await;
    assert_eq!(rows.as_array().unwrap().len(), 2);
}

#[tokio::test]
async fn staging_a_leaf_keeps_component_count() {
    let tmp = tempfile::tempdir().unwrap();
    let work = finished_run(tmp.path());
    let app = app(&work, &tmp.path().join("s.txt"));
    let id = component_of(&app, "dia/a").await;
    json(
        &app,
        "POST",
        "/blacklist",
        Some(json!({"kind": "name", "value": "leaf200/a"})),
    )
    .await;
    let (_, r) = json(&app, "POST", "/whatif", Some(json!({"component_id": id}))).await;
    let parts = r["resulting_components"].as_array().unwrap();
    assert_eq!(parts.len(), 1);
    assert_eq!(parts[0]["size"], 23);
    let (status, _) = json(&app, "POST", "/whatif", Some(json!({"component_id": 42}))).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn staged_rules_survive_restart_and_unstage() {
    let tmp = tempfile::tempdir().unwrap();
    let work = finished_run(tmp.path());
    let session = tmp.path().join("s.txt");
    let first = app(&work, &session);
    let (_, staged) = json(
        &first,
        "POST",
        "/blacklist",
        Some(json!({"kind": "owner", "value": "left"})),
    )
    .await;
    drop(first);

    let second = app(&work, &session);
    let (_, list) = json(&second, "GET", "/blacklist", None).await;
    assert_eq!(list.as_array().unwrap().len(), 1);
    assert_eq!(list[0]["value"], "left");

    let (status, _) = json(&second, "DELETE", "/blacklist/ffffffffffff", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    let uri = format!("/blacklist/{}", staged["id"].as_str().unwrap());
    let (status, _) = json(&second, "DELETE", &uri, None).await;
    assert_eq!(status, StatusCode::OK);
    let (_, list) = json(&second, "GET", "/blacklist", None).await;
    assert!(list.as_array().unwrap().is_empty());
}

#[tokio::test]
async fn invalid_rules_are_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let work = finished_run(tmp.path());
    let app = app(&work, &tmp.path().join("s.txt"));
    for body in [
        json!({"kind": "regex", "value": ".*"}),
        json!({"kind": "owner", "value": "a/b"}),
        json!({"kind": "name", "value": ""}),
    ] {
        let (status, _) = json(&app, "POST", "/blacklist", Some(body)).await;
        assert_eq!(status, StatusCode::BAD_REQUEST);
    }
}

#[tokio::test]
async fn export_merges_base_and_staged() {
    let tmp = tempfile::tempdir().unwrap();
    let work = finished_run(tmp.path());
    let app = app(&work, &tmp.path().join("s.txt"));
    let base = std::fs::read_to_string(fixture_dir().join("blacklist.txt")).unwrap();

    let (status, text) = call(&app, "GET", "/export/blacklist", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(String::from_utf8(text).unwrap(), base);

    json(
        &app,
        "POST",
        "/blacklist",
        Some(json!({"kind": "suffix", "value": "github.io"})),
    )
    .await;
    let (_, text) = call(&app, "GET", "/export/blacklist", None).await;
    let text = String::from_utf8(text).unwrap();
    assert_eq!(text, format!("{base}suffix github.io\n"));
    let (rules, rejects) = repodedup_core::blacklist::BlacklistRuleSet::parse(&text);
    assert!(rejects.is_empty());
    assert_eq!(rules.len(), 1);
}

#[tokio::test]
async fn empty_run_lists_nothing() {
    let tmp = tempfile::tempdir().unwrap();
    let snap = RunSnapshot::from_parts(
        ProjectNames::new(),
        ScoreTable64::new(),
        DedupGraph::empty(),
        DenoiseParams::default(),
        LeaderStrategy::Mean,
        String::new(),
    );
    let app = router(AppState::new(
        snap,
        Session::open(tmp.path().join("s.txt")).unwrap(),
    ));
    let (status, rows) = json(&app, "GET", "/clusters", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(rows, json!([]));
}

#[tokio::test]
async fn whatif_sizes_account_for_every_member() {
    let tmp = tempfile::tempdir().unwrap();
    let work = finished_run(tmp.path());
    let app = app(&work, &tmp.path().join("s.txt"));
    let rules = [
        ("owner", "left"),
        ("name", "dia/c"),
        ("suffix", "/a"),
        ("name", "right/r3"),
    ];
    for (kind, value) in rules {
        json(
            &app,
            "POST",
            "/blacklist",
            Some(json!({"kind": kind, "value": value})),
        )
        .await;
        for id in [0, 1] {
            let (_, r) = json(&app, "POST", "/whatif", Some(json!({"component_id": id}))).await;
            let total: u64 = r["resulting_components"]
                .as_array()
                .unwrap()
                .iter()
                .map(|c| c["size"].as_u64().unwrap())
                .sum();
            let removed = r["removed_nodes"].as_array().unwrap().len() as u64;
            assert_eq!(total + removed, r["original_size"].as_u64().unwrap(), "{r}");
            assert_eq!(
                removed,
                r["removed_by_rules"].as_u64().unwrap() + r["removed_by_denoise"].as_u64().unwrap()
            );
        }
    }
}
