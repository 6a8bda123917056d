use std::path::Path;
use std::sync::Arc;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use pbvote_service::{router, Store};
use serde_json::{json, Value};
use tower::ServiceExt;

fn open_app(dir: &Path) -> Router {
    router(Arc::new(Store::open(dir).unwrap()))
}

async fn call(app: &Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Vec<u8>) {
    let req = Request::builder().method(method).uri(uri);
    let req = match body {
        Some(b) => req
            .header("content-type", "application/json")
            .body(Body::from(b.to_string())),
        None => req.body(Body::empty()),
    }
    .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes().to_vec();
    (status, bytes)
}

async fn call_json(app: &Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let (s, b) = call(app, method, uri, body).await;
    (s, serde_json::from_slice(&b).unwrap_or(Value::Null))
}

fn three_voter_config() -> Value {
    json!({
        "projects": [
            {"id": "P1", "cost": 5},
            {"id": "P2", "cost": 5},
            {"id": "P3", "cost": 10}
        ],
        "budget": 10,
        "approval_limit": 2
    })
}

fn knapsack(voter: &str, alloc: Value) -> Value {
    json!({"voter_id": voter, "format": "knapsack", "allocation": alloc})
}

async fn open_election(app: &Router, config: Value) -> String {
    let (s, v) = call_json(app, "POST", "/elections", Some(config)).await;
    assert_eq!(s, StatusCode::CREATED, "{v}");
    let id = v["id"].as_str().unwrap().to_owned();
    let (s, _) = call_json(app, "POST", &format!("/elections/{id}/status"), Some(json!({"status": "open"}))).await;
    assert_eq!(s, StatusCode::OK);
    id
}

async fn submit_three_voter(app: &Router, id: &str) {
    for (voter, alloc) in [
        ("v1", json!({"P1": 4, "P2": 5, "P3": 1})),
        ("v2", json!({"P1": 3, "P2": 5, "P3": 2})),
        ("v3", json!({"P3": 10})),
    ] {
        let (s, v) = call_json(app, "POST", &format!("/elections/{id}/ballots"), Some(knapsack(voter, alloc))).await;
        assert_eq!(s, StatusCode::CREATED, "{v}");
    }
}

#[tokio::test]
async fn health_and_config_echo() {
    let dir = tempfile::tempdir().unwrap();
    let app = open_app(dir.path());
    let (s, v) = call_json(&app, "GET", "/healthz", None).await;
    assert_eq!((s, v), (StatusCode::OK, json!({"status": "ok"})));

    let (s, created) = call_json(&app, "POST", "/elections", Some(three_voter_config())).await;
    assert_eq!(s, StatusCode::CREATED);
    assert_eq!(created["status"], "draft");
    let id = created["id"].as_str().unwrap();
    let (s, got) = call_json(&app, "GET", &format!("/elections/{id}"), None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(got["config"]["budget"], 10);
    assert_eq!(got["config"]["projects"][2]["id"], "P3");
    assert_eq!(got["config"]["projects"][2]["cost"], 10);

    let (s, _) = call_json(&app, "GET", "/elections/nope", None).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn invalid_configs_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let app = open_app(dir.path());
    let mut over = three_voter_config();
    over["budget"] = json!(21);
    let (s, v) = call_json(&app, "POST", "/elections", Some(over)).await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(v["error"], "invalid-config");

    let dup = json!({"projects": [{"id": "a", "cost": 1}, {"id": "a", "cost": 2}], "budget": 1});
    let (s, v) = call_json(&app, "POST", "/elections", Some(dup)).await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
    assert!(v["message"].as_str().unwrap().contains("duplicate"));
}

#[tokio::test]
async fn ballot_validation_and_lifecycle() {
    let dir = tempfile::tempdir().unwrap();
    let app = open_app(dir.path());
    let (_, created) = call_json(&app, "POST", "/elections", Some(three_voter_config())).await;
    let id = created["id"].as_str().unwrap().to_owned();
    let ballots = format!("/elections/{id}/ballots");
    let full = knapsack("v1", json!({"P1": 5, "P2": 5}));

    let (s, _) = call_json(&app, "POST", &ballots, Some(full.clone())).await;
    assert_eq!(s, StatusCode::CONFLICT, "draft elections refuse ballots");
    let (s, _) = call_json(&app, "POST", "/elections/missing/ballots", Some(full.clone())).await;
    assert_eq!(s, StatusCode::NOT_FOUND);

    call_json(&app, "POST", &format!("/elections/{id}/status"), Some(json!({"status": "open"}))).await;
    let (s, r) = call_json(&app, "POST", &ballots, Some(full)).await;
    assert_eq!(s, StatusCode::CREATED);
    assert_eq!(r["seq"], 1);
    assert_eq!(r["replaced"], false);

    let (s, v) = call_json(&app, "POST", &ballots, Some(knapsack("v2", json!({"P1": 5, "P2": 4})))).await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(v["error"], "budget-not-fully-allocated");
    assert!(v["message"].as_str().unwrap().contains("budget not fully allocated"));

    let approve3 = json!({"voter_id": "v3", "format": "kapproval", "approvals": ["P1", "P2", "P3"]});
    let (s, v) = call_json(&app, "POST", &ballots, Some(approve3)).await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(v["error"], "too-many-approvals");

    let (s, v) = call_json(&app, "POST", &ballots, Some(json!({"voter_id": "x", "format": "bogus"}))).await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(v["error"], "malformed-ballot");

    let (s, _) = call_json(&app, "GET", &format!("/elections/{id}/results"), None).await;
    assert_eq!(s, StatusCode::CONFLICT, "results wait for close");

    // Resubmission replaces the earlier ballot of the same format.
    let (s, r) = call_json(&app, "POST", &ballots, Some(knapsack("v1", json!({"P3": 10})))).await;
    assert_eq!(s, StatusCode::CREATED);
    assert_eq!(r["replaced"], true);
    let (_, got) = call_json(&app, "GET", &format!("/elections/{id}"), None).await;
    assert_eq!((got["ballots"].as_u64(), got["submissions"].as_u64()), (Some(1), Some(2)));

    call_json(&app, "POST", &format!("/elections/{id}/status"), Some(json!({"status": "closed"}))).await;
    let (s, _) = call_json(&app, "POST", &ballots, Some(knapsack("v9", json!({"P3": 10})))).await;
    assert_eq!(s, StatusCode::CONFLICT);
    let (s, _) = call_json(&app, "POST", &format!("/elections/{id}/status"), Some(json!({"status": "open"}))).await;
    assert_eq!(s, StatusCode::CONFLICT, "closed elections stay closed");

    let (s, v) = call_json(&app, "GET", &format!("/elections/{id}/results"), None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v["outcome"]["allocation"], json!({"P1": 0, "P2": 0, "P3": 10}));
    let (s, _) = call_json(&app, "GET", &format!("/elections/{id}/results?method=nope"), None).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn three_voter_results_survive_restart_byte_for_byte() {
    let dir = tempfile::tempdir().unwrap();
    let first = open_app(dir.path());
    let id = open_election(&first, three_voter_config()).await;
    submit_three_voter(&first, &id).await;
    call_json(&first, "POST", &format!("/elections/{id}/status"), Some(json!({"status": "closed"}))).await;
    let uri = format!("/elections/{id}/results?method=knapsack");
    let (s, before) = call(&first, "GET", &uri, None).await;
    assert_eq!(s, StatusCode::OK);
    let v: Value = serde_json::from_slice(&before).unwrap();
    assert_eq!(v["outcome"]["allocation"], json!({"P1": 3, "P2": 5, "P3": 2}));
    assert_eq!(v["diagnostics"]["scores"][0]["scores"], json!([2, 2, 2, 1, 0]));
    drop(first);

    let second = open_app(dir.path());
    let (s, after) = call(&second, "GET", &uri, None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(before, after);
}

#[tokio::test]
async fn zero_ballots_give_tie_break_prefix() {
    let dir = tempfile::tempdir().unwrap();
    let app = open_app(dir.path());
    let id = open_election(&app, three_voter_config()).await;
    call_json(&app, "POST", &format!("/elections/{id}/status"), Some(json!({"status": "closed"}))).await;
    let (_, v) = call_json(&app, "GET", &format!("/elections/{id}/results"), None).await;
    assert_eq!(v["outcome"]["allocation"], json!({"P1": 5, "P2": 5, "P3": 0}));
    for p in v["diagnostics"]["scores"].as_array().unwrap() {
        assert!(p["scores"].as_array().unwrap().iter().all(|s| s == 0));
    }
}

#[tokio::test]
async fn mixed_formats_tally_separately() {
    let dir = tempfile::tempdir().unwrap();
    let app = open_app(dir.path());
    let cfg = json!({"config": three_voter_config(), "live_results": true, "pair_seed": 5});
    let id = open_election(&app, cfg).await;
    let ballots = format!("/elections/{id}/ballots");
    submit_three_voter(&app, &id).await;
    for v in ["a1", "a2"] {
        let b = json!({"voter_id": v, "format": "kapproval", "approvals": ["P3"]});
        assert_eq!(call(&app, "POST", &ballots, Some(b)).await.0, StatusCode::CREATED);
    }
    let pair = json!({"voter_id": "v1", "format": "pairwise",
        "comparisons": [{"pair": ["P1", "P3"], "winner": "P1"}]});
    assert_eq!(call(&app, "POST", &ballots, Some(pair)).await.0, StatusCode::CREATED);

    // Live results are served while open.
    let (s, k) = call_json(&app, "GET", &format!("/elections/{id}/results?method=knapsack"), None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(k["ballots"], 3);
    assert_eq!(k["outcome"]["allocation"], json!({"P1": 3, "P2": 5, "P3": 2}));
    assert_eq!(k["diagnostics"]["approval_counts"], json!({"P1": 0, "P2": 0, "P3": 2}));
    assert_eq!(k["diagnostics"]["agreement"]["comparisons"], 1);

    let (_, a) = call_json(&app, "GET", &format!("/elections/{id}/results?method=kapproval"), None).await;
    assert_eq!(a["ballots"], 2);
    assert_eq!(a["outcome"]["allocation"], json!({"P1": 0, "P2": 0, "P3": 10}));
    assert!(a["diagnostics"].get("scores").is_none());
}

#[tokio::test]
async fn pairs_are_idempotent_per_voter() {
    let dir = tempfile::tempdir().unwrap();
    let app = open_app(dir.path());
    let id = open_election(&app, json!({"config": three_voter_config(), "pair_seed": 11})).await;
    let uri = format!("/elections/{id}/pairs?voter=alice&count=3");
    let (s, a) = call_json(&app, "GET", &uri, None).await;
    assert_eq!(s, StatusCode::OK);
    let (_, b) = call_json(&app, "GET", &uri, None).await;
    assert_eq!(a, b);
    let mut seen: Vec<Vec<String>> = a["pairs"]
        .as_array()
        .unwrap()
        .iter()
        .map(|p| {
            let mut v: Vec<String> = serde_json::from_value(p.clone()).unwrap();
            v.sort();
            v
        })
        .collect();
    seen.sort();
    assert_eq!(seen, [["P1", "P2"], ["P1", "P3"], ["P2", "P3"]]);
    let (s, v) = call_json(&app, "GET", &format!("/elections/{id}/pairs?voter=alice&count=4"), None).await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(v["error"], "too-many-pairs");
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn concurrent_submissions_are_all_logged() {
    let dir = tempfile::tempdir().unwrap();
    let app = open_app(dir.path());
    let id = open_election(&app, three_voter_config()).await;
    let tasks: Vec<_> = (0..50)
        .map(|i| {
            let app = app.clone();
            let uri = format!("/elections/{id}/ballots");
            tokio::spawn(async move {
                let b = knapsack(&format!("v{i}"), json!({"P1": i % 6, "P3": 10 - i % 6}));
                call(&app, "POST", &uri, Some(b)).await.0
            })
        })
        .collect();
    for t in tasks {
        assert_eq!(t.await.unwrap(), StatusCode::CREATED);
    }
    let log = std::fs::read_to_string(dir.path().join(&id).join("ballots.jsonl")).unwrap();
    let mut seqs: Vec<u64> = log
        .lines()
        .map(|l| serde_json::from_str::<Value>(l).unwrap()["seq"].as_u64().unwrap())
        .collect();
    assert_eq!(seqs.len(), 50);
    seqs.sort_unstable();
    assert_eq!(seqs, (1..=50).collect::<Vec<_>>());
}

#[tokio::test]
async fn torn_log_tail_is_discarded() {
    let dir = tempfile::tempdir().unwrap();
    let id = {
        let app = open_app(dir.path());
        let id = open_election(&app, three_voter_config()).await;
        submit_three_voter(&app, &id).await;
        id
    };
    let log = dir.path().join(&id).join("ballots.jsonl");
    let mut text = std::fs::read_to_string(&log).unwrap();
    text.push_str("{\"seq\":4,\"recei");
    std::fs::write(&log, text).unwrap();

    let app = open_app(dir.path());
    let (_, got) = call_json(&app, "GET", &format!("/elections/{id}"), None).await;
    assert_eq!(got["submissions"], 3);
    submit_one_more(&app, &id).await;
    drop(app);
    let app = open_app(dir.path());
    let (_, got) = call_json(&app, "GET", &format!("/elections/{id}"), None).await;
    assert_eq!(got["submissions"], 4);
}

async fn submit_one_more(app: &Router, id: &str) {
    let (s, _) = call_json(app, "POST", &format!("/elections/{id}/ballots"), Some(knapsack("v4", json!({"P3": 10})))).await;
    assert_eq!(s, StatusCode::CREATED);
}

