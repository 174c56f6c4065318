//! HTTP behaviour of the curation service, driven through the router.

use std::sync::{Arc, Mutex};

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use rxnbench::curation::{
    router, Candidate, CurationItem, ItemStatus, SelectionReason, Store, CURATOR_HEADER,
};
use rxnbench::equiv::EquivalenceRuleSet;
use serde_json::{json, Value};
use tower::ServiceExt;

fn candidate(id: &str, prediction: &str, balanced: bool) -> Candidate {
    Candidate {
        candidate_id: id.into(),
        method: id.into(),
        prediction: prediction.into(),
        score: None,
        balanced,
        added: Vec::new(),
    }
}

fn item(
    id: &str,
    incomplete: &str,
    candidates: Vec<Candidate>,
    missing_carbons: u64,
    distinct: usize,
) -> CurationItem {
    CurationItem {
        id: id.into(),
        incomplete: incomplete.into(),
        candidates,
        reasons: vec![if distinct > 1 {
            SelectionReason::Disagreement
        } else {
            SelectionReason::LowConfidence
        }],
        template_hash: None,
        missing_carbons,
        distinct_answers: distinct,
        status: ItemStatus::Open,
        annotations: 0,
    }
}

/// Three items: methods agree on `agree-1` and `agree-2`, disagree on `split`.
fn fixture_items() -> Vec<CurationItem> {
    vec![
        item(
            "agree-1",
            "CCO.CC(=O)O>>CC(=O)OCC",
            vec![
                candidate("crb", "CCO.CC(=O)O>>CC(=O)OCC.O", true),
                candidate("rules", "CCO.CC(=O)O>>CC(=O)OCC.O", true),
            ],
            1,
            1,
        ),
        item(
            "agree-2",
            "CC(=O)Cl.CN>>CC(=O)NC",
            vec![
                candidate("crb", "CC(=O)Cl.CN>>CC(=O)NC.Cl", true),
                candidate("rules", "CC(=O)Cl.CN>>CC(=O)NC.[H+].[Cl-]", true),
            ],
            5,
            1,
        ),
        item(
            "split",
            "CC(C)O>>CC=C",
            vec![
                candidate("crb", "CC(C)O>>CC=C.O", true),
                candidate("rules", "CC(C)O>>CC=C.[H][H]", false),
            ],
            0,
            2,
        ),
    ]
}

fn app(items: Vec<CurationItem>) -> Router {
    let store = Store::in_memory(items, 2, EquivalenceRuleSet::default_rules()).unwrap();
    router(Arc::new(Mutex::new(store)), None)
}

async fn call(
    app: &Router,
    method: &str,
    uri: &str,
    curator: Option<&str>,
    body: Option<Value>,
) -> (StatusCode, Value) {
    let mut req = Request::builder().method(method).uri(uri);
    if let Some(c) = curator {
        req = req.header(CURATOR_HEADER, c);
    }
    let body = match body {
        Some(v) => {
            req = req.header("content-type", "application/json");
            Body::from(v.to_string())
        }
        None => Body::empty(),
    };
    let resp = app.clone().oneshot(req.body(body).unwrap()).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    let text = String::from_utf8(bytes.to_vec()).unwrap();
    let value = serde_json::from_str(&text).unwrap_or(Value::String(text));
    (status, value)
}

async fn annotate(app: &Router, curator: &str, body: Value) -> (StatusCode, Value) {
    call(app, "POST", "/api/annotations", Some(curator), Some(body)).await
}

fn ids(v: &Value) -> Vec<&str> {
    v.as_array()
        .unwrap()
        .iter()
        .map(|i| i["id"].as_str().unwrap())
        .collect()
}

#[tokio::test]
async fn empty_store_has_empty_queue() {
    let app = app(Vec::new());
    let (status, body) = call(&app, "GET", "/api/queue", None, None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body, json!([]));
}

#[tokio::test]
async fn queue_strategies() {
    let app = app(fixture_items());
    let (_, body) = call(&app, "GET", "/api/queue", None, None).await;
    assert_eq!(ids(&body)[0], "split");
    let (_, body) = call(&app, "GET", "/api/queue?strategy=complexity", None, None).await;
    assert_eq!(ids(&body)[0], "agree-2");
    let (_, body) = call(
        &app,
        "GET",
        "/api/queue?strategy=coverage&limit=2",
        None,
        None,
    )
    .await;
    assert_eq!(ids(&body).len(), 2);
    let (status, _) = call(&app, "GET", "/api/queue?strategy=random", None, None).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn annotation_status_codes() {
    let app = app(fixture_items());
    let edit = json!({"item_id": "split", "action": "edit", "text": "CC(C)O>>CC=C.O"});
    let (status, body) = annotate(&app, "ann", edit.clone()).await;
    assert_eq!(status, StatusCode::CREATED);
    assert_eq!(body["status"], "in_review");
    assert_eq!(body["annotations"], 1);

    let (status, _) = annotate(&app, "ann", edit).await;
    assert_eq!(status, StatusCode::CONFLICT);

    let (status, _) = annotate(&app, "ann", json!({"item_id": "nope", "action": "reject"})).await;
    assert_eq!(status, StatusCode::NOT_FOUND);

    let missing_o = json!({"item_id": "split", "action": "edit", "text": "CC(C)O>>CC=C.[H][H]"});
    let (status, body) = annotate(&app, "bob", missing_o).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(body["validation"]["delta"], "C:0,O:+1|q:0");
    assert!(body["error"].as_str().unwrap().contains("O:+1"));

    let (status, body) = annotate(
        &app,
        "bob",
        json!({"item_id": "split", "action": "edit", "text": "C(("}),
    )
    .await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(body["validation"]["valid"], false);

    let (status, _) = annotate(
        &app,
        "bob",
        json!({"item_id": "split", "action": "accept", "candidate_id": "x"}),
    )
    .await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);

    let (status, _) = call(
        &app,
        "POST",
        "/api/annotations",
        None,
        Some(json!({"item_id": "split", "action": "flag"})),
    )
    .await;
    assert_eq!(status, StatusCode::BAD_REQUEST);

    let (status, body) = annotate(
        &app,
        "bob",
        json!({"item_id": "split", "action": "accept", "candidate_id": "crb"}),
    )
    .await;
    assert_eq!(status, StatusCode::CREATED);
    assert_eq!(body["status"], "resolved");

    let (status, _) = annotate(
        &app,
        "carol",
        json!({"item_id": "split", "action": "reject"}),
    )
    .await;
    assert_eq!(status, StatusCode::CONFLICT);

    let (_, queue) = call(&app, "GET", "/api/queue", None, None).await;
    assert!(!ids(&queue).contains(&"split"));
}

#[tokio::test]
async fn curator_in_body_is_accepted() {
    let app = app(fixture_items());
    let body = json!({"item_id": "agree-1", "curator_id": "dana", "action": "flag", "note": "odd reagent"});
    let (status, _) = call(&app, "POST", "/api/annotations", None, Some(body)).await;
    assert_eq!(status, StatusCode::CREATED);
}

#[tokio::test]
async fn validate_endpoint() {
    let app = app(Vec::new());
    let (status, body) = call(
        &app,
        "POST",
        "/api/validate",
        None,
        Some(json!({"reaction": "O>>O"})),
    )
    .await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(
        (body["valid"].clone(), body["balanced"].clone()),
        (json!(true), json!(true))
    );
    assert_eq!(body["delta"], "∅|q:0");

    let (_, body) = call(
        &app,
        "POST",
        "/api/validate",
        None,
        Some(json!({"reaction": "O>>"})),
    )
    .await;
    assert_eq!(body["balanced"], false);
    assert_eq!(body["delta"], "C:0,H:+2,O:+1|q:0");

    let req = Request::builder()
        .method("POST")
        .uri("/api/validate")
        .body(Body::from("not a reaction (("))
        .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    let body: Value = serde_json::from_slice(&bytes).unwrap();
    assert_eq!(body["valid"], false);
    assert!(body["message"].is_string());
}

#[tokio::test]
async fn export_lists_resolved_items_with_history() {
    let app = app(fixture_items());
    let req = Request::builder()
        .uri("/api/export")
        .body(Body::empty())
        .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    assert_eq!(resp.headers()["content-type"], "application/x-ndjson");
    assert!(resp
        .into_body()
        .collect()
        .await
        .unwrap()
        .to_bytes()
        .is_empty());

    annotate(
        &app,
        "a",
        json!({"item_id": "agree-2", "action": "accept", "candidate_id": "crb"}),
    )
    .await;
    annotate(
        &app,
        "b",
        json!({"item_id": "agree-2", "action": "accept", "candidate_id": "rules"}),
    )
    .await;
    annotate(
        &app,
        "a",
        json!({"item_id": "split", "action": "accept", "candidate_id": "crb"}),
    )
    .await;
    annotate(
        &app,
        "b",
        json!({"item_id": "split", "action": "edit", "text": "CC(C)O>>CC(C)=O.[H][H]"}),
    )
    .await;
    annotate(
        &app,
        "c",
        json!({"item_id": "split", "action": "edit", "text": "CC(C)O>>C=CC.O"}),
    )
    .await;

    let (_, text) = call(&app, "GET", "/api/export", None, None).await;
    let lines: Vec<Value> = match text {
        Value::String(s) => s
            .lines()
            .map(|l| serde_json::from_str(l).unwrap())
            .collect(),
        v => vec![v],
    };
    assert_eq!(lines.len(), 2);
    assert_eq!(lines[0]["item"]["id"], "agree-2");
    assert_eq!(lines[0]["history"].as_array().unwrap().len(), 2);
    assert_eq!(lines[0]["outcome_classes"].as_array().unwrap().len(), 1);
    let split = &lines[1];
    assert_eq!(split["item"]["id"], "split");
    let classes = split["outcome_classes"].as_array().unwrap();
    assert_eq!(classes.len(), 2);
    assert_eq!(classes[0]["curators"], json!(["a", "c"]));
}

#[tokio::test]
async fn annotations_survive_restart() {
    let dir = tempfile::tempdir().unwrap();
    let log = dir.path().join("events.jsonl");
    let rules = EquivalenceRuleSet::default_rules;
    {
        let store = Store::open(fixture_items(), &log, 2, rules()).unwrap();
        let app = router(Arc::new(Mutex::new(store)), Some("http://localhost:5173"));
        annotate(
            &app,
            "a",
            json!({"item_id": "agree-1", "action": "accept", "candidate_id": "crb"}),
        )
        .await;
        annotate(
            &app,
            "b",
            json!({"item_id": "agree-1", "action": "accept", "candidate_id": "rules"}),
        )
        .await;
        annotate(&app, "a", json!({"item_id": "split", "action": "reject"})).await;
    }
    let store = Store::open(fixture_items(), &log, 2, rules()).unwrap();
    assert_eq!(store.history("agree-1").len(), 2);
    assert_eq!(store.history("split").len(), 1);
    let app = router(Arc::new(Mutex::new(store)), None);
    let (_, text) = call(&app, "GET", "/api/export", None, None).await;
    assert_eq!(text["item"]["id"], "agree-1");
    assert_eq!(text["item"]["status"], "resolved");
    let (status, _) = annotate(&app, "a", json!({"item_id": "split", "action": "flag"})).await;
    assert_eq!(status, StatusCode::CONFLICT);
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn concurrent_writers_never_double_write() {
    let dir = tempfile::tempdir().unwrap();
    let log = dir.path().join("events.jsonl");
    let store = Store::open(
        fixture_items(),
        &log,
        50,
        EquivalenceRuleSet::default_rules(),
    )
    .unwrap();
    let app = router(Arc::new(Mutex::new(store)), None);
    let mut tasks = Vec::new();
    for k in 0..40 {
        let app = app.clone();
        tasks.push(tokio::spawn(async move {
            let curator = format!("c{}", k % 20);
            annotate(
                &app,
                &curator,
                json!({"item_id": "split", "action": "reject"}),
            )
            .await
            .0
        }));
    }
    let mut created = 0;
    for t in tasks {
        match t.await.unwrap() {
            StatusCode::CREATED => created += 1,
            StatusCode::CONFLICT => {}
            other => panic!("unexpected status {other}"),
        }
    }
    assert_eq!(created, 20);
    let lines = std::fs::read_to_string(&log).unwrap();
    assert_eq!(lines.lines().count(), 20);
    for l in lines.lines() {
        serde_json::from_str::<Value>(l).unwrap();
    }
}

#[tokio::test]
async fn cors_allows_configured_origin() {
    let store = Store::in_memory(Vec::new(), 2, EquivalenceRuleSet::default_rules()).unwrap();
    let app = router(Arc::new(Mutex::new(store)), Some("http://localhost:5173"));
    let req = Request::builder()
        .uri("/api/queue")
        .header("origin", "http://localhost:5173")
        .body(Body::empty())
        .unwrap();
    let resp = app.oneshot(req).await.unwrap();
    assert_eq!(
        resp.headers()["access-control-allow-origin"],
        "http://localhost:5173"
    );
}
