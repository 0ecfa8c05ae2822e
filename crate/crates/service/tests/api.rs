use std::collections::BTreeMap;
use std::sync::Arc;
use std::time::Duration;

use axum::body::Body;
use axum::http::{Method, Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};
use tower::ServiceExt;

use topicflow::ingest::RawDocument;
use topicflow::layout::{partition_regions, LayoutParams, RegionKind};
use topicflow::synth::{drifting_corpus, DriftParams};
use topicflow_service::{router, AppState};

fn app() -> Router {
    router(Arc::new(AppState::default()))
}

async fn call(app: &Router, method: Method, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let req = Request::builder()
        .method(method)
        .uri(uri)
        .header("content-type", "application/json")
        .body(body.map_or_else(Body::empty, |b| Body::from(b.to_string())))
        .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    let value = if bytes.is_empty() { Value::Null } else { serde_json::from_slice(&bytes).unwrap() };
    (status, value)
}

async fn create(app: &Router, config: Value) -> String {
    let (status, v) = call(app, Method::POST, "/api/session", Some(config)).await;
    assert_eq!(status, StatusCode::OK, "{v}");
    v["id"].as_str().unwrap().to_string()
}

/// Drifting corpus split into one batch per window.
fn batches(slices: usize, seed: u64) -> Vec<Vec<RawDocument>> {
    let p = DriftParams { slices, ..DriftParams::default() };
    let docs = drifting_corpus(&mut ChaCha8Rng::seed_from_u64(seed), &p);
    let mut out: BTreeMap<i64, Vec<RawDocument>> = BTreeMap::new();
    for d in docs {
        out.entry((d.timestamp - p.start) / p.window_secs).or_default().push(d);
    }
    out.into_values().collect()
}

async fn ingest(app: &Router, id: &str, docs: &[RawDocument]) -> (StatusCode, Value) {
    let body = json!({ "documents": docs });
    call(app, Method::POST, &format!("/api/session/{id}/batch"), Some(body)).await
}

#[tokio::test]
async fn sessions_are_distinct_and_configs_validated() {
    let app = app();
    let a = create(&app, json!({})).await;
    let b = create(&app, json!({})).await;
    assert_ne!(a, b);
    let (status, v) = call(&app, Method::POST, "/api/session", Some(json!({"cut": {"lambda": -1.0}}))).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(v["code"], "BadConfig");
    let (status, v) = call(&app, Method::POST, "/api/session", Some(json!({"no_such_field": 1}))).await;
    assert_eq!((status, v["code"].as_str()), (StatusCode::BAD_REQUEST, Some("BadConfig")));
    let (status, v) = call(&app, Method::GET, "/api/session/nope/layout", None).await;
    assert_eq!((status, v["code"].as_str()), (StatusCode::NOT_FOUND, Some("UnknownSession")));
}

#[tokio::test]
async fn ingest_layout_and_errors() {
    let app = app();
    let id = create(&app, json!({})).await;
    let bs = batches(3, 1);
    let (status, v) = call(&app, Method::GET, &format!("/api/session/{id}/layout"), None).await;
    assert_eq!((status, v["code"].as_str()), (StatusCode::CONFLICT, Some("EmptySession")));

    let (status, v) = ingest(&app, &id, &bs[0]).await;
    assert_eq!(status, StatusCode::OK, "{v}");
    assert_eq!(v["time_index"], 0);
    assert!(v["ticks"].as_u64().unwrap() >= 1);
    let (status, scene) = call(&app, Method::GET, &format!("/api/session/{id}/layout?w=1600&h=900"), None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(scene["regions"]["river"]["steps"], json!([0]));
    assert!(scene["regions"]["streaming"]["x1"].as_f64().unwrap() > scene["regions"]["streaming"]["x0"].as_f64().unwrap());
    let (status, v) = call(&app, Method::GET, &format!("/api/session/{id}/layout?w=100&h=900"), None).await;
    assert_eq!((status, v["code"].as_str()), (StatusCode::BAD_REQUEST, Some("ViewportTooSmall")));

    let (status, _) = ingest(&app, &id, &bs[2]).await;
    assert_eq!(status, StatusCode::OK);
    let (status, v) = ingest(&app, &id, &bs[1]).await;
    assert_eq!((status, v["code"].as_str()), (StatusCode::CONFLICT, Some("OutOfOrderBatch")));
    let (status, v) = ingest(&app, &id, &bs[2]).await;
    assert_eq!((status, v["code"].as_str()), (StatusCode::CONFLICT, Some("DuplicateDocument")));
    let (status, v) = call(&app, Method::POST, &format!("/api/session/{id}/batch"), Some(json!({"docs": []}))).await;
    assert_eq!((status, v["code"].as_str()), (StatusCode::BAD_REQUEST, Some("BadRequest")));
    let (_, cuts) = call(&app, Method::GET, &format!("/api/session/{id}/cuts"), None).await;
    assert_eq!(cuts["cuts"].as_array().unwrap().len(), 2);
}

#[tokio::test]
async fn streaming_contract_holds_over_ten_batches() {
    let app = app();
    let id = create(&app, json!({})).await;
    let mut first: Vec<String> = Vec::new();
    for b in batches(10, 4) {
        let (status, v) = ingest(&app, &id, &b).await;
        assert_eq!(status, StatusCode::OK, "{v}");
        first.push(v["cut"].to_string());
    }
    let (_, cuts) = call(&app, Method::GET, &format!("/api/session/{id}/cuts"), None).await;
    let now: Vec<String> = cuts["cuts"].as_array().unwrap().iter().map(Value::to_string).collect();
    assert_eq!(now.len(), 10);
    assert_eq!(now[..9], first[..9]);
}

#[tokio::test]
async fn focus_is_idempotent_and_validated() {
    let app = app();
    let id = create(&app, json!({})).await;
    for b in batches(3, 2) {
        ingest(&app, &id, &b).await;
    }
    let uri = format!("/api/session/{id}/focus");
    let (status, auto) = call(&app, Method::PUT, &uri, Some(json!("auto"))).await;
    assert_eq!(status, StatusCode::OK, "{auto}");
    assert_eq!(auto["changed"], json!([false, false, false]));
    let foci = auto["foci"].clone();
    let (_, again) = call(&app, Method::PUT, &uri, Some(json!({ "nodes": foci }))).await;
    assert_eq!(again["changed"], json!([false, false, false]));

    let (status, v) = call(&app, Method::PUT, &uri, Some(json!([{"time_index": 0, "node_id": "missing"}]))).await;
    assert_eq!((status, v["code"].as_str()), (StatusCode::NOT_FOUND, Some("UnknownNode")));

    let (_, cuts) = call(&app, Method::GET, &format!("/api/session/{id}/cuts"), None).await;
    let leaf_focus = json!([{"time_index": 1, "node_id": cuts["cuts"][1]["cut_nodes"][0]}]);
    let (status, v) = call(&app, Method::PUT, &uri, Some(leaf_focus.clone())).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(v["foci"].as_array().unwrap().len(), 1);
    let (_, v2) = call(&app, Method::PUT, &uri, Some(leaf_focus)).await;
    assert_eq!(v2["changed"], json!([false, false, false]));
}

#[tokio::test]
async fn split_merge_round_trip_survives_layout() {
    let app = app();
    let id = create(&app, json!({})).await;
    let b = batches(1, 3);
    ingest(&app, &id, &b[0]).await;
    let (_, cuts) = call(&app, Method::GET, &format!("/api/session/{id}/cuts"), None).await;
    let original = cuts["displayed"][0]["cut_nodes"].clone();
    let (_, scene) = call(&app, Method::GET, &format!("/api/session/{id}/layout"), None).await;
    let mut bars: Vec<String> = scene["bars"].as_array().unwrap().iter().map(|b| b["node"].as_str().unwrap().into()).collect();
    bars.sort();
    assert_eq!(json!(bars), original);

    let (_, tree_cut) = call(&app, Method::GET, &format!("/api/session/{id}/cuts"), None).await;
    let nodes: Vec<String> = serde_json::from_value(tree_cut["displayed"][0]["cut_nodes"].clone()).unwrap();
    let mut target = None;
    for n in &nodes {
        let (st, v) = call(&app, Method::POST, &format!("/api/session/{id}/topic/0/{n}/split"), None).await;
        if st == StatusCode::OK {
            target = Some((n.clone(), v));
            break;
        }
        assert_eq!(v["code"], "LeafSplit");
    }
    let (node, split) = target.expect("the cut has an internal node");
    assert!(split["overridden"].as_bool().unwrap());
    assert!(split["cut_nodes"].as_array().unwrap().len() > nodes.len());
    for _ in 0..2 {
        let (_, scene) = call(&app, Method::GET, &format!("/api/session/{id}/layout"), None).await;
        assert_eq!(scene["bars"].as_array().unwrap().len(), split["cut_nodes"].as_array().unwrap().len());
    }
    let (_, cuts) = call(&app, Method::GET, &format!("/api/session/{id}/cuts"), None).await;
    assert_eq!(cuts["displayed"][0]["cut_nodes"], split["cut_nodes"]);
    assert_eq!(cuts["cuts"][0]["cut_nodes"], original);

    let (st, v) = call(&app, Method::POST, &format!("/api/session/{id}/topic/0/{node}/split"), None).await;
    assert_eq!((st, v["code"].as_str()), (StatusCode::CONFLICT, Some("NotInCut")));
    let (st, merged) = call(&app, Method::POST, &format!("/api/session/{id}/topic/0/{node}/merge"), None).await;
    assert_eq!(st, StatusCode::OK, "{merged}");
    assert_eq!(merged["cut_nodes"], original);
    let (st, v) = call(&app, Method::POST, &format!("/api/session/{id}/topic/0/{node}/merge"), None).await;
    assert_eq!((st, v["code"].as_str()), (StatusCode::CONFLICT, Some("NotSiblingGroup")));
}

#[tokio::test]
async fn search_and_document_links() {
    let app = app();
    let id = create(&app, json!({})).await;
    let bs = batches(4, 5);
    for b in &bs {
        ingest(&app, &id, b).await;
    }
    let (st, hits) = call(&app, Method::GET, &format!("/api/session/{id}/search?q=term0001%20term0002"), None).await;
    assert_eq!(st, StatusCode::OK, "{hits}");
    let scores: Vec<f64> = hits.as_array().unwrap().iter().map(|h| h["score"].as_f64().unwrap()).collect();
    assert!(!scores.is_empty() && scores.len() <= 20);
    assert!(scores.windows(2).all(|w| w[0] >= w[1]));
    let (st, v) = call(&app, Method::GET, &format!("/api/session/{id}/search?q=zzzz"), None).await;
    assert_eq!((st, v["code"].as_str()), (StatusCode::BAD_REQUEST, Some("EmptyQueryVector")));

    let doc = &bs[3][0].id;
    let (st, links) = call(&app, Method::GET, &format!("/api/session/{id}/documents/{doc}/links"), None).await;
    assert_eq!(st, StatusCode::OK, "{links}");
    let regions = partition_regions(4, 3, &LayoutParams::default(), 1600.0).unwrap();
    for (key, kinds) in [
        ("streaming", vec![RegionKind::Streaming]),
        ("river", vec![RegionKind::River]),
        ("stack_archive", vec![RegionKind::Stack, RegionKind::Archive]),
    ] {
        let list = links[key].as_array().unwrap();
        assert!(list.len() <= 5);
        for m in list {
            let t = m["time_index"].as_u64().unwrap() as usize;
            let kind = if t == 3 { RegionKind::Streaming } else { regions.kind_of_step(t).unwrap() };
            assert!(kinds.contains(&kind), "{key} holds a match from step {t}");
            assert_eq!(serde_json::to_value(kind).unwrap(), m["region"]);
        }
    }
    let (_, none) = call(&app, Method::GET, &format!("/api/session/{id}/documents/{doc}/links?j=0"), None).await;
    assert!(none["river"].as_array().unwrap().is_empty() && none["streaming"].as_array().unwrap().is_empty());
    let (st, v) = call(&app, Method::GET, &format!("/api/session/{id}/documents/missing/links"), None).await;
    assert_eq!((st, v["code"].as_str()), (StatusCode::NOT_FOUND, Some("UnknownDocument")));
}

/// Reads `(event, data)` pairs from an SSE body until `stop` returns true.
async fn read_events(app: &Router, id: &str, stop: impl Fn(&[(String, String)]) -> bool) -> Vec<(String, String)> {
    let req = Request::builder().uri(format!("/api/session/{id}/events")).body(Body::empty()).unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    assert_eq!(resp.status(), StatusCode::OK);
    assert_eq!(resp.headers()["content-type"], "text/event-stream");
    let mut body = resp.into_body();
    let mut buf = String::new();
    let mut out = Vec::new();
    while !stop(&out) {
        let frame = tokio::time::timeout(Duration::from_secs(30), body.frame()).await.expect("event in time");
        let Some(frame) = frame else { break };
        if let Ok(data) = frame.unwrap().into_data() {
            buf.push_str(std::str::from_utf8(&data).unwrap());
        }
        while let Some(end) = buf.find("\n\n") {
            let block: String = buf.drain(..end + 2).collect();
            let (mut name, mut data) = (String::new(), String::new());
            for line in block.lines() {
                if let Some(v) = line.strip_prefix("event: ") {
                    name = v.into();
                } else if let Some(v) = line.strip_prefix("data: ") {
                    data.push_str(v);
                }
            }
            if !name.is_empty() {
                out.push((name, data));
            }
        }
    }
    out
}

#[tokio::test]
async fn event_stream_orders_ticks_before_layout_and_fans_out() {
    let app = app();
    let id = create(&app, json!({})).await;
    let twice = |evs: &[(String, String)]| evs.iter().filter(|(n, _)| n == "layout").count() >= 2;
    let a = tokio::spawn({
        let (app, id) = (app.clone(), id.clone());
        async move { read_events(&app, &id, twice).await }
    });
    let b = tokio::spawn({
        let (app, id) = (app.clone(), id.clone());
        async move { read_events(&app, &id, twice).await }
    });
    for batch in batches(2, 6) {
        ingest(&app, &id, &batch).await;
    }
    let (a, b) = (a.await.unwrap(), b.await.unwrap());
    assert_eq!(a, b);
    let first_layout = a.iter().position(|(n, _)| n == "layout").unwrap();
    assert!(first_layout >= 1 && a[..first_layout].iter().all(|(n, _)| n == "tick"));
    let tick: Value = serde_json::from_str(&a[0].1).unwrap();
    assert!(tick["tokens"].is_array() && tick["tick"].is_u64());
    let notice: Value = serde_json::from_str(&a[first_layout].1).unwrap();
    assert_eq!((notice["reason"].as_str(), notice["steps"].as_u64()), (Some("ingest"), Some(1)));

    // A late subscriber replays the same log.
    let late = read_events(&app, &id, twice).await;
    assert_eq!(late, a);
}
