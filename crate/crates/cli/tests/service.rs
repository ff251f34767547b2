use std::sync::Arc;

use axum::body::Body;
use axum::http::{Method, Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;
use typeforge::synth::{generate_synthetic_world, SynthConfig};
use typeforge_cli::service::{router, AppState, ServiceConfig};

fn app() -> Router {
    app_with(ServiceConfig {
        relation_roots: 200,
        snapshot_dir: None,
    })
}

fn app_with(config: ServiceConfig) -> Router {
    router(Arc::new(AppState::new(config)))
}

async fn call(app: &Router, method: Method, uri: &str, body: Option<String>) -> (StatusCode, Value) {
    let req = Request::builder()
        .method(method)
        .uri(uri)
        .header("content-type", "application/json")
        .body(body.map_or_else(Body::empty, Body::from))
        .unwrap();
    let res = app.clone().oneshot(req).await.unwrap();
    let status = res.status();
    let bytes = res.into_body().collect().await.unwrap().to_bytes();
    (status, serde_json::from_slice(&bytes).unwrap())
}

fn synth_config(fraction: f64) -> SynthConfig {
    SynthConfig {
        n_documents: 80,
        disambiguable_fraction: fraction,
        ..SynthConfig::default()
    }
}

async fn open(app: &Router, seed: u64, fraction: f64) -> String {
    let body = json!({"world": {"synthetic": {"seed": seed, "config": synth_config(fraction)}}});
    let (status, v) = call(app, Method::POST, "/sessions", Some(body.to_string())).await;
    assert_eq!(status, StatusCode::CREATED, "{v}");
    v["id"].as_str().unwrap().to_string()
}

fn latent(seed: u64, fraction: f64) -> Value {
    generate_synthetic_world(seed, &synth_config(fraction)).unwrap().latent.to_json()
}

fn strip_timing(mut v: Value) -> Value {
    fn walk(v: &mut Value) {
        match v {
            Value::Object(m) => {
                m.remove("timing_ms");
                m.values_mut().for_each(walk);
            }
            Value::Array(a) => a.iter_mut().for_each(walk),
            _ => {}
        }
    }
    walk(&mut v);
    v
}

#[tokio::test]
async fn health_reports_version() {
    let (status, v) = call(&app(), Method::GET, "/health", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(v["version"], env!("CARGO_PKG_VERSION"));
}

#[tokio::test]
async fn missing_world_file_names_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let links = dir.path().join("links.tsv");
    let body = json!({"world": {"files": {"graph": dir.path(), "links": links, "corpus": dir.path().join("c.jsonl")}}});
    let (status, v) = call(&app(), Method::POST, "/sessions", Some(body.to_string())).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(v["error"]["code"], "load_error");
    let path = links.display().to_string();
    assert_eq!(v["error"]["path"], path.as_str());
    assert!(v["error"]["message"].as_str().unwrap().contains(&path));
}

#[tokio::test]
async fn malformed_bodies_are_rejected() {
    let app = app();
    let (status, v) = call(&app, Method::POST, "/sessions", Some("{not json".into())).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(v["error"]["code"], "parse_error");
    let id = open(&app, 1, 0.8).await;
    let bad = json!({"axes": [{"name": "a", "kind": "bogus"}]});
    let (status, v) = call(&app, Method::PUT, &format!("/sessions/{id}/rules"), Some(bad.to_string())).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(v["error"]["path"], "axes[0].kind");
    let unknown = json!({"axes": [{"name": "a", "kind": "discovered", "relation": {"root": 999999, "edge": "instance_of"}}]});
    let (status, v) = call(&app, Method::PUT, &format!("/sessions/{id}/rules"), Some(unknown.to_string())).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(v["error"]["code"], "unknown_entity");
    let (status, _) = call(&app, Method::GET, "/sessions/nope", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn rules_replace_and_bump_the_version() {
    let app = app();
    let id = open(&app, 2, 1.0).await;
    let (_, v) = call(&app, Method::PUT, &format!("/sessions/{id}/rules"), Some(json!({"axes": []}).to_string())).await;
    assert_eq!(v["version"], 1);
    assert_eq!(v["s_oracle"], v["s_greedy"]);
    assert_eq!(v["j"], v["s_greedy"]);
    let (_, v) = call(&app, Method::PUT, &format!("/sessions/{id}/rules"), Some(latent(2, 1.0).to_string())).await;
    assert_eq!(v["version"], 2);
    assert_eq!(v["s_oracle"], 1.0);
    assert_eq!(v["errors"]["total_groups"], 0);
    assert_eq!(v["axes"].as_array().unwrap().len(), 6);
    let (_, s) = call(&app, Method::GET, &format!("/sessions/{id}"), None).await;
    assert_eq!(s["version"], 2);
    assert_eq!(s["system"], latent(2, 1.0));
}

#[tokio::test]
async fn repeated_requests_are_identical() {
    let app = app();
    let id = open(&app, 3, 0.5).await;
    call(&app, Method::PUT, &format!("/sessions/{id}/rules"), Some(latent(3, 0.5).to_string())).await;
    for uri in [format!("/sessions/{id}"), format!("/sessions/{id}/errors?page=0"), format!("/sessions/{id}/relations?query=")] {
        let (_, a) = call(&app, Method::GET, &uri, None).await;
        let (_, b) = call(&app, Method::GET, &uri, None).await;
        assert_eq!(strip_timing(a).to_string(), strip_timing(b).to_string(), "{uri}");
    }
}

#[tokio::test]
async fn duplicate_whatif_costs_lambda_and_leaves_the_session_alone() {
    let app = app();
    let id = open(&app, 4, 0.7).await;
    let sys = latent(4, 0.7);
    call(&app, Method::PUT, &format!("/sessions/{id}/rules"), Some(sys.to_string())).await;
    let rel = sys["axes"][0]["relation"].clone();
    let (status, w) = call(&app, Method::POST, &format!("/sessions/{id}/whatif"), Some(rel.to_string())).await;
    assert_eq!(status, StatusCode::OK, "{w}");
    assert_eq!(w["delta_s_oracle"], 0.0);
    assert!((w["delta_j"].as_f64().unwrap() + typeforge::eval::DEFAULT_LAMBDA).abs() < 1e-12);
    assert_eq!(w["version"], 1);
    let (_, s) = call(&app, Method::GET, &format!("/sessions/{id}"), None).await;
    assert_eq!(s["version"], 1);
    assert_eq!(s["system"], sys);
    let bad = json!({"root": 424242, "edge": "instance_of"});
    let (status, v) = call(&app, Method::POST, &format!("/sessions/{id}/whatif"), Some(bad.to_string())).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(v["error"]["code"], "unknown_entity");
}

#[tokio::test]
async fn whatif_equals_difference_of_two_evaluations() {
    let app = app();
    let id = open(&app, 5, 0.5).await;
    let mut base = latent(5, 0.5);
    base["axes"].as_array_mut().unwrap().truncate(2);
    let (_, listed) = call(&app, Method::GET, &format!("/sessions/{id}/relations?query=&limit=6"), None).await;
    for info in listed["relations"].as_array().unwrap() {
        let rel = info["relation"].clone();
        call(&app, Method::PUT, &format!("/sessions/{id}/rules"), Some(base.to_string())).await;
        let (_, w) = call(&app, Method::POST, &format!("/sessions/{id}/whatif"), Some(rel.to_string())).await;
        let (_, before) = call(&app, Method::GET, &format!("/sessions/{id}"), None).await;
        let mut ext = base.clone();
        ext["axes"].as_array_mut().unwrap().push(json!({"name": w["axis"], "kind": "discovered", "relation": rel}));
        let (_, after) = call(&app, Method::PUT, &format!("/sessions/{id}/rules"), Some(ext.to_string())).await;
        let b = &before["evaluation"];
        assert_eq!(w["delta_s_oracle"].as_f64().unwrap(), after["s_oracle"].as_f64().unwrap() - b["s_oracle"].as_f64().unwrap());
        assert_eq!(w["delta_j"].as_f64().unwrap(), after["j"].as_f64().unwrap() - b["j"].as_f64().unwrap());
        assert_eq!(w["members"], info["members"]);
    }
}

#[tokio::test]
async fn relation_search_and_error_pages() {
    let app = app();
    let id = open(&app, 6, 0.3).await;
    let (_, all) = call(&app, Method::GET, &format!("/sessions/{id}/relations?limit=100000"), None).await;
    let total = all["total"].as_u64().unwrap();
    assert_eq!(all["relations"].as_array().unwrap().len() as u64, total);
    let (_, cat) = call(&app, Method::GET, &format!("/sessions/{id}/relations?query=CATEGORY&limit=100000"), None).await;
    let cats = cat["relations"].as_array().unwrap();
    assert!(!cats.is_empty() && (cats.len() as u64) < total);
    assert!(cats.iter().all(|r| r["relation"]["edge"] == "wikipedia_category" || r["root_label"].as_str().unwrap().to_lowercase().contains("category")));

    let mut sys = latent(6, 0.3);
    sys["axes"].as_array_mut().unwrap().truncate(3);
    let (_, e) = call(&app, Method::PUT, &format!("/sessions/{id}/rules"), Some(sys.to_string())).await;
    let (_, p0) = call(&app, Method::GET, &format!("/sessions/{id}/errors"), None).await;
    assert_eq!(p0["rows"], e["errors"]["rows"]);
    assert_eq!(p0["page_size"], 50);
    let rows = p0["rows"].as_array().unwrap();
    let errors: u64 = rows.iter().map(|r| r["errors"].as_u64().unwrap()).sum();
    assert_eq!(errors, e["oracle"]["total"].as_u64().unwrap() - e["oracle"]["hits"].as_u64().unwrap());
    assert!(rows.windows(2).all(|w| w[0]["errors"].as_u64() >= w[1]["errors"].as_u64()));
    let key = rows[0]["gold_type"].as_array().unwrap().iter().map(|s| s.as_str().unwrap()).collect::<Vec<_>>().join("/");
    let (_, g) = call(&app, Method::GET, &format!("/sessions/{id}/errors?group={}", key.replace('/', "%2F")), None).await;
    assert_eq!(g["total_groups"], 1);
    assert_eq!(g["rows"][0], rows[0]);
    let (_, past) = call(&app, Method::GET, &format!("/sessions/{id}/errors?page=9"), None).await;
    assert!(past["rows"].as_array().unwrap().is_empty());
}

#[tokio::test]
async fn snapshots_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let app = app_with(ServiceConfig {
        relation_roots: 50,
        snapshot_dir: Some(dir.path().to_path_buf()),
    });
    let id = open(&app, 7, 0.5).await;
    let sys = latent(7, 0.5);
    call(&app, Method::PUT, &format!("/sessions/{id}/rules"), Some(sys.to_string())).await;
    let (status, snap) = call(&app, Method::POST, &format!("/sessions/{id}/snapshot"), None).await;
    assert_eq!(status, StatusCode::OK, "{snap}");
    let body = json!({"world": {"synthetic": {"seed": 7, "config": synth_config(0.5)}}, "system_path": snap["path"]});
    let (_, created) = call(&app, Method::POST, "/sessions", Some(body.to_string())).await;
    let (_, s) = call(&app, Method::GET, &format!("/sessions/{}", created["id"].as_str().unwrap()), None).await;
    assert_eq!(s["system"], sys);
    let (status, _) = call(&self::app(), Method::POST, "/sessions/s1/snapshot", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn concurrent_writers_get_distinct_versions() {
    let app = app();
    let id = open(&app, 8, 0.5).await;
    let sys = latent(8, 0.5);
    let mut tasks = Vec::new();
    for i in 0..12 {
        let (app, id) = (app.clone(), id.clone());
        let mut s = sys.clone();
        s["axes"].as_array_mut().unwrap().truncate(i % 6 + 1);
        tasks.push(tokio::spawn(async move {
            let (_, v) = call(&app, Method::PUT, &format!("/sessions/{id}/rules"), Some(s.to_string())).await;
            let (_, r) = call(&app, Method::GET, &format!("/sessions/{id}/errors"), None).await;
            assert!(r["version"].as_u64().is_some());
            v["version"].as_u64().unwrap()
        }));
    }
    let mut versions = Vec::new();
    for t in tasks {
        versions.push(t.await.unwrap());
    }
    versions.sort_unstable();
    assert_eq!(versions, (1..=12).collect::<Vec<_>>());
}
