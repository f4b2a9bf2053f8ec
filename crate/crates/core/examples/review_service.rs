//! Drive the review API in-process: list pending predictions, record
//! decisions and export the accepted triples. Pass `serve` to keep the
//! server running on 127.0.0.1:8080 afterwards.
//!
//! cargo run --example review_service [serve]

use std::sync::{Arc, Mutex};

use axum::body::Body;
use axum::http::Request;
use http_body_util::BodyExt;
use tower::ServiceExt;
use xkgat::review::{build_queue, router, serve, PredictionRecord, ReviewState, Source};

async fn request(app: &axum::Router, method: &str, uri: &str, body: &str) -> String {
    let req = Request::builder()
        .method(method)
        .uri(uri)
        .header("content-type", "application/json")
        .body(Body::from(body.to_owned()))
        .expect("request");
    let resp = app.clone().oneshot(req).await.expect("infallible");
    let bytes = resp.into_body().collect().await.expect("body").to_bytes();
    String::from_utf8_lossy(&bytes).into_owned()
}

#[tokio::main]
async fn main() -> xkgat::Result<()> {
    let predictions: Vec<PredictionRecord> = ["Tianzi", "Anta", "Lining"]
        .iter()
        .enumerate()
        .map(|(i, brand)| PredictionRecord {
            head: format!("Item{i}"),
            relation: "brandIs".into(),
            tail: brand.to_string(),
            score: 1.5 + i as f64,
            source: Source::Model,
        })
        .collect();
    let dir = tempfile::tempdir().map_err(|e| xkgat::Error::Config(e.to_string()))?;
    let log = dir.path().join("decisions.jsonl");
    let state = Arc::new(Mutex::new(ReviewState::open(build_queue(predictions, Vec::new()), &log)?));
    let app = router(state.clone(), None);

    let page: serde_json::Value =
        serde_json::from_str(&request(&app, "GET", "/api/predictions?status=pending", "").await).expect("json");
    println!("{} pending", page["total"]);
    for (item, verdict) in page["items"].as_array().expect("items").iter().zip(["accept", "reject", "accept"]) {
        let body = serde_json::json!({
            "prediction_id": item["id"],
            "verdict": verdict,
            "reviewer": "demo",
            "elapsed_ms": 4200,
        });
        println!("{}", request(&app, "POST", "/api/decisions", &body.to_string()).await);
    }
    print!("export:\n{}", request(&app, "GET", "/api/export?format=tsv", "").await);
    println!("stats: {}", request(&app, "GET", "/api/stats", "").await);

    if std::env::args().nth(1).as_deref() == Some("serve") {
        serve(state, "127.0.0.1:8080", None).await?;
    }
    Ok(())
}
