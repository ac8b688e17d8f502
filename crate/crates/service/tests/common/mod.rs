#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use serde_json::Value;
use slidescope_core::pyramid::SlidePyramid;
use slidescope_testkit::synth_slide;
use tower::ServiceExt;

pub struct Response {
    pub status: StatusCode,
    pub content_type: Option<String>,
    pub body: Vec<u8>,
}

impl Response {
    pub fn json(&self) -> Value {
        serde_json::from_slice(&self.body).unwrap_or_else(|e| {
            panic!("body is not JSON ({e}): {}", String::from_utf8_lossy(&self.body))
        })
    }
}

pub async fn send(app: &Router, method: &str, uri: &str, body: Option<Value>) -> Response {
    let req = Request::builder().method(method).uri(uri);
    let req = match body {
        Some(v) => req
            .header("content-type", "application/json")
            .body(Body::from(serde_json::to_vec(&v).unwrap())),
        None => req.body(Body::empty()),
    }
    .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let content_type = resp
        .headers()
        .get("content-type")
        .map(|v| v.to_str().unwrap().to_string());
    let body = axum::body::to_bytes(resp.into_body(), usize::MAX).await.unwrap().to_vec();
    Response {
        status,
        content_type,
        body,
    }
}

pub async fn get(app: &Router, uri: &str) -> Response {
    send(app, "GET", uri, None).await
}

/// Poll until the job leaves queued/running; panics after `limit`.
pub async fn wait_job(app: &Router, id: &str, limit: Duration) -> Value {
    let start = Instant::now();
    let mut last = -1.0;
    loop {
        let s = get(app, &format!("/api/jobs/{id}")).await.json();
        let p = s["progress"].as_f64().unwrap();
        assert!(p >= last, "progress went backwards: {last} -> {p}");
        last = p;
        match s["state"].as_str().unwrap() {
            "done" | "failed" => return s,
            _ => {}
        }
        assert!(start.elapsed() < limit, "job {id} still {} after {limit:?}", s["state"]);
        tokio::time::sleep(Duration::from_millis(10)).await;
    }
}

/// Two synthetic slides, `alpha` and `beta`, written as pyramids under `root`.
pub fn write_fixture_root(root: &Path, size: u32, tile: u32) -> Vec<PathBuf> {
    ["alpha", "beta"]
        .iter()
        .enumerate()
        .map(|(i, id)| {
            let s = synth_slide(40 + i as u64, size, 2);
            let dir = root.join(id);
            SlidePyramid::build(*id, &s.image, tile, (0.25, 0.25))
                .unwrap()
                .write(&dir)
                .unwrap();
            dir
        })
        .collect()
}

/// All artifact files of a job directory, sorted by name.
pub fn artifacts(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (
                e.file_name().to_string_lossy().into_owned(),
                std::fs::read(e.path()).unwrap(),
            )
        })
        .collect();
    out.sort();
    out
}

pub fn decode_rgba(bytes: &[u8]) -> image::RgbaImage {
    image::load_from_memory(bytes).unwrap().to_rgba8()
}
