//! HTTP API consumed by the viewer.
//!
//! | route | response |
//! |---|---|
//! | `GET /api/slides` | manifests of every slide under the root |
//! | `POST /api/jobs` `{slide_id, config}` | `{job_id}` (202) |
//! | `GET /api/jobs`, `GET /api/jobs/{id}` | job status |
//! | `GET /api/jobs/{id}/features\|staging\|burden` | stored JSON artifact |
//! | `GET /api/tiles/{slide}/{level}/{x}_{y}.png` | RGB tile |
//! | `GET /api/overlays/{job}/{kind}/{level}/{x}_{y}.png` | RGBA overlay tile |
//! | `GET /api/colormaps/{name}` | the 256-entry lookup |

use std::collections::HashMap;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::{Arc, Mutex};

use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::Deserialize;
use serde_json::{json, Value};
use slidescope_core::inference::ProbabilityMap;
use slidescope_core::io::read_json;
use slidescope_core::pyramid::{encode_png, RegionRequest};
use slidescope_core::uncertainty::{UncertaintyKind, UncertaintyMap};
use slidescope_core::Error;

use crate::config::JobConfig;
use crate::jobs::{JobRegistry, JobState, SlideStore, SubmitError};
use crate::pipeline::{HEATMAP, SEGMENTATION};
use crate::render::{encode_rgba_png, render_tile, Colormap, OverlayStyle, UNCERTAINTY_FULL_SCALE};

#[derive(Clone)]
pub struct AppState {
    jobs: Arc<JobRegistry>,
    maps: Arc<Mutex<HashMap<(String, String), Arc<ProbabilityMap>>>>,
}

impl AppState {
    pub fn new(slide_root: impl Into<PathBuf>, data_dir: impl Into<PathBuf>, workers: usize) -> Self {
        let slides = Arc::new(SlideStore::new(slide_root));
        AppState {
            jobs: Arc::new(JobRegistry::new(slides, data_dir, workers)),
            maps: Arc::default(),
        }
    }

    pub fn jobs(&self) -> &Arc<JobRegistry> {
        &self.jobs
    }
}

pub struct ApiError {
    status: StatusCode,
    body: Value,
}

impl ApiError {
    fn new(status: StatusCode, message: impl std::fmt::Display) -> Self {
        ApiError {
            status,
            body: json!({ "error": message.to_string() }),
        }
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::UnknownSlide(_) | Error::UnknownLevel { .. } => StatusCode::NOT_FOUND,
            Error::InvalidArgument(_) => StatusCode::BAD_REQUEST,
            Error::Io(io) if io.kind() == std::io::ErrorKind::NotFound => StatusCode::NOT_FOUND,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        ApiError::new(status, e)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

fn png(bytes: Vec<u8>) -> Response {
    ([(header::CONTENT_TYPE, "image/png")], bytes).into_response()
}

fn parse_tile(name: &str) -> ApiResult<(u32, u32)> {
    let bad = || ApiError::new(StatusCode::BAD_REQUEST, format!("tile name {name:?} is not x_y.png"));
    let stem = name.strip_suffix(".png").ok_or_else(bad)?;
    let (x, y) = stem.split_once('_').ok_or_else(bad)?;
    Ok((x.parse().map_err(|_| bad())?, y.parse().map_err(|_| bad())?))
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/api/slides", get(slides))
        .route("/api/jobs", post(submit).get(list_jobs))
        .route("/api/jobs/{id}", get(job_status))
        .route("/api/jobs/{id}/{artifact}", get(job_artifact))
        .route("/api/tiles/{slide}/{level}/{tile}", get(tile))
        .route("/api/overlays/{job}/{kind}/{level}/{tile}", get(overlay))
        .route("/api/colormaps/{name}", get(colormap))
        .with_state(state)
}

async fn slides(State(st): State<AppState>) -> ApiResult<Json<Value>> {
    let store = st.jobs.slides().clone();
    let manifests = tokio::task::spawn_blocking(move || store.manifests())
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e))??;
    Ok(Json(serde_json::to_value(manifests).map_err(Error::from)?))
}

#[derive(Deserialize)]
struct SubmitBody {
    slide_id: String,
    #[serde(default)]
    config: JobConfig,
}

async fn submit(State(st): State<AppState>, body: axum::body::Bytes) -> ApiResult<Response> {
    let body: SubmitBody = serde_json::from_slice(&body).map_err(|e| {
        ApiError {
            status: StatusCode::UNPROCESSABLE_ENTITY,
            body: json!({ "error": "invalid job config", "fields": [{ "field": "body", "message": e.to_string() }] }),
        }
    })?;
    match st.jobs.submit(&body.slide_id, body.config) {
        Ok(id) => Ok((StatusCode::ACCEPTED, Json(json!({ "job_id": id }))).into_response()),
        Err(SubmitError::UnknownSlide(s)) => Err(ApiError::new(StatusCode::NOT_FOUND, format!("unknown slide {s:?}"))),
        Err(SubmitError::Invalid(fields)) => Err(ApiError {
            status: StatusCode::UNPROCESSABLE_ENTITY,
            body: json!({ "error": "invalid job config", "fields": fields }),
        }),
        Err(SubmitError::Busy(running)) => Err(ApiError {
            status: StatusCode::CONFLICT,
            body: json!({ "error": "slide already has a running job", "running_job_id": running }),
        }),
        Err(SubmitError::Core(e)) => Err(e.into()),
    }
}

async fn list_jobs(State(st): State<AppState>) -> Json<Value> {
    Json(json!(st.jobs.list()))
}

fn unknown_job(id: &str) -> ApiError {
    ApiError::new(StatusCode::NOT_FOUND, format!("unknown job {id:?}"))
}

async fn job_status(State(st): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<Value>> {
    let s = st.jobs.status(&id).ok_or_else(|| unknown_job(&id))?;
    Ok(Json(serde_json::to_value(s).map_err(Error::from)?))
}

fn done_dir(st: &AppState, id: &str) -> ApiResult<PathBuf> {
    let status = st.jobs.status(id).ok_or_else(|| unknown_job(id))?;
    if status.state != JobState::Done {
        return Err(ApiError::new(StatusCode::CONFLICT, format!("job {id} is not done")));
    }
    Ok(st.jobs.job_dir(id).expect("status implies record"))
}

async fn job_artifact(State(st): State<AppState>, Path((id, artifact)): Path<(String, String)>) -> ApiResult<Json<Value>> {
    if !matches!(artifact.as_str(), "features" | "staging" | "burden") {
        return Err(ApiError::new(StatusCode::NOT_FOUND, format!("unknown artifact {artifact:?}")));
    }
    let dir = done_dir(&st, &id)?;
    let v: Value = read_json(dir.join(format!("{artifact}.json")))?;
    Ok(Json(v))
}

async fn tile(State(st): State<AppState>, Path((slide, level, name)): Path<(String, u32, String)>) -> ApiResult<Response> {
    let (tx, ty) = parse_tile(&name)?;
    let store = st.jobs.slides().clone();
    let bytes = tokio::task::spawn_blocking(move || -> slidescope_core::Result<Vec<u8>> {
        let pyr = store.get(&slide)?;
        let t = pyr.manifest().tile_size;
        let (cols, rows) = pyr.manifest().tile_grid(level)?;
        if tx >= cols || ty >= rows {
            return Err(Error::InvalidArgument(format!("tile {tx}_{ty} outside level {level}")));
        }
        let scale = 1i64 << level;
        let req = RegionRequest::new(level, tx as i64 * t as i64 * scale, ty as i64 * t as i64 * scale, t, t);
        encode_png(&pyr.read_region(&req)?)
    })
    .await
    .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e))?
    .map_err(|e| match e {
        Error::InvalidArgument(m) => ApiError::new(StatusCode::NOT_FOUND, m),
        e => e.into(),
    })?;
    Ok(png(bytes))
}

#[derive(Deserialize, Default)]
struct OverlayParams {
    threshold: Option<f32>,
    colormap: Option<String>,
}

fn load_map(st: &AppState, job: &str, kind: &str, dir: &std::path::Path) -> ApiResult<Arc<ProbabilityMap>> {
    let key = (job.to_string(), kind.to_string());
    if let Some(m) = st.maps.lock().unwrap().get(&key) {
        return Ok(m.clone());
    }
    let map = if kind == HEATMAP {
        ProbabilityMap::load(dir.join(HEATMAP))?
    } else {
        UncertaintyMap::load(dir.join(kind))?.map
    };
    let map = Arc::new(map);
    st.maps.lock().unwrap().insert(key, map.clone());
    Ok(map)
}

async fn overlay(
    State(st): State<AppState>,
    Path((job, kind, level, name)): Path<(String, String, u32, String)>,
    Query(params): Query<OverlayParams>,
) -> ApiResult<Response> {
    let (tx, ty) = parse_tile(&name)?;
    let dir = done_dir(&st, &job)?;
    let status = st.jobs.status(&job).ok_or_else(|| unknown_job(&job))?;
    let outputs = status.outputs.expect("done jobs carry outputs");
    if !outputs.kinds.iter().any(|k| k == &kind) {
        return Err(ApiError::new(StatusCode::NOT_FOUND, format!("job {job} has no {kind} overlay")));
    }
    let colormap: Colormap = params.colormap.as_deref().unwrap_or("jet").parse()?;
    if let Some(t) = params.threshold {
        if !t.is_finite() {
            return Err(ApiError::new(StatusCode::BAD_REQUEST, "threshold must be finite"));
        }
    }
    let map_kind = if kind == SEGMENTATION { HEATMAP } else { kind.as_str() };
    let style = if kind == SEGMENTATION {
        OverlayStyle::Threshold {
            threshold: params.threshold.unwrap_or(outputs.threshold),
        }
    } else {
        let full_scale = if UncertaintyKind::parse(&kind).is_some() { UNCERTAINTY_FULL_SCALE } else { 1.0 };
        OverlayStyle::Colormap { lut: colormap.lut(), full_scale }
    };
    let map = load_map(&st, &job, map_kind, &dir)?;
    let pyr = st.jobs.slides().get(&status.slide_id)?;
    let info = pyr.manifest().level(level)?;
    let dims = (info.width, info.height);
    let tile_size = pyr.manifest().tile_size;
    let (cols, rows) = pyr.manifest().tile_grid(level)?;
    if tx >= cols || ty >= rows {
        return Err(ApiError::new(StatusCode::NOT_FOUND, format!("tile {tx}_{ty} outside level {level}")));
    }
    let bytes = tokio::task::spawn_blocking(move || {
        encode_rgba_png(&render_tile(&map, &style, level, dims, (tx, ty), tile_size))
    })
    .await
    .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e))??;
    Ok(png(bytes))
}

async fn colormap(Path(name): Path<String>) -> ApiResult<Json<Value>> {
    let cm: Colormap = name.parse()?;
    Ok(Json(json!({ "name": cm.name(), "lut": cm.lut().to_vec() })))
}

/// Bind and serve until the process is stopped.
pub async fn serve(state: AppState, addr: SocketAddr) -> anyhow::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(state)).await?;
    Ok(())
}
