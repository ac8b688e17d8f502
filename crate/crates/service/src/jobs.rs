//! Job registry: submission, validation, bounded execution and status.

use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};
use slidescope_core::pyramid::{list_slides, SlidePyramid};
use slidescope_core::{Error, Result};
use tokio::sync::Semaphore;

use crate::config::{FieldError, JobConfig};
use crate::pipeline::{run_job, JobOutputs};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JobState {
    Queued,
    Running,
    Done,
    Failed,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct JobStatus {
    pub job_id: String,
    pub slide_id: String,
    pub config: JobConfig,
    pub state: JobState,
    pub progress: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub outputs: Option<JobOutputs>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failed_member: Option<usize>,
}

#[derive(Debug, thiserror::Error)]
pub enum SubmitError {
    #[error("unknown slide {0:?}")]
    UnknownSlide(String),
    #[error("invalid job config")]
    Invalid(Vec<FieldError>),
    #[error("slide already has running job {0}")]
    Busy(String),
    #[error(transparent)]
    Core(#[from] Error),
}

struct JobRecord {
    status: JobStatus,
    // Progress as f64 bits; non-negative floats order like their bits.
    progress: Arc<AtomicU64>,
    dir: PathBuf,
}

#[derive(Default)]
struct Inner {
    next_id: u64,
    jobs: BTreeMap<String, JobRecord>,
}

/// Slides under a root directory, opened lazily and shared between requests.
pub struct SlideStore {
    root: PathBuf,
    cache_tiles: usize,
    open: Mutex<HashMap<String, Arc<SlidePyramid>>>,
}

impl SlideStore {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        SlideStore {
            root: root.into(),
            cache_tiles: 256,
            open: Mutex::new(HashMap::new()),
        }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn manifests(&self) -> Result<Vec<slidescope_core::pyramid::Manifest>> {
        let listing = list_slides(&self.root)?;
        for w in &listing.warnings {
            log::warn!("skipping {}: {}", w.path.display(), w.message);
        }
        Ok(listing.slides.into_iter().map(|s| s.manifest).collect())
    }

    pub fn get(&self, slide_id: &str) -> Result<Arc<SlidePyramid>> {
        if let Some(p) = self.open.lock().unwrap().get(slide_id) {
            return Ok(p.clone());
        }
        let listing = list_slides(&self.root)?;
        let entry = listing
            .slides
            .into_iter()
            .find(|s| s.manifest.slide_id == slide_id)
            .ok_or_else(|| Error::UnknownSlide(slide_id.to_string()))?;
        let pyr = Arc::new(SlidePyramid::open_with_cache(&entry.dir, Some(self.cache_tiles))?);
        self.open
            .lock()
            .unwrap()
            .entry(slide_id.to_string())
            .or_insert(pyr.clone());
        Ok(pyr)
    }
}

pub struct JobRegistry {
    slides: Arc<SlideStore>,
    data_dir: PathBuf,
    pool: Arc<Semaphore>,
    inner: Mutex<Inner>,
}

impl JobRegistry {
    /// `workers` bounds how many jobs execute at once.
    pub fn new(slides: Arc<SlideStore>, data_dir: impl Into<PathBuf>, workers: usize) -> Self {
        JobRegistry {
            slides,
            data_dir: data_dir.into(),
            pool: Arc::new(Semaphore::new(workers.max(1))),
            inner: Mutex::new(Inner::default()),
        }
    }

    pub fn slides(&self) -> &Arc<SlideStore> {
        &self.slides
    }

    /// Validate and queue a job. Must be called inside a tokio runtime.
    pub fn submit(self: &Arc<Self>, slide_id: &str, config: JobConfig) -> std::result::Result<String, SubmitError> {
        let pyramid = match self.slides.get(slide_id) {
            Ok(p) => p,
            Err(Error::UnknownSlide(s)) => return Err(SubmitError::UnknownSlide(s)),
            Err(e) => return Err(e.into()),
        };
        let problems = config.field_errors();
        if !problems.is_empty() {
            return Err(SubmitError::Invalid(problems));
        }

        let mut inner = self.inner.lock().unwrap();
        if let Some(running) = inner.jobs.values().find(|j| {
            j.status.slide_id == slide_id && matches!(j.status.state, JobState::Queued | JobState::Running)
        }) {
            return Err(SubmitError::Busy(running.status.job_id.clone()));
        }
        inner.next_id += 1;
        let job_id = format!("job-{:06}", inner.next_id);
        let dir = self.data_dir.join(&job_id);
        let progress = Arc::new(AtomicU64::new(0f64.to_bits()));
        inner.jobs.insert(
            job_id.clone(),
            JobRecord {
                status: JobStatus {
                    job_id: job_id.clone(),
                    slide_id: slide_id.to_string(),
                    config: config.clone(),
                    state: JobState::Queued,
                    progress: 0.0,
                    outputs: None,
                    error: None,
                    failed_member: None,
                },
                progress: progress.clone(),
                dir: dir.clone(),
            },
        );
        drop(inner);

        let this = self.clone();
        let id = job_id.clone();
        tokio::spawn(async move {
            let Ok(_permit) = this.pool.clone().acquire_owned().await else { return };
            this.set_state(&id, JobState::Running);
            let worker = this.clone();
            let wid = id.clone();
            let outcome = tokio::task::spawn_blocking(move || {
                let report = |f: f64| {
                    progress.fetch_max(f.clamp(0.0, 1.0).to_bits(), Ordering::Relaxed);
                };
                let r = run_job(&pyramid, &config, &dir, &report);
                worker.finish(&wid, r);
            })
            .await;
            if let Err(e) = outcome {
                this.finish(&id, Err(Error::InvalidArgument(format!("job panicked: {e}"))));
            }
        });
        Ok(job_id)
    }

    fn set_state(&self, id: &str, state: JobState) {
        if let Some(j) = self.inner.lock().unwrap().jobs.get_mut(id) {
            j.status.state = state;
        }
    }

    fn finish(&self, id: &str, result: Result<JobOutputs>) {
        let mut inner = self.inner.lock().unwrap();
        let Some(j) = inner.jobs.get_mut(id) else { return };
        if matches!(j.status.state, JobState::Done | JobState::Failed) {
            return;
        }
        match result {
            Ok(out) => {
                j.progress.fetch_max(1f64.to_bits(), Ordering::Relaxed);
                j.status.state = JobState::Done;
                j.status.outputs = Some(out);
            }
            Err(e) => {
                log::error!("{id} failed: {e}");
                if let Error::Scoring { member, .. } | Error::MemberOpen { member, .. } = &e {
                    j.status.failed_member = Some(*member);
                }
                j.status.state = JobState::Failed;
                j.status.error = Some(e.to_string());
            }
        }
    }

    pub fn status(&self, id: &str) -> Option<JobStatus> {
        let inner = self.inner.lock().unwrap();
        inner.jobs.get(id).map(|j| {
            let mut s = j.status.clone();
            s.progress = f64::from_bits(j.progress.load(Ordering::Relaxed));
            s
        })
    }

    pub fn list(&self) -> Vec<JobStatus> {
        let ids: Vec<String> = self.inner.lock().unwrap().jobs.keys().cloned().collect();
        ids.iter().filter_map(|id| self.status(id)).collect()
    }

    /// Artifact directory of a job.
    pub fn job_dir(&self, id: &str) -> Option<PathBuf> {
        self.inner.lock().unwrap().jobs.get(id).map(|j| j.dir.clone())
    }
}
