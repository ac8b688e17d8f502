//! Overlap-stitched heatmaps from an ensemble of patch scorers, and
//! thresholding to segmentation masks.

mod stitch;

use std::path::Path;

use serde::{Deserialize, Serialize};

pub use stitch::{merge_partials, BatchOutput, Partial, ProgressFn, FIXED_ONE};
pub(crate) use stitch::StitchJob;

use crate::error::{Error, Result};
use crate::io::{read_f32_plane, write_f32_plane, PlaneSidecar};
use crate::preproc::TissueMask;
use crate::pyramid::SlidePyramid;
use crate::raster::{ensure_same_dims, Mask, Plane};
use crate::sampler::{build_grid, SampleGrid};
use crate::scorer::EnsembleHandle;

/// Slides up to this size on both axes get full-resolution heatmaps by default.
pub const FULL_RES_MAX_DIM: u32 = 4096;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InferenceConfig {
    pub patch_size: u32,
    pub stride: u32,
    pub batch_size: usize,
    /// Level-0 pixels per heatmap pixel; `None` picks by slide size.
    pub downsample: Option<u32>,
    pub threshold: f32,
    /// Worker threads; 0 uses the available parallelism.
    pub workers: usize,
}

impl Default for InferenceConfig {
    fn default() -> Self {
        InferenceConfig {
            patch_size: 1024,
            stride: 512,
            batch_size: 16,
            downsample: None,
            threshold: 0.5,
            workers: 0,
        }
    }
}

impl InferenceConfig {
    /// Field-by-field problems, empty when valid.
    pub fn problems(&self) -> Vec<(&'static str, String)> {
        let mut out = Vec::new();
        if self.patch_size == 0 {
            out.push(("patch_size", "must be positive".to_string()));
        }
        if self.stride == 0 {
            out.push(("stride", "must be positive".to_string()));
        } else if self.stride > self.patch_size {
            out.push((
                "stride",
                format!("{} exceeds patch_size {}", self.stride, self.patch_size),
            ));
        }
        if self.batch_size == 0 {
            out.push(("batch_size", "must be positive".to_string()));
        }
        if let Some(d) = self.downsample {
            if d == 0 {
                out.push(("downsample", "must be positive".to_string()));
            } else if self.stride > 0 && self.stride % d != 0 {
                out.push(("downsample", format!("{d} does not divide stride {}", self.stride)));
            }
        }
        if !(0.0..=1.0).contains(&self.threshold) {
            out.push(("threshold", format!("{} outside [0, 1]", self.threshold)));
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        match self.problems().first() {
            None => Ok(()),
            Some((field, msg)) => Err(Error::invalid(format!("{field}: {msg}"))),
        }
    }

    pub fn resolved_downsample(&self, dims: (u32, u32)) -> u32 {
        self.downsample.unwrap_or_else(|| default_downsample(dims))
    }

    pub fn resolved_workers(&self) -> usize {
        if self.workers > 0 {
            self.workers
        } else {
            std::thread::available_parallelism().map_or(1, |n| n.get())
        }
    }
}

/// 1 for slides within 4096 on both axes, else 8.
pub fn default_downsample(dims: (u32, u32)) -> u32 {
    if dims.0 <= FULL_RES_MAX_DIM && dims.1 <= FULL_RES_MAX_DIM {
        1
    } else {
        8
    }
}

/// Stitched per-pixel values at `downsample`; NaN where `coverage` is 0.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityMap {
    pub slide_id: String,
    pub downsample: u32,
    pub values: Plane<f32>,
    pub coverage: Plane<u32>,
}

impl ProbabilityMap {
    /// A map with no coverage anywhere.
    pub fn empty(slide_id: &str, downsample: u32, width: usize, height: usize) -> Self {
        ProbabilityMap {
            slide_id: slide_id.to_string(),
            downsample,
            values: Plane::filled(width, height, f32::NAN),
            coverage: Plane::filled(width, height, 0),
        }
    }

    /// Wrap a value plane, treating NaN as uncovered and anything else as covered once.
    pub fn from_values(slide_id: &str, downsample: u32, values: Plane<f32>) -> Self {
        let coverage = values.map(|v| u32::from(!v.is_nan()));
        ProbabilityMap {
            slide_id: slide_id.to_string(),
            downsample,
            values,
            coverage,
        }
    }

    pub fn width(&self) -> usize {
        self.values.width()
    }

    pub fn height(&self) -> usize {
        self.values.height()
    }

    pub fn dims(&self) -> (usize, usize) {
        self.values.dims()
    }

    pub fn value(&self, x: usize, y: usize) -> Option<f32> {
        (self.coverage.get(x, y) > 0).then(|| self.values.get(x, y))
    }

    pub fn covered(&self) -> Mask {
        self.coverage.map(|c| c > 0)
    }

    /// Values with uncovered pixels set to 0.
    pub fn filled(&self) -> Plane<f32> {
        self.values.map(|v| if v.is_nan() { 0.0 } else { v })
    }

    pub fn sidecar(&self, kind: Option<&str>) -> PlaneSidecar {
        PlaneSidecar {
            slide_id: self.slide_id.clone(),
            downsample: self.downsample,
            width: self.width(),
            height: self.height(),
            kind: kind.map(str::to_string),
        }
    }

    /// Writes `<base>.f32`, `<base>.json` and an 8-bit `<base>.png` preview.
    pub fn save(&self, base: impl AsRef<Path>) -> Result<()> {
        write_f32_plane(base, &self.values, &self.sidecar(None), 1.0)
    }

    pub fn load(base: impl AsRef<Path>) -> Result<Self> {
        let (values, side) = read_f32_plane(base)?;
        Ok(ProbabilityMap::from_values(&side.slide_id, side.downsample, values))
    }
}

/// Pixels with coverage and value `>= t`.
pub fn threshold_map(map: &ProbabilityMap, t: f32) -> Mask {
    Plane::from_fn(map.width(), map.height(), |x, y| {
        map.coverage.get(x, y) > 0 && map.values.get(x, y) >= t
    })
}

/// Per-pixel mean of member maps, defined only where every member has coverage.
pub fn ensemble_average(members: &[ProbabilityMap]) -> Result<ProbabilityMap> {
    let Some(first) = members.first() else {
        return Err(Error::Empty("no member maps to average".into()));
    };
    for m in &members[1..] {
        ensure_same_dims(first.dims(), m.dims())?;
        if m.downsample != first.downsample {
            return Err(Error::invalid("member maps disagree on downsample"));
        }
    }
    let (w, h) = first.dims();
    let mut values = Plane::filled(w, h, f32::NAN);
    let mut coverage = Plane::filled(w, h, 0u32);
    for y in 0..h {
        for x in 0..w {
            let min_cov = members.iter().map(|m| m.coverage.get(x, y)).min().unwrap_or(0);
            if min_cov == 0 {
                continue;
            }
            let sum: f64 = members.iter().map(|m| m.values.get(x, y) as f64).sum();
            values.set(x, y, (sum / members.len() as f64) as f32);
            coverage.set(x, y, min_cov);
        }
    }
    Ok(ProbabilityMap {
        slide_id: first.slide_id.clone(),
        downsample: first.downsample,
        values,
        coverage,
    })
}

#[derive(Debug, Clone)]
pub struct SegmentationResult {
    pub grid: SampleGrid,
    pub members: Vec<ProbabilityMap>,
    pub ensemble: ProbabilityMap,
}

/// Build the grid from `mask`, then stitch every member's heatmap.
pub fn run_segmentation(
    pyramid: &SlidePyramid,
    mask: &TissueMask,
    ensemble: &EnsembleHandle,
    cfg: &InferenceConfig,
    progress: Option<ProgressFn<'_>>,
) -> Result<SegmentationResult> {
    cfg.validate()?;
    let grid = build_grid(mask, pyramid.dimensions(), cfg.patch_size, cfg.stride)?;
    run_on_grid(pyramid, grid, ensemble, cfg, progress)
}

pub fn run_on_grid(
    pyramid: &SlidePyramid,
    grid: SampleGrid,
    ensemble: &EnsembleHandle,
    cfg: &InferenceConfig,
    progress: Option<ProgressFn<'_>>,
) -> Result<SegmentationResult> {
    cfg.validate()?;
    if grid.patch_size != cfg.patch_size {
        return Err(Error::invalid("grid patch size differs from the config"));
    }
    let origins: Vec<(i64, i64)> = grid.origins().collect();
    let job = StitchJob {
        pyramid,
        origins: &origins,
        patch_size: cfg.patch_size,
        downsample: cfg.resolved_downsample(pyramid.dimensions()),
        batch_size: cfg.batch_size,
        workers: cfg.resolved_workers(),
        outputs: ensemble.len(),
    };
    let partials = job.run(progress, |batch| {
        ensemble
            .members()
            .iter()
            .enumerate()
            .map(|(i, m)| m.score(batch).map(|out| out.probs).map_err(|e| (i, e)))
            .collect()
    })?;
    let (w, h) = job.map_dims();
    let members = partials
        .iter()
        .map(|p| merge_partials(pyramid.slide_id(), job.downsample, w, h, p))
        .collect::<Result<Vec<_>>>()?;
    let ensemble_map = ensemble_average(&members)?;
    Ok(SegmentationResult {
        grid,
        members,
        ensemble: ensemble_map,
    })
}
