//! One segmentation job from slide to artifacts.
//!
//! Artifacts written into the job directory:
//!
//! | file | content |
//! |---|---|
//! | `tissue.png` + `.json` | tissue mask |
//! | `heatmap.{f32,json,png}` | ensemble probability map |
//! | `member_{i}.{f32,json,png}` | per-member maps |
//! | `segmentation.png` | heatmap thresholded at the job threshold |
//! | `aleatoric.*`, `epistemic.*`, `combined.*` | requested uncertainty maps |
//! | `features.json`, `features.csv` | the 32 slide features and region lists |
//! | `staging.json` | slide label |
//! | `burden.json`, `whole.png` | tumour burden |

use std::path::Path;

use serde::{Deserialize, Serialize};
use slidescope_core::analysis::{extract_features, tumor_burden, whole_tumor_approx, FEATURE_NAMES};
use slidescope_core::inference::{ensemble_average, run_segmentation, threshold_map, ProbabilityMap};
use slidescope_core::io::{atomic_write, atomic_write_json, read_json, write_mask_png, write_tissue_mask};
use slidescope_core::preproc::tissue_mask;
use slidescope_core::pyramid::SlidePyramid;
use slidescope_core::sampler::build_grid;
use slidescope_core::scorer::ensemble_spec;
use slidescope_core::staging::{classify_rule, ensemble_classify, rf_predict, Forest, SlideLabel};
use slidescope_core::uncertainty::{aleatoric_maps, combined_map, epistemic_map, UncertaintyKind, UncertaintyMap};
use slidescope_core::{Error, Result};

use crate::config::JobConfig;

pub const HEATMAP: &str = "heatmap";
pub const SEGMENTATION: &str = "segmentation";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Staging {
    pub label: SlideLabel,
    pub method: String,
    pub largest_major_axis_mm: f64,
    pub regions_p90: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub forest_votes: Vec<SlideLabel>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BurdenReport {
    pub burden: Option<f64>,
    pub viable_area_mm2: f64,
    pub whole_area_mm2: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

/// Overlay kinds present for a finished job.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobOutputs {
    pub kinds: Vec<String>,
    pub threshold: f32,
}

impl JobOutputs {
    pub fn load(dir: &Path) -> Result<Self> {
        read_json(dir.join("outputs.json"))
    }
}

/// One-row CSV: `slide_id` then the named feature columns.
pub fn features_csv(slide_id: &str, values: &[f64]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["slide_id"];
    header.extend(FEATURE_NAMES);
    w.write_record(&header)?;
    let mut row = vec![slide_id.to_string()];
    row.extend(values.iter().map(|v| v.to_string()));
    w.write_record(&row)?;
    w.into_inner().map_err(|e| Error::Io(e.into_error()))
}

/// Run segmentation, uncertainty, features, staging and burden for one slide.
/// `progress` receives a monotone fraction in `[0, 1]`.
pub fn run_job(
    pyramid: &SlidePyramid,
    cfg: &JobConfig,
    out: &Path,
    progress: &(dyn Fn(f64) + Sync),
) -> Result<JobOutputs> {
    if let Some(e) = cfg.field_errors().first() {
        return Err(Error::InvalidArgument(format!("{}: {}", e.field, e.message)));
    }
    std::fs::create_dir_all(out)?;
    let slide_id = pyramid.slide_id().to_string();
    let mpp = pyramid.manifest().mpp();

    let tissue = tissue_mask(pyramid, &cfg.mask)?;
    if tissue.degenerate {
        log::warn!("{slide_id}: blank slide, tissue mask is empty");
    }
    let tissue = tissue.mask;
    write_tissue_mask(out.join("tissue.png"), &tissue)?;

    let ensemble = ensemble_spec(&cfg.scorers)?;
    let want_al = cfg.wants(UncertaintyKind::Aleatoric) || cfg.wants(UncertaintyKind::Combined);
    let passes = if want_al { 2.0 } else { 1.0 };
    let pass_progress = |pass: f64| move |done: usize, total: usize| {
        let f = if total == 0 { 1.0 } else { done as f64 / total as f64 };
        progress((pass + f) / passes);
    };

    let seg_cb = pass_progress(0.0);
    let seg = run_segmentation(pyramid, &tissue, &ensemble, &cfg.inference, Some(&seg_cb))?;
    let mut kinds = vec![HEATMAP.to_string(), SEGMENTATION.to_string()];
    seg.ensemble.save(out.join(HEATMAP))?;
    for (i, m) in seg.members.iter().enumerate() {
        m.save(out.join(format!("member_{i}")))?;
    }
    let threshold = cfg.inference.threshold;
    let viable = threshold_map(&seg.ensemble, threshold);
    if !viable.is_empty() {
        write_mask_png(out.join("segmentation.png"), &viable)?;
    }

    let mut aleatoric: Vec<UncertaintyMap> = Vec::new();
    if want_al {
        let grid = build_grid(&tissue, pyramid.dimensions(), cfg.inference.patch_size, cfg.inference.stride)?;
        let al_cb = pass_progress(1.0);
        aleatoric = aleatoric_maps(pyramid, &grid, &ensemble, &cfg.inference, &cfg.tta_set(), Some(&al_cb))?;
    }
    if cfg.wants(UncertaintyKind::Aleatoric) {
        let maps: Vec<ProbabilityMap> = aleatoric.iter().map(|a| a.map.clone()).collect();
        let mean = UncertaintyMap {
            kind: UncertaintyKind::Aleatoric,
            map: ensemble_average(&maps)?,
        };
        mean.save(out.join("aleatoric"))?;
        kinds.push("aleatoric".into());
    }
    let needs_ep = cfg.wants(UncertaintyKind::Epistemic) || cfg.wants(UncertaintyKind::Combined);
    if needs_ep {
        let ep = epistemic_map(&seg.members)?;
        if cfg.wants(UncertaintyKind::Epistemic) {
            ep.save(out.join("epistemic"))?;
            kinds.push("epistemic".into());
        }
        if cfg.wants(UncertaintyKind::Combined) {
            combined_map(&aleatoric, &ep, cfg.combine)?.save(out.join("combined"))?;
            kinds.push("combined".into());
        }
    }

    let feats = extract_features(&seg.ensemble, &tissue, mpp, &cfg.features)?;
    atomic_write_json(out.join("features.json"), &feats)?;
    atomic_write(out.join("features.csv"), &features_csv(&slide_id, &feats.features.values)?)?;

    let largest = slidescope_core::analysis::largest_region(&feats.regions_p90);
    let mut staging = Staging {
        label: classify_rule(&feats.regions_p90),
        method: "size_rule".into(),
        largest_major_axis_mm: largest.map_or(0.0, |r| r.major_axis_mm),
        regions_p90: feats.regions_p90.len(),
        forest_votes: Vec::new(),
    };
    if !cfg.forests.is_empty() {
        let mut votes = Vec::new();
        for path in &cfg.forests {
            let forest: Forest = read_json(path)?;
            votes.push(rf_predict(&forest, &feats.features.values)?.0);
        }
        staging.label = ensemble_classify(&votes)?;
        staging.method = "forest_ensemble".into();
        staging.forest_votes = votes;
    }
    atomic_write_json(out.join("staging.json"), &staging)?;

    let pitch_um = seg.ensemble.downsample as f64 * mpp;
    let tissue_map = tissue.resample(seg.ensemble.width(), seg.ensemble.height(), seg.ensemble.downsample);
    let report = if viable.any() {
        let whole = whole_tumor_approx(&viable, &tissue_map, &cfg.burden)?;
        write_mask_png(out.join("whole.png"), &whole)?;
        match tumor_burden(&viable, &whole, pitch_um) {
            Ok(b) => BurdenReport {
                burden: Some(b.burden),
                viable_area_mm2: b.viable_area_mm2,
                whole_area_mm2: b.whole_area_mm2,
                note: None,
            },
            Err(e) => BurdenReport {
                burden: None,
                viable_area_mm2: 0.0,
                whole_area_mm2: 0.0,
                note: Some(e.to_string()),
            },
        }
    } else {
        BurdenReport {
            burden: None,
            viable_area_mm2: 0.0,
            whole_area_mm2: 0.0,
            note: Some("no viable tumour above threshold".into()),
        }
    };
    atomic_write_json(out.join("burden.json"), &report)?;

    let outputs = JobOutputs {
        kinds,
        threshold,
    };
    atomic_write_json(out.join("outputs.json"), &outputs)?;
    progress(1.0);
    Ok(outputs)
}
