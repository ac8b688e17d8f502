use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::grid::{build_grid, patch_origin};
use crate::error::{Error, Result};
use crate::preproc::TissueMask;
use crate::raster::{IntegralMask, Mask};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PatchLabel {
    NonTumour,
    Tumour,
}

impl PatchLabel {
    pub fn name(self) -> &'static str {
        match self {
            PatchLabel::Tumour => "tumour",
            PatchLabel::NonTumour => "non_tumour",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelledCoord {
    pub slide_id: String,
    pub x: i64,
    pub y: i64,
    pub label: PatchLabel,
    pub fold: u32,
}

/// Tumour iff at least one annotated pixel falls inside the patch window.
pub fn label_patch(annotation: &Mask, centre: (i64, i64), patch_size: u32) -> PatchLabel {
    let (x0, y0) = patch_origin(centre, patch_size);
    let p = patch_size as i64;
    let tumour = (y0.max(0)..(y0 + p).min(annotation.height() as i64)).any(|y| {
        (x0.max(0)..(x0 + p).min(annotation.width() as i64))
            .any(|x| annotation.get(x as usize, y as usize))
    });
    if tumour {
        PatchLabel::Tumour
    } else {
        PatchLabel::NonTumour
    }
}

fn label_indexed(index: &IntegralMask, centre: (i64, i64), patch_size: u32) -> PatchLabel {
    let (x0, y0) = patch_origin(centre, patch_size);
    let p = patch_size as i64;
    if index.count(x0, y0, x0 + p, y0 + p) > 0 {
        PatchLabel::Tumour
    } else {
        PatchLabel::NonTumour
    }
}

/// One slide available for training-coordinate extraction.
#[derive(Debug, Clone)]
pub struct TrainingSlide {
    pub slide_id: String,
    pub dims: (u32, u32),
    pub tissue: TissueMask,
    /// Level-0 tumour annotation; pixels beyond its extent count as negative.
    pub annotation: Mask,
    pub fold: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplingConfig {
    pub patch_size: u32,
    /// Spacing of the candidate-centre lattice.
    pub stride: u32,
    pub per_class: usize,
    pub seed: u64,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        SamplingConfig {
            patch_size: 256,
            stride: 128,
            per_class: 1000,
            seed: 0,
        }
    }
}

/// Draw `per_class` tumour and `per_class` non-tumour patch centres.
///
/// Candidates are the tissue grid centres of every slide. Each class is
/// sampled uniformly from its pooled candidates, without replacement when
/// enough exist and with replacement otherwise.
pub fn sample_training_set(
    slides: &[TrainingSlide],
    cfg: &SamplingConfig,
) -> Result<Vec<LabelledCoord>> {
    let per_slide: Vec<Vec<((i64, i64), PatchLabel)>> = slides
        .par_iter()
        .map(|s| -> Result<_> {
            let grid = build_grid(&s.tissue, s.dims, cfg.patch_size, cfg.stride)?;
            let index = IntegralMask::new(&s.annotation);
            Ok(grid
                .centres
                .iter()
                .map(|&c| (c, label_indexed(&index, c, cfg.patch_size)))
                .collect())
        })
        .collect::<Result<_>>()?;

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut out = Vec::with_capacity(2 * cfg.per_class);
    for class in [PatchLabel::Tumour, PatchLabel::NonTumour] {
        if cfg.per_class == 0 {
            continue;
        }
        let pool: Vec<(usize, (i64, i64))> = per_slide
            .iter()
            .enumerate()
            .flat_map(|(i, cands)| {
                cands
                    .iter()
                    .filter(move |(_, l)| *l == class)
                    .map(move |(c, _)| (i, *c))
            })
            .collect();
        if pool.is_empty() {
            return Err(Error::NoSamples(class.name().into()));
        }
        let picks: Vec<usize> = if pool.len() >= cfg.per_class {
            let mut v = index::sample(&mut rng, pool.len(), cfg.per_class).into_vec();
            v.sort_unstable();
            v
        } else {
            log::warn!(
                "only {} {} candidates for {} requested; sampling with replacement",
                pool.len(),
                class.name(),
                cfg.per_class
            );
            (0..cfg.per_class)
                .map(|_| rng.random_range(0..pool.len()))
                .collect()
        };
        for i in picks {
            let (slide, (x, y)) = pool[i];
            out.push(LabelledCoord {
                slide_id: slides[slide].slide_id.clone(),
                x,
                y,
                label: class,
                fold: slides[slide].fold,
            });
        }
    }
    Ok(out)
}

/// Offset `centre` by a uniform integer point of the closed disk of the given
/// radius, then clamp into `[0, width) x [0, height)`.
pub fn perturb<R: Rng + ?Sized>(
    centre: (i64, i64),
    radius: u32,
    bounds: (u32, u32),
    rng: &mut R,
) -> (i64, i64) {
    let r = radius as i64;
    let (dx, dy) = loop {
        let dx = rng.random_range(-r..=r);
        let dy = rng.random_range(-r..=r);
        if dx * dx + dy * dy <= r * r {
            break (dx, dy);
        }
    };
    (
        (centre.0 + dx).clamp(0, bounds.0 as i64 - 1),
        (centre.1 + dy).clamp(0, bounds.1 as i64 - 1),
    )
}
