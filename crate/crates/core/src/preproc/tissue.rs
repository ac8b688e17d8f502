use image::{Rgb, RgbImage};
use serde::{Deserialize, Serialize};

use super::hsv::rgb_to_hsv_pixel;
use super::median::median_blur;
use super::morphology::{apply_plan, MorphKernel, MorphOp, MorphStep};
use super::otsu::{histogram, otsu_threshold};
use crate::error::Result;
use crate::pyramid::{Manifest, SlidePyramid};
use crate::raster::{Mask, Plane};

/// Largest level dimension the automatic mask level may have.
pub const AUTO_MASK_MAX_DIM: u32 = 4096;

/// Binary tissue map at one pyramid level (`true` = tissue).
#[derive(Debug, Clone, PartialEq)]
pub struct TissueMask {
    pub slide_id: String,
    pub level: u32,
    /// Level-0 pixels per mask pixel, `2^level`.
    pub downsample: u32,
    pub mask: Mask,
}

impl TissueMask {
    pub fn new(slide_id: impl Into<String>, level: u32, mask: Mask) -> Self {
        TissueMask {
            slide_id: slide_id.into(),
            level,
            downsample: 1 << level,
            mask,
        }
    }

    pub fn width(&self) -> usize {
        self.mask.width()
    }

    pub fn height(&self) -> usize {
        self.mask.height()
    }

    /// Whether level-0 pixel `(x, y)` lies on tissue.
    pub fn contains_level0(&self, x: i64, y: i64) -> bool {
        let d = self.downsample as i64;
        self.mask
            .get_checked(x.div_euclid(d), y.div_euclid(d))
            .unwrap_or(false)
    }

    /// Nearest-neighbour resample onto a grid of `width x height` cells of
    /// `downsample` level-0 pixels each, sampling at cell centres.
    pub fn resample(&self, width: usize, height: usize, downsample: u32) -> Mask {
        let d = downsample as i64;
        Plane::from_fn(width, height, |x, y| {
            let cx = x as i64 * d + d / 2;
            let cy = y as i64 * d + d / 2;
            self.contains_level0(cx, cy)
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TissueMaskOptions {
    /// `None` picks the first level whose dimensions are both <= 4096.
    pub level: Option<u32>,
    pub black_fix: bool,
    pub value_ceiling: u8,
    pub blur_k: usize,
    pub morph_plan: Vec<MorphStep>,
}

impl Default for TissueMaskOptions {
    fn default() -> Self {
        TissueMaskOptions {
            level: None,
            black_fix: false,
            value_ceiling: 10,
            blur_k: 7,
            morph_plan: vec![
                MorphStep::new(MorphOp::Close, MorphKernel::square(5)),
                MorphStep::new(MorphOp::Open, MorphKernel::square(3)),
            ],
        }
    }
}

#[derive(Debug, Clone)]
pub struct TissueMaskResult {
    pub mask: TissueMask,
    pub threshold: u8,
    /// Otsu found a single saturation value (blank slide); the mask is empty.
    pub degenerate: bool,
}

/// First level whose width and height are both within [`AUTO_MASK_MAX_DIM`].
pub fn default_mask_level(manifest: &Manifest) -> u32 {
    manifest
        .levels
        .iter()
        .find(|l| l.width <= AUTO_MASK_MAX_DIM && l.height <= AUTO_MASK_MAX_DIM)
        .map(|l| l.level)
        .unwrap_or(manifest.levels.len() as u32 - 1)
}

/// Turn near-black pixels (every channel `<= value_ceiling`) white.
pub fn replace_black(img: &RgbImage, value_ceiling: u8) -> RgbImage {
    let mut out = img.clone();
    for p in out.pixels_mut() {
        if p.0.iter().all(|&c| c <= value_ceiling) {
            *p = Rgb([255, 255, 255]);
        }
    }
    out
}

/// Saturation quantised to 0..=255.
fn saturation_plane(img: &RgbImage) -> Plane<u8> {
    Plane::from_fn(img.width() as usize, img.height() as usize, |x, y| {
        let s = rgb_to_hsv_pixel(img.get_pixel(x as u32, y as u32).0).s;
        (s * 255.0).round() as u8
    })
}

/// Tissue mask from an in-memory RGB raster (one pyramid level).
pub fn tissue_mask_from_image(
    slide_id: &str,
    level: u32,
    img: &RgbImage,
    opts: &TissueMaskOptions,
) -> Result<TissueMaskResult> {
    let prepared = if opts.black_fix {
        replace_black(img, opts.value_ceiling)
    } else {
        img.clone()
    };
    let blurred = median_blur(&prepared, opts.blur_k)?;
    let sat = saturation_plane(&blurred);
    let (w, h) = sat.dims();
    let otsu = otsu_threshold(&histogram(sat.as_slice().iter().copied()));
    let (threshold, degenerate) = match otsu {
        Some(t) => (t.threshold, t.degenerate),
        None => (0, true),
    };
    if degenerate {
        log::warn!("{slide_id}: saturation histogram is degenerate, tissue mask is empty");
        return Ok(TissueMaskResult {
            mask: TissueMask::new(slide_id, level, Mask::filled(w, h, false)),
            threshold,
            degenerate,
        });
    }
    let raw = sat.map(|s| s > threshold);
    let mask = apply_plan(&raw, &opts.morph_plan);
    Ok(TissueMaskResult {
        mask: TissueMask::new(slide_id, level, mask),
        threshold,
        degenerate,
    })
}

pub fn tissue_mask(pyramid: &SlidePyramid, opts: &TissueMaskOptions) -> Result<TissueMaskResult> {
    let level = opts
        .level
        .unwrap_or_else(|| default_mask_level(pyramid.manifest()));
    let img = pyramid.read_level(level)?;
    tissue_mask_from_image(pyramid.slide_id(), level, &img, opts)
}
