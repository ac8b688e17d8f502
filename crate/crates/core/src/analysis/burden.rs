use serde::{Deserialize, Serialize};

use super::components::fill_holes;
use super::hull::convex_hull_mask;
use crate::error::{Error, Result};
use crate::preproc::{dilate, MorphKernel, MorphOp, morphology};
use crate::raster::Mask;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BurdenPlan {
    pub close_size: u32,
    pub open_size: u32,
    pub tissue_dilation: u32,
}

impl Default for BurdenPlan {
    fn default() -> Self {
        BurdenPlan {
            close_size: 20,
            open_size: 5,
            tissue_dilation: 20,
        }
    }
}

/// Whole-tumour region from viable tumour: close, open, fill holes, convex
/// hull, then clip to the dilated tissue. All masks share one grid.
///
/// If opening erases every pixel the closed mask is used instead, so small
/// but non-empty viable regions still yield a hull.
pub fn whole_tumor_approx(viable: &Mask, tissue: &Mask, plan: &BurdenPlan) -> Result<Mask> {
    if viable.dims() != tissue.dims() {
        return Err(Error::ShapeMismatch {
            expected: viable.dims(),
            actual: tissue.dims(),
        });
    }
    if !viable.any() {
        return Err(Error::Empty("viable tumour mask is empty; burden is undefined".into()));
    }
    let closed = morphology(viable, MorphOp::Close, MorphKernel::square(plan.close_size));
    let opened = morphology(&closed, MorphOp::Open, MorphKernel::square(plan.open_size));
    let base = if opened.any() { opened } else { closed };
    let hull = convex_hull_mask(&fill_holes(&base))?;
    hull.and(&dilate(tissue, MorphKernel::square(plan.tissue_dilation)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BurdenResult {
    pub viable_px: usize,
    pub whole_px: usize,
    pub viable_area_mm2: f64,
    pub whole_area_mm2: f64,
    pub burden: f64,
}

/// `|viable ∩ whole| / |whole|`; `pitch_um` is the map pixel size in microns.
pub fn tumor_burden(viable: &Mask, whole: &Mask, pitch_um: f64) -> Result<BurdenResult> {
    let inside = viable.and(whole)?.count();
    let whole_px = whole.count();
    if whole_px == 0 {
        return Err(Error::Empty("whole tumour region is empty".into()));
    }
    let px_mm2 = (pitch_um / 1000.0).powi(2);
    Ok(BurdenResult {
        viable_px: inside,
        whole_px,
        viable_area_mm2: inside as f64 * px_mm2,
        whole_area_mm2: whole_px as f64 * px_mm2,
        burden: inside as f64 / whole_px as f64,
    })
}
