use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::preproc::TissueMask;
use crate::raster::IntegralMask;

/// Patch centres in level-0 coordinates, row-major by `(y, x)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleGrid {
    pub slide_id: String,
    pub centres: Vec<(i64, i64)>,
    pub patch_size: u32,
    pub stride: u32,
}

impl SampleGrid {
    pub fn len(&self) -> usize {
        self.centres.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centres.is_empty()
    }

    /// Top-left corners of every patch.
    pub fn origins(&self) -> impl Iterator<Item = (i64, i64)> + '_ {
        self.centres
            .iter()
            .map(move |&c| patch_origin(c, self.patch_size))
    }
}

/// Top-left of the centre-anchored window; odd sizes put the extra pixel on
/// the right and bottom.
#[inline]
pub fn patch_origin(centre: (i64, i64), patch_size: u32) -> (i64, i64) {
    let half = (patch_size / 2) as i64;
    (centre.0 - half, centre.1 - half)
}

#[inline]
pub fn patch_centre(origin: (i64, i64), patch_size: u32) -> (i64, i64) {
    let half = (patch_size / 2) as i64;
    (origin.0 + half, origin.1 + half)
}

/// Patch top-left positions along one axis: `0, stride, 2*stride, ...` until
/// a patch reaches the far edge.
pub fn axis_positions(extent: u32, patch_size: u32, stride: u32) -> Vec<i64> {
    let count = if extent <= patch_size {
        1
    } else {
        (extent - patch_size).div_ceil(stride) + 1
    };
    (0..count as i64).map(|i| i * stride as i64).collect()
}

/// Uniform patch grid over the slide, keeping patches that overlap at least
/// one tissue pixel.
pub fn build_grid(
    mask: &TissueMask,
    level0_dims: (u32, u32),
    patch_size: u32,
    stride: u32,
) -> Result<SampleGrid> {
    if patch_size == 0 || stride == 0 {
        return Err(Error::invalid("patch size and stride must be positive"));
    }
    let index = IntegralMask::new(&mask.mask);
    let d = mask.downsample as i64;
    let xs = axis_positions(level0_dims.0, patch_size, stride);
    let ys = axis_positions(level0_dims.1, patch_size, stride);
    let p = patch_size as i64;
    let mut centres = Vec::new();
    for &y0 in &ys {
        for &x0 in &xs {
            let hits = index.count(
                x0.div_euclid(d),
                y0.div_euclid(d),
                (x0 + p + d - 1).div_euclid(d),
                (y0 + p + d - 1).div_euclid(d),
            );
            if hits > 0 {
                centres.push(patch_centre((x0, y0), patch_size));
            }
        }
    }
    Ok(SampleGrid {
        slide_id: mask.slide_id.clone(),
        centres,
        patch_size,
        stride,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::Mask;

    fn full(w: usize, h: usize, level: u32) -> TissueMask {
        TissueMask::new("s", level, Mask::filled(w, h, true))
    }

    #[test]
    fn full_tissue_grid_counts() {
        let g = build_grid(&full(1024, 1024, 0), (1024, 1024), 256, 256).unwrap();
        assert_eq!(g.len(), 16);
        assert_eq!(g.centres[0], (128, 128));
        assert_eq!(g.centres[15], (896, 896));
        let g = build_grid(&full(1024, 1024, 0), (1024, 1024), 256, 128).unwrap();
        assert_eq!(g.len(), 49);
    }

    #[test]
    fn empty_mask_gives_empty_grid() {
        let m = TissueMask::new("s", 2, Mask::filled(64, 64, false));
        assert!(build_grid(&m, (256, 256), 64, 32).unwrap().is_empty());
    }

    #[test]
    fn only_overlapping_patches_kept() {
        let mut mask = Mask::filled(16, 16, false);
        mask.set(15, 0, true); // level-0 pixels 120..128 at downsample 8
        let tm = TissueMask::new("s", 3, mask);
        let g = build_grid(&tm, (128, 128), 32, 32).unwrap();
        assert_eq!(g.centres, vec![(112, 16)]);
    }

    #[test]
    fn rows_are_sorted() {
        let g = build_grid(&full(10, 10, 3), (80, 80), 16, 8).unwrap();
        let mut sorted = g.centres.clone();
        sorted.sort_by_key(|&(x, y)| (y, x));
        assert_eq!(g.centres, sorted);
    }
}
