//! Binary morphology with square and disk structuring elements.
//!
//! Dilation is the Minkowski sum `A + B`. Erosion is `{p : B + p within A}`
//! where only in-bounds pixels of `B + p` are tested, so erosion never eats
//! into a mask from the image border. Opening erodes then dilates, closing
//! dilates then erodes.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::raster::{Mask, Plane};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelShape {
    Square,
    Disk,
}

/// Structuring element. `size` is the side length of a square or the radius
/// of a disk. Even squares put the extra row and column on the
/// positive side of the origin.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MorphKernel {
    pub shape: KernelShape,
    pub size: u32,
}

impl MorphKernel {
    pub fn square(size: u32) -> Self {
        MorphKernel {
            shape: KernelShape::Square,
            size: size.max(1),
        }
    }

    pub fn disk(radius: u32) -> Self {
        MorphKernel {
            shape: KernelShape::Disk,
            size: radius.max(1),
        }
    }

    /// The element as horizontal runs `(dy, dx_lo, dx_hi)`, inclusive.
    pub fn spans(&self) -> Vec<(i64, i64, i64)> {
        match self.shape {
            KernelShape::Square => {
                let (lo, hi) = square_bounds(self.size);
                (lo..=hi).map(|dy| (dy, lo, hi)).collect()
            }
            KernelShape::Disk => {
                let r = self.size as i64;
                (-r..=r)
                    .map(|dy| {
                        let w = isqrt(r * r - dy * dy);
                        (dy, -w, w)
                    })
                    .collect()
            }
        }
    }

    /// All offsets of the element.
    pub fn offsets(&self) -> Vec<(i64, i64)> {
        self.spans()
            .into_iter()
            .flat_map(|(dy, lo, hi)| (lo..=hi).map(move |dx| (dx, dy)))
            .collect()
    }
}

fn square_bounds(size: u32) -> (i64, i64) {
    let s = size.max(1) as i64;
    let lo = -((s - 1) / 2);
    (lo, lo + s - 1)
}

fn isqrt(v: i64) -> i64 {
    let mut r = (v as f64).sqrt() as i64;
    while r * r > v {
        r -= 1;
    }
    while (r + 1) * (r + 1) <= v {
        r += 1;
    }
    r
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MorphOp {
    Erode,
    Dilate,
    Open,
    Close,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MorphStep {
    pub op: MorphOp,
    pub kernel: MorphKernel,
}

impl MorphStep {
    pub fn new(op: MorphOp, kernel: MorphKernel) -> Self {
        MorphStep { op, kernel }
    }
}

pub fn morphology(mask: &Mask, op: MorphOp, kernel: MorphKernel) -> Mask {
    match op {
        MorphOp::Dilate => dilate(mask, kernel),
        MorphOp::Erode => erode(mask, kernel),
        MorphOp::Open => dilate(&erode(mask, kernel), kernel),
        MorphOp::Close => erode(&dilate(mask, kernel), kernel),
    }
}

pub fn apply_plan(mask: &Mask, plan: &[MorphStep]) -> Mask {
    plan.iter()
        .fold(mask.clone(), |m, step| morphology(&m, step.op, step.kernel))
}

fn row_prefix(mask: &Mask) -> Vec<u32> {
    let (w, h) = mask.dims();
    let mut p = vec![0u32; (w + 1) * h];
    for y in 0..h {
        let base = y * (w + 1);
        for x in 0..w {
            p[base + x + 1] = p[base + x] + mask.get(x, y) as u32;
        }
    }
    p
}

/// Foreground count on row `y` over `[x0, x1]` clipped; returns (count, in-bounds width).
#[inline]
fn row_count(prefix: &[u32], w: usize, y: usize, x0: i64, x1: i64) -> (u32, u32) {
    let a = x0.clamp(0, w as i64) as usize;
    let b = (x1 + 1).clamp(0, w as i64) as usize;
    if a >= b {
        return (0, 0);
    }
    let base = y * (w + 1);
    (prefix[base + b] - prefix[base + a], (b - a) as u32)
}

/// out(x, y) = any A(x - hi ..= x - lo, y)
fn dilate_rows(mask: &Mask, lo: i64, hi: i64) -> Mask {
    let (w, h) = mask.dims();
    let p = row_prefix(mask);
    Plane::from_fn(w, h, |x, y| row_count(&p, w, y, x as i64 - hi, x as i64 - lo).0 > 0)
}

/// out(x, y) = all in-bounds A(x + lo ..= x + hi, y)
fn erode_rows(mask: &Mask, lo: i64, hi: i64) -> Mask {
    let (w, h) = mask.dims();
    let p = row_prefix(mask);
    Plane::from_fn(w, h, |x, y| {
        let (c, n) = row_count(&p, w, y, x as i64 + lo, x as i64 + hi);
        c == n
    })
}

pub fn dilate(mask: &Mask, kernel: MorphKernel) -> Mask {
    if mask.is_empty() {
        return mask.clone();
    }
    match kernel.shape {
        KernelShape::Square => {
            let (lo, hi) = square_bounds(kernel.size);
            let rows = dilate_rows(mask, lo, hi);
            dilate_rows(&rows.transpose(), lo, hi).transpose()
        }
        KernelShape::Disk => {
            let (w, h) = mask.dims();
            let mut by_width: HashMap<(i64, i64), Mask> = HashMap::new();
            let spans = kernel.spans();
            for &(_, lo, hi) in &spans {
                by_width
                    .entry((lo, hi))
                    .or_insert_with(|| dilate_rows(mask, lo, hi));
            }
            Plane::from_fn(w, h, |x, y| {
                spans.iter().any(|&(dy, lo, hi)| {
                    let sy = y as i64 - dy;
                    sy >= 0 && (sy as usize) < h && by_width[&(lo, hi)].get(x, sy as usize)
                })
            })
        }
    }
}

pub fn erode(mask: &Mask, kernel: MorphKernel) -> Mask {
    if mask.is_empty() {
        return mask.clone();
    }
    match kernel.shape {
        KernelShape::Square => {
            let (lo, hi) = square_bounds(kernel.size);
            let rows = erode_rows(mask, lo, hi);
            erode_rows(&rows.transpose(), lo, hi).transpose()
        }
        KernelShape::Disk => {
            let (w, h) = mask.dims();
            let mut by_width: HashMap<(i64, i64), Mask> = HashMap::new();
            let spans = kernel.spans();
            for &(_, lo, hi) in &spans {
                by_width
                    .entry((lo, hi))
                    .or_insert_with(|| erode_rows(mask, lo, hi));
            }
            Plane::from_fn(w, h, |x, y| {
                spans.iter().all(|&(dy, lo, hi)| {
                    let sy = y as i64 + dy;
                    sy < 0 || sy as usize >= h || by_width[&(lo, hi)].get(x, sy as usize)
                })
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn brute_dilate(mask: &Mask, kernel: MorphKernel) -> Mask {
        let offs = kernel.offsets();
        Plane::from_fn(mask.width(), mask.height(), |x, y| {
            offs.iter().any(|&(dx, dy)| mask.get_checked(x as i64 - dx, y as i64 - dy) == Some(true))
        })
    }

    fn brute_erode(mask: &Mask, kernel: MorphKernel) -> Mask {
        let offs = kernel.offsets();
        Plane::from_fn(mask.width(), mask.height(), |x, y| {
            offs.iter().all(|&(dx, dy)| mask.get_checked(x as i64 + dx, y as i64 + dy) != Some(false))
        })
    }

    fn pattern(w: usize, h: usize, seed: u64) -> Mask {
        let mut s = seed;
        Plane::from_fn(w, h, |_, _| {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (s >> 33) % 3 == 0
        })
    }

    #[test]
    fn kernel_shapes() {
        assert_eq!(MorphKernel::square(3).offsets().len(), 9);
        assert_eq!(square_bounds(20), (-9, 10));
        assert_eq!(MorphKernel::disk(1).offsets().len(), 5);
        assert_eq!(MorphKernel::disk(2).offsets().len(), 13);
    }

    #[test]
    fn fast_paths_match_brute_force() {
        for (i, kernel) in [
            MorphKernel::square(1),
            MorphKernel::square(3),
            MorphKernel::square(4),
            MorphKernel::disk(2),
            MorphKernel::disk(3),
        ]
        .into_iter()
        .enumerate()
        {
            let m = pattern(17, 11, i as u64);
            assert_eq!(dilate(&m, kernel), brute_dilate(&m, kernel), "{kernel:?}");
            assert_eq!(erode(&m, kernel), brute_erode(&m, kernel), "{kernel:?}");
        }
    }

    #[test]
    fn empty_mask_stays_empty() {
        let m = Mask::filled(8, 8, false);
        for op in [MorphOp::Erode, MorphOp::Dilate, MorphOp::Open, MorphOp::Close] {
            assert!(!morphology(&m, op, MorphKernel::square(3)).any());
        }
    }

    #[test]
    fn large_blob_survives_close_then_open() {
        let blob = Plane::from_fn(40, 40, |x, y| (10..30).contains(&x) && (12..28).contains(&y));
        let closed = morphology(&blob, MorphOp::Close, MorphKernel::square(5));
        let opened = morphology(&closed, MorphOp::Open, MorphKernel::square(5));
        assert_eq!(opened, blob);
    }
}
