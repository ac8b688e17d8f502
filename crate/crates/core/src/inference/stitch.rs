//! Overlap stitching with exact, order-independent accumulation.
//!
//! Each patch contributes the mean of its output over every map cell it
//! touches. Contributions are stored as fixed-point integers so partial sums
//! can be merged in any grouping and still produce bit-identical maps.

use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};

use super::ProbabilityMap;
use crate::error::{Error, Result};
use crate::pyramid::{RegionRequest, SlidePyramid};
use crate::raster::Plane;
use crate::scorer::{PatchBatch, PatchOrigin};

/// Fixed-point scale of one unit of probability.
pub const FIXED_ONE: f64 = (1u64 << 40) as f64;

/// Sum and count planes over a rectangle of map cells starting at `(x0, y0)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Partial {
    pub x0: usize,
    pub y0: usize,
    pub sum: Plane<u64>,
    pub count: Plane<u32>,
}

impl Partial {
    pub fn new(x0: usize, y0: usize, width: usize, height: usize) -> Self {
        Partial {
            x0,
            y0,
            sum: Plane::filled(width, height, 0),
            count: Plane::filled(width, height, 0),
        }
    }

    /// Add one contribution at map cell `(x, y)`; values below 0 or NaN count as 0.
    pub fn add(&mut self, x: usize, y: usize, value: f64) {
        let q = if value > 0.0 {
            (value * FIXED_ONE).round() as u64
        } else {
            0
        };
        let (lx, ly) = (x - self.x0, y - self.y0);
        let s = self.sum.get(lx, ly);
        self.sum.set(lx, ly, s + q);
        let c = self.count.get(lx, ly);
        self.count.set(lx, ly, c + 1);
    }
}

/// Combine partials into a `width x height` map: value = total sum / total count
/// where the count is positive, NaN elsewhere.
pub fn merge_partials(
    slide_id: &str,
    downsample: u32,
    width: usize,
    height: usize,
    partials: &[Partial],
) -> Result<ProbabilityMap> {
    let mut sum = vec![0u64; width * height];
    let mut count = vec![0u32; width * height];
    for p in partials {
        let (pw, ph) = p.sum.dims();
        if p.count.dims() != (pw, ph) {
            return Err(Error::ShapeMismatch {
                expected: (pw, ph),
                actual: p.count.dims(),
            });
        }
        if p.x0 + pw > width || p.y0 + ph > height {
            return Err(Error::ShapeMismatch {
                expected: (width, height),
                actual: (p.x0 + pw, p.y0 + ph),
            });
        }
        for y in 0..ph {
            let row = (p.y0 + y) * width + p.x0;
            for (x, (&s, &c)) in p.sum.row(y).iter().zip(p.count.row(y)).enumerate() {
                sum[row + x] += s;
                count[row + x] += c;
            }
        }
    }
    let values = sum
        .iter()
        .zip(&count)
        .map(|(&s, &c)| {
            if c == 0 {
                f32::NAN
            } else {
                (s as f64 / c as f64 / FIXED_ONE) as f32
            }
        })
        .collect();
    Ok(ProbabilityMap {
        slide_id: slide_id.to_string(),
        downsample,
        values: Plane::from_vec(width, height, values)?,
        coverage: Plane::from_vec(width, height, count)?,
    })
}

/// Callback receiving `(batches_done, batches_total)`.
pub type ProgressFn<'a> = &'a (dyn Fn(usize, usize) + Sync);

/// Per-batch output: one `n * s * s` plane set per output channel, or the
/// failing member index with its error.
pub type BatchOutput = std::result::Result<Vec<Vec<f32>>, (usize, Error)>;

pub(crate) struct StitchJob<'a> {
    pub pyramid: &'a SlidePyramid,
    pub origins: &'a [(i64, i64)],
    pub patch_size: u32,
    pub downsample: u32,
    pub batch_size: usize,
    pub workers: usize,
    pub outputs: usize,
}

impl StitchJob<'_> {
    pub fn map_dims(&self) -> (usize, usize) {
        let (w, h) = self.pyramid.dimensions();
        let d = self.downsample;
        (w.div_ceil(d) as usize, h.div_ceil(d) as usize)
    }

    fn cell_range(&self, lo: i64, extent: u32) -> (i64, i64) {
        let d = self.downsample as i64;
        let a = lo.max(0);
        let b = (lo + self.patch_size as i64).min(extent as i64);
        (a.div_euclid(d), (b + d - 1).div_euclid(d))
    }

    /// Map-cell bounding box of a run of patches.
    fn footprint(&self, origins: &[(i64, i64)]) -> Option<(usize, usize, usize, usize)> {
        let (w, h) = self.pyramid.dimensions();
        let mut bb: Option<(i64, i64, i64, i64)> = None;
        for &(ox, oy) in origins {
            let (cx0, cx1) = self.cell_range(ox, w);
            let (cy0, cy1) = self.cell_range(oy, h);
            if cx0 >= cx1 || cy0 >= cy1 {
                continue;
            }
            bb = Some(match bb {
                None => (cx0, cy0, cx1, cy1),
                Some((a, b, c, d)) => (a.min(cx0), b.min(cy0), c.max(cx1), d.max(cy1)),
            });
        }
        bb.map(|(a, b, c, d)| (a as usize, b as usize, (c - a) as usize, (d - b) as usize))
    }

    /// Area-average one patch output into map cells, skipping pixels outside the slide.
    fn accumulate(&self, partial: &mut Partial, origin: (i64, i64), values: &[f32]) {
        let (w, h) = self.pyramid.dimensions();
        let p = self.patch_size as i64;
        let d = self.downsample as i64;
        let (ox, oy) = origin;
        let (x0, x1) = (ox.max(0), (ox + p).min(w as i64));
        let (y0, y1) = (oy.max(0), (oy + p).min(h as i64));
        if x0 >= x1 || y0 >= y1 {
            return;
        }
        let (cx0, cx1) = (x0 / d, (x1 + d - 1) / d);
        let (cy0, cy1) = (y0 / d, (y1 + d - 1) / d);
        let ncx = (cx1 - cx0) as usize;
        let mut sums = vec![0f64; ncx * (cy1 - cy0) as usize];
        let mut ns = vec![0u32; sums.len()];
        for y in y0..y1 {
            let row = ((y / d - cy0) as usize) * ncx;
            let src = ((y - oy) * p) as usize;
            for x in x0..x1 {
                let i = row + (x / d - cx0) as usize;
                sums[i] += values[src + (x - ox) as usize] as f64;
                ns[i] += 1;
            }
        }
        for cy in cy0..cy1 {
            for cx in cx0..cx1 {
                let i = ((cy - cy0) as usize) * ncx + (cx - cx0) as usize;
                partial.add(cx as usize, cy as usize, sums[i] / ns[i] as f64);
            }
        }
    }

    fn read_batch(&self, origins: &[(i64, i64)]) -> Result<PatchBatch> {
        let s = self.patch_size;
        let mut pixels = Vec::with_capacity(origins.len() * (s * s * 3) as usize);
        for &(x, y) in origins {
            let img = self.pyramid.read_region(&RegionRequest::new(0, x, y, s, s))?;
            pixels.extend_from_slice(img.as_raw());
        }
        let provenance = origins.iter().map(|&(x, y)| PatchOrigin::new(x, y)).collect();
        PatchBatch::new(s, pixels, provenance)
    }

    /// Score every patch and return one list of partials per output channel.
    pub fn run<F>(&self, progress: Option<ProgressFn<'_>>, score: F) -> Result<Vec<Vec<Partial>>>
    where
        F: Fn(&PatchBatch) -> BatchOutput + Sync,
    {
        let workers = self.workers.max(1).min(self.origins.len().max(1));
        let chunk = self.origins.len().div_ceil(workers).max(1);
        let parts: Vec<&[(i64, i64)]> = self.origins.chunks(chunk).collect();
        let batch = self.batch_size.max(1);
        let total: usize = parts.iter().map(|p| p.len().div_ceil(batch)).sum();
        let done = AtomicUsize::new(0);
        let abort = AtomicBool::new(false);

        let work = |part: &[(i64, i64)]| -> Result<Vec<Partial>> {
            let mut accs: Vec<Partial> = match self.footprint(part) {
                Some((x0, y0, w, h)) => (0..self.outputs).map(|_| Partial::new(x0, y0, w, h)).collect(),
                None => Vec::new(),
            };
            for run in part.chunks(batch) {
                if abort.load(Ordering::Relaxed) {
                    return Ok(Vec::new());
                }
                let patches = self.read_batch(run)?;
                let out = score(&patches).map_err(|(member, source)| {
                    abort.store(true, Ordering::Relaxed);
                    Error::Scoring {
                        member,
                        batches_done: done.load(Ordering::Relaxed),
                        batches_total: total,
                        source: Box::new(source),
                    }
                })?;
                if out.len() != self.outputs {
                    return Err(Error::invalid("scoring returned the wrong number of outputs"));
                }
                let per = (self.patch_size * self.patch_size) as usize;
                for (acc, plane) in accs.iter_mut().zip(&out) {
                    for (i, &origin) in run.iter().enumerate() {
                        self.accumulate(acc, origin, &plane[i * per..(i + 1) * per]);
                    }
                }
                let now = done.fetch_add(1, Ordering::Relaxed) + 1;
                if let Some(cb) = progress {
                    cb(now, total);
                }
            }
            Ok(accs)
        };

        let results: Vec<Result<Vec<Partial>>> = if parts.len() <= 1 {
            parts.iter().map(|p| work(p)).collect()
        } else {
            std::thread::scope(|scope| {
                let handles: Vec<_> = parts.iter().map(|p| scope.spawn(|| work(p))).collect();
                handles
                    .into_iter()
                    .map(|h| h.join().expect("stitch worker panicked"))
                    .collect()
            })
        };

        let mut per_output: Vec<Vec<Partial>> = (0..self.outputs).map(|_| Vec::new()).collect();
        // Report the scoring failure, if any, ahead of secondary errors.
        let mut first_err = None;
        for r in results {
            match r {
                Ok(accs) => {
                    for (k, acc) in accs.into_iter().enumerate() {
                        per_output[k].push(acc);
                    }
                }
                Err(e) => {
                    let have_scoring = matches!(first_err, Some(Error::Scoring { .. }));
                    if first_err.is_none() || (!have_scoring && matches!(e, Error::Scoring { .. })) {
                        first_err = Some(e);
                    }
                }
            }
        }
        match first_err {
            Some(e) => Err(e),
            None => Ok(per_output),
        }
    }
}
