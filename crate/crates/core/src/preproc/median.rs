use image::RgbImage;

use crate::error::{Error, Result};
use crate::raster::Plane;

/// Sliding 256-bin histogram with a 16-bin coarse layer for fast rank queries.
struct RankHistogram {
    fine: [u32; 256],
    coarse: [u32; 16],
}

impl RankHistogram {
    fn new() -> Self {
        RankHistogram {
            fine: [0; 256],
            coarse: [0; 16],
        }
    }

    #[inline]
    fn add(&mut self, v: u8) {
        self.fine[v as usize] += 1;
        self.coarse[(v >> 4) as usize] += 1;
    }

    #[inline]
    fn remove(&mut self, v: u8) {
        self.fine[v as usize] -= 1;
        self.coarse[(v >> 4) as usize] -= 1;
    }

    /// Value with zero-based rank `rank`.
    #[inline]
    fn nth(&self, mut rank: u32) -> u8 {
        let mut block = 0;
        while self.coarse[block] <= rank {
            rank -= self.coarse[block];
            block += 1;
        }
        let mut v = block * 16;
        while self.fine[v] <= rank {
            rank -= self.fine[v];
            v += 1;
        }
        v as u8
    }
}

/// `k x k` median of a single-channel plane with edge-replicated borders.
pub fn median_blur_plane(src: &Plane<u8>, k: usize) -> Result<Plane<u8>> {
    if k == 0 || k % 2 == 0 {
        return Err(Error::invalid(format!("median kernel must be odd and >= 1, got {k}")));
    }
    let (w, h) = src.dims();
    if k == 1 || w == 0 || h == 0 {
        return Ok(src.clone());
    }
    let r = (k / 2) as i64;
    let cx = |x: i64| x.clamp(0, w as i64 - 1) as usize;
    let cy = |y: i64| y.clamp(0, h as i64 - 1) as usize;
    let rank = (k * k / 2) as u32;
    let mut out = Plane::filled(w, h, 0u8);
    for y in 0..h {
        let mut hist = RankHistogram::new();
        for dy in -r..=r {
            let sy = cy(y as i64 + dy);
            for dx in -r..=r {
                hist.add(src.get(cx(dx), sy));
            }
        }
        out.set(0, y, hist.nth(rank));
        for x in 1..w {
            let leaving = cx(x as i64 - r - 1);
            let entering = cx(x as i64 + r);
            for dy in -r..=r {
                let sy = cy(y as i64 + dy);
                hist.remove(src.get(leaving, sy));
                hist.add(src.get(entering, sy));
            }
            out.set(x, y, hist.nth(rank));
        }
    }
    Ok(out)
}

/// Per-channel `k x k` median of an RGB raster with edge-replicated borders.
pub fn median_blur(img: &RgbImage, k: usize) -> Result<RgbImage> {
    let (w, h) = (img.width() as usize, img.height() as usize);
    let mut out = img.clone();
    for c in 0..3 {
        let channel = Plane::from_fn(w, h, |x, y| img.get_pixel(x as u32, y as u32).0[c]);
        let blurred = median_blur_plane(&channel, k)?;
        for (i, p) in out.pixels_mut().enumerate() {
            p.0[c] = blurred.as_slice()[i];
        }
    }
    Ok(out)
}
