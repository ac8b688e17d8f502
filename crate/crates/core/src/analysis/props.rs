use serde::{Deserialize, Serialize};

use super::hull::{convex_hull, rasterize_hull};
use crate::error::{Error, Result};
use crate::raster::Plane;

/// Geometric properties of one connected region, lengths in mm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Region {
    pub label: u32,
    /// Map-space bounding box `[x0, x1) x [y0, y1)`.
    pub bbox: [usize; 4],
    pub centroid: (f64, f64),
    pub area_px: usize,
    pub area_mm2: f64,
    pub perimeter_mm: f64,
    pub major_axis_mm: f64,
    pub minor_axis_mm: f64,
    pub eccentricity: f64,
    pub extent: f64,
    pub solidity: f64,
    pub mean_confidence: f64,
    pub max_confidence: f64,
}

/// Eigenvalues `(l1 >= l2)` of the pixel-coordinate covariance (population).
pub fn inertia_eigenvalues(pixels: &[(usize, usize)]) -> (f64, f64) {
    let n = pixels.len() as f64;
    let (mx, my) = pixels
        .iter()
        .fold((0.0, 0.0), |(a, b), &(x, y)| (a + x as f64, b + y as f64));
    let (mx, my) = (mx / n, my / n);
    let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
    for &(x, y) in pixels {
        let (dx, dy) = (x as f64 - mx, y as f64 - my);
        sxx += dx * dx;
        syy += dy * dy;
        sxy += dx * dy;
    }
    let (a, c, b) = (sxx / n, syy / n, sxy / n);
    let mid = (a + c) / 2.0;
    let r = (((a - c) / 2.0).powi(2) + b * b).sqrt();
    (mid + r, (mid - r).max(0.0))
}

/// `pixels` in map space; `probs` gives confidences over the same grid.
/// `mpp` is microns per level-0 pixel, `downsample` level-0 pixels per map pixel.
pub fn region_props(
    label: u32,
    pixels: &[(usize, usize)],
    probs: Option<&Plane<f32>>,
    mpp: f64,
    downsample: u32,
) -> Result<Region> {
    if pixels.is_empty() {
        return Err(Error::Empty("region has no pixels".into()));
    }
    if !(mpp > 0.0 && mpp.is_finite()) {
        return Err(Error::invalid(format!("mpp {mpp} must be positive")));
    }
    let pitch_mm = downsample as f64 * mpp / 1000.0;
    let (mut x0, mut y0, mut x1, mut y1) = (usize::MAX, usize::MAX, 0, 0);
    for &(x, y) in pixels {
        x0 = x0.min(x);
        y0 = y0.min(y);
        x1 = x1.max(x + 1);
        y1 = y1.max(y + 1);
    }
    let (bw, bh) = (x1 - x0, y1 - y0);
    let mut local = Plane::filled(bw, bh, false);
    for &(x, y) in pixels {
        local.set(x - x0, y - y0, true);
    }

    let mut edges = 0usize;
    for &(x, y) in pixels {
        let (lx, ly) = ((x - x0) as i64, (y - y0) as i64);
        for (dx, dy) in [(1, 0), (-1, 0), (0, 1), (0, -1)] {
            if local.get_checked(lx + dx, ly + dy) != Some(true) {
                edges += 1;
            }
        }
    }

    let n = pixels.len();
    let hull_pts: Vec<(i64, i64)> = pixels
        .iter()
        .map(|&(x, y)| ((x - x0) as i64, (y - y0) as i64))
        .collect();
    let hull_area = rasterize_hull(&convex_hull(&hull_pts), bw, bh).count();

    let (l1, l2) = inertia_eigenvalues(pixels);
    let eccentricity = if l1 > 0.0 { (1.0 - l2 / l1).max(0.0).sqrt() } else { 0.0 };

    let (sum_x, sum_y) = pixels
        .iter()
        .fold((0.0, 0.0), |(a, b), &(x, y)| (a + x as f64, b + y as f64));
    let (mean_c, max_c) = match probs {
        Some(p) => {
            let mut s = 0.0f64;
            let mut m = 0.0f64;
            for &(x, y) in pixels {
                let v = p.get(x, y);
                let v = if v.is_nan() { 0.0 } else { v as f64 };
                s += v;
                m = m.max(v);
            }
            (s / n as f64, m)
        }
        None => (0.0, 0.0),
    };

    Ok(Region {
        label,
        bbox: [x0, y0, x1, y1],
        centroid: (sum_x / n as f64, sum_y / n as f64),
        area_px: n,
        area_mm2: n as f64 * pitch_mm * pitch_mm,
        perimeter_mm: edges as f64 * pitch_mm,
        major_axis_mm: 4.0 * l1.sqrt() * pitch_mm,
        minor_axis_mm: 4.0 * l2.sqrt() * pitch_mm,
        eccentricity,
        extent: n as f64 / (bw * bh) as f64,
        solidity: n as f64 / hull_area.max(n) as f64,
        mean_confidence: mean_c,
        max_confidence: max_c,
    })
}
