use crate::error::{Error, Result};
use crate::raster::{Mask, Plane};

fn cross(o: (i64, i64), a: (i64, i64), b: (i64, i64)) -> i64 {
    (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0)
}

/// Convex hull vertices in counter-clockwise order (y axis pointing up),
/// collinear points dropped. One point gives one vertex, collinear sets give
/// the two extremes.
pub fn convex_hull(points: &[(i64, i64)]) -> Vec<(i64, i64)> {
    let mut pts = points.to_vec();
    pts.sort_unstable();
    pts.dedup();
    if pts.len() <= 2 {
        return pts;
    }
    let mut lower: Vec<(i64, i64)> = Vec::new();
    for &p in &pts {
        while lower.len() >= 2 && cross(lower[lower.len() - 2], lower[lower.len() - 1], p) <= 0 {
            lower.pop();
        }
        lower.push(p);
    }
    let mut upper: Vec<(i64, i64)> = Vec::new();
    for &p in pts.iter().rev() {
        while upper.len() >= 2 && cross(upper[upper.len() - 2], upper[upper.len() - 1], p) <= 0 {
            upper.pop();
        }
        upper.push(p);
    }
    lower.pop();
    upper.pop();
    lower.extend(upper);
    lower
}

/// Pixels whose centres lie inside or on the polygon `hull` (as returned by
/// [`convex_hull`]), clipped to `width x height`.
pub fn rasterize_hull(hull: &[(i64, i64)], width: usize, height: usize) -> Mask {
    let mut out = Plane::filled(width, height, false);
    if hull.is_empty() {
        return out;
    }
    let (mut x_lo, mut x_hi) = (i64::MAX, i64::MIN);
    let (mut y_lo, mut y_hi) = (i64::MAX, i64::MIN);
    for &(x, y) in hull {
        x_lo = x_lo.min(x);
        x_hi = x_hi.max(x);
        y_lo = y_lo.min(y);
        y_hi = y_hi.max(y);
    }
    let edges: Vec<((i64, i64), (i64, i64))> = if hull.len() < 2 {
        Vec::new()
    } else {
        (0..hull.len()).map(|i| (hull[i], hull[(i + 1) % hull.len()])).collect()
    };
    for y in y_lo.max(0)..=y_hi.min(height as i64 - 1) {
        let (mut lo, mut hi) = (x_lo.max(0), x_hi.min(width as i64 - 1));
        for &(a, b) in &edges {
            // Inside: dx * (y - ay) - dy * (x - ax) >= 0.
            let (dx, dy) = (b.0 - a.0, b.1 - a.1);
            let c = dx * (y - a.1);
            if dy == 0 {
                if c < 0 {
                    hi = lo - 1;
                }
            } else if dy > 0 {
                // x <= ax + c / dy
                hi = hi.min(a.0 + c.div_euclid(dy));
            } else {
                // x >= ax - c / |dy|
                lo = lo.max(a.0 - c.div_euclid(-dy));
            }
        }
        for x in lo..=hi {
            out.set(x as usize, y as usize, true);
        }
    }
    out
}

pub fn convex_hull_mask(mask: &Mask) -> Result<Mask> {
    let pts: Vec<(i64, i64)> = mask
        .foreground()
        .into_iter()
        .map(|(x, y)| (x as i64, y as i64))
        .collect();
    if pts.is_empty() {
        return Err(Error::Empty("convex hull of an empty mask".into()));
    }
    Ok(rasterize_hull(&convex_hull(&boundary_candidates(mask, &pts)), mask.width(), mask.height()))
}

/// Leftmost and rightmost foreground pixel of each row; the hull of these
/// equals the hull of the whole set.
fn boundary_candidates(mask: &Mask, pts: &[(i64, i64)]) -> Vec<(i64, i64)> {
    let mut out = Vec::new();
    let mut i = 0;
    while i < pts.len() {
        let y = pts[i].1;
        let first = pts[i];
        let mut last = first;
        while i < pts.len() && pts[i].1 == y {
            last = pts[i];
            i += 1;
        }
        out.push(first);
        if last != first {
            out.push(last);
        }
    }
    debug_assert!(out.len() <= 2 * mask.height());
    out
}
