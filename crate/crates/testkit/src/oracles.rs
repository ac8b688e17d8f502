//! Reference implementations. Each favours the most literal reading of the
//! definition over speed and shares no code with the library.

use std::collections::{BTreeSet, HashMap, VecDeque};

use slidescope_core::{Mask, Plane};

/// Scan every split, computing both class statistics from scratch.
/// Returns `(threshold, degenerate)`; ties within a relative `tol` go to the
/// smallest split.
pub fn otsu_exhaustive(hist: &[u64; 256], tol: f64) -> Option<(u8, bool)> {
    let total: u64 = hist.iter().sum();
    if total == 0 {
        return None;
    }
    let occupied: Vec<usize> = (0..256).filter(|&i| hist[i] > 0).collect();
    if occupied.len() == 1 {
        return Some((occupied[0] as u8, true));
    }
    let n = total as f64;
    let mut scores = Vec::with_capacity(256);
    for t in 0..256 {
        let (mut w0, mut s0, mut w1, mut s1) = (0u64, 0.0f64, 0u64, 0.0f64);
        for (v, &c) in hist.iter().enumerate() {
            if v <= t {
                w0 += c;
                s0 += v as f64 * c as f64;
            } else {
                w1 += c;
            }
        }
        for (v, &c) in hist.iter().enumerate() {
            s1 += v as f64 * c as f64;
        }
        s1 -= s0;
        if w0 == 0 || w1 == 0 {
            scores.push(0.0);
            continue;
        }
        let (m0, m1) = (s0 / w0 as f64, s1 / w1 as f64);
        scores.push((w0 as f64 / n) * (w1 as f64 / n) * (m0 - m1) * (m0 - m1));
    }
    let best = scores.iter().cloned().fold(0.0, f64::max);
    let t = scores.iter().position(|&s| s >= best * (1.0 - tol)).unwrap();
    Some((t as u8, false))
}

/// `k x k` median by sorting each edge-replicated window.
pub fn median_naive(src: &Plane<u8>, k: usize) -> Plane<u8> {
    let r = (k / 2) as i64;
    let (w, h) = (src.width() as i64, src.height() as i64);
    Plane::from_fn(src.width(), src.height(), |x, y| {
        let mut win = Vec::with_capacity(k * k);
        for dy in -r..=r {
            for dx in -r..=r {
                let sx = (x as i64 + dx).clamp(0, w - 1) as usize;
                let sy = (y as i64 + dy).clamp(0, h - 1) as usize;
                win.push(src.get(sx, sy));
            }
        }
        win.sort_unstable();
        win[win.len() / 2]
    })
}

/// Minkowski sum `{a + b}` of the foreground with the element offsets.
pub fn minkowski_dilate(mask: &Mask, offsets: &[(i64, i64)]) -> Mask {
    let mut out = Plane::filled(mask.width(), mask.height(), false);
    for (x, y) in mask.foreground() {
        for &(dx, dy) in offsets {
            let (nx, ny) = (x as i64 + dx, y as i64 + dy);
            if nx >= 0 && ny >= 0 && (nx as usize) < mask.width() && (ny as usize) < mask.height() {
                out.set(nx as usize, ny as usize, true);
            }
        }
    }
    out
}

/// Minkowski difference; offsets that leave the image do not veto a pixel.
pub fn minkowski_erode(mask: &Mask, offsets: &[(i64, i64)]) -> Mask {
    Plane::from_fn(mask.width(), mask.height(), |x, y| {
        offsets.iter().all(|&(dx, dy)| {
            let (nx, ny) = (x as i64 + dx, y as i64 + dy);
            if nx < 0 || ny < 0 || nx as usize >= mask.width() || ny as usize >= mask.height() {
                true
            } else {
                mask.get(nx as usize, ny as usize)
            }
        })
    })
}

fn cross(o: (i64, i64), a: (i64, i64), b: (i64, i64)) -> i64 {
    (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0)
}

fn dist2(a: (i64, i64), b: (i64, i64)) -> i64 {
    (a.0 - b.0).pow(2) + (a.1 - b.1).pow(2)
}

/// Jarvis march. Vertices counter-clockwise with every point on or left of
/// each edge; collinear points are skipped in favour of the farthest.
pub fn gift_wrap(points: &[(i64, i64)]) -> Vec<(i64, i64)> {
    let pts: Vec<(i64, i64)> = points.iter().cloned().collect::<BTreeSet<_>>().into_iter().collect();
    if pts.len() <= 1 {
        return pts;
    }
    let start = pts[0];
    let mut hull = vec![start];
    let mut p = start;
    loop {
        let mut q = if pts[0] == p { pts[1] } else { pts[0] };
        for &r in &pts {
            if r == p {
                continue;
            }
            let c = cross(p, q, r);
            if c < 0 || (c == 0 && dist2(p, r) > dist2(p, q)) {
                q = r;
            }
        }
        if q == start {
            break;
        }
        hull.push(q);
        p = q;
        if hull.len() > pts.len() {
            panic!("gift wrapping did not close");
        }
    }
    hull
}

/// Pixels whose centre lies in the closed convex hull of the foreground
/// pixel centres.
pub fn hull_mask_naive(mask: &Mask) -> Mask {
    let pts: Vec<(i64, i64)> = mask.foreground().into_iter().map(|(x, y)| (x as i64, y as i64)).collect();
    let hull = gift_wrap(&pts);
    Plane::from_fn(mask.width(), mask.height(), |x, y| {
        let p = (x as i64, y as i64);
        match hull.len() {
            0 => false,
            1 => p == hull[0],
            2 => {
                let (a, b) = (hull[0], hull[1]);
                cross(a, b, p) == 0
                    && p.0 >= a.0.min(b.0)
                    && p.0 <= a.0.max(b.0)
                    && p.1 >= a.1.min(b.1)
                    && p.1 <= a.1.max(b.1)
            }
            n => (0..n).all(|i| cross(hull[i], hull[(i + 1) % n], p) >= 0),
        }
    })
}

/// Breadth-first flood fill; labels numbered by first pixel in row-major order.
pub fn flood_fill_labels(mask: &Mask, eight: bool) -> (Plane<u32>, usize) {
    let (w, h) = mask.dims();
    let mut labels = Plane::filled(w, h, 0u32);
    let mut next = 0u32;
    let neighbours: Vec<(i64, i64)> = if eight {
        (-1..=1)
            .flat_map(|dy| (-1..=1).map(move |dx| (dx, dy)))
            .filter(|&d| d != (0, 0))
            .collect()
    } else {
        vec![(1, 0), (-1, 0), (0, 1), (0, -1)]
    };
    for sy in 0..h {
        for sx in 0..w {
            if !mask.get(sx, sy) || labels.get(sx, sy) != 0 {
                continue;
            }
            next += 1;
            let mut queue = VecDeque::from([(sx, sy)]);
            labels.set(sx, sy, next);
            while let Some((x, y)) = queue.pop_front() {
                for &(dx, dy) in &neighbours {
                    let (nx, ny) = (x as i64 + dx, y as i64 + dy);
                    if nx < 0 || ny < 0 || nx as usize >= w || ny as usize >= h {
                        continue;
                    }
                    let (nx, ny) = (nx as usize, ny as usize);
                    if mask.get(nx, ny) && labels.get(nx, ny) == 0 {
                        labels.set(nx, ny, next);
                        queue.push_back((nx, ny));
                    }
                }
            }
        }
    }
    (labels, next as usize)
}

/// Overlap averaging by brute force. For every map cell and every patch
/// touching it, average the patch's in-slide pixels falling in the cell;
/// the cell value is the mean of those per-patch averages. Uncovered cells
/// are NaN with count 0.
pub fn stitch_naive(
    dims: (u32, u32),
    patch: u32,
    downsample: u32,
    origins: &[(i64, i64)],
    value: impl Fn(usize, usize, usize) -> f64,
) -> (Plane<f64>, Plane<u32>) {
    let d = downsample as i64;
    let (w, h) = (dims.0 as i64, dims.1 as i64);
    let (mw, mh) = ((w + d - 1) / d, (h + d - 1) / d);
    let mut per_patch: Vec<HashMap<(i64, i64), (f64, u32)>> = Vec::new();
    for (k, &(ox, oy)) in origins.iter().enumerate() {
        let mut cells: HashMap<(i64, i64), (f64, u32)> = HashMap::new();
        for j in 0..patch as i64 {
            for i in 0..patch as i64 {
                let (x, y) = (ox + i, oy + j);
                if x < 0 || y < 0 || x >= w || y >= h {
                    continue;
                }
                let e = cells.entry((x / d, y / d)).or_default();
                e.0 += value(k, i as usize, j as usize);
                e.1 += 1;
            }
        }
        per_patch.push(cells);
    }
    let mut sum = Plane::filled(mw as usize, mh as usize, 0.0f64);
    let mut count = Plane::filled(mw as usize, mh as usize, 0u32);
    for cells in &per_patch {
        for (&(cx, cy), &(s, n)) in cells {
            let (cx, cy) = (cx as usize, cy as usize);
            sum.set(cx, cy, sum.get(cx, cy) + s / n as f64);
            count.set(cx, cy, count.get(cx, cy) + 1);
        }
    }
    let mean = Plane::from_fn(mw as usize, mh as usize, |x, y| {
        let n = count.get(x, y);
        if n == 0 {
            f64::NAN
        } else {
            sum.get(x, y) / n as f64
        }
    });
    (mean, count)
}

fn pairs<'a>(p: &'a Plane<f64>, g: &'a Mask) -> impl Iterator<Item = (f64, f64)> + 'a {
    (0..p.height()).flat_map(move |y| (0..p.width()).map(move |x| (p.get(x, y), if g.get(x, y) { 1.0 } else { 0.0 })))
}

/// Soft Dice loss on foreground: `1 - 2Σpg / (Σp² + Σg²)`.
pub fn dice_loss_direct(p: &Plane<f64>, g: &Mask) -> f64 {
    let num: f64 = pairs(p, g).map(|(a, b)| a * b).sum();
    let den: f64 = pairs(p, g).map(|(a, b)| a * a + b * b).sum();
    if den == 0.0 {
        0.0
    } else {
        1.0 - 2.0 * num / den
    }
}

/// Soft Dice loss on background: the same formula on `1-p`, `1-g`.
pub fn dice_loss_bg_direct(p: &Plane<f64>, g: &Mask) -> f64 {
    let num: f64 = pairs(p, g).map(|(a, b)| (1.0 - a) * (1.0 - b)).sum();
    let den: f64 = pairs(p, g).map(|(a, b)| (1.0 - a).powi(2) + (1.0 - b).powi(2)).sum();
    if den == 0.0 {
        0.0
    } else {
        1.0 - 2.0 * num / den
    }
}

/// Mean binary cross-entropy, probabilities clamped to `[eps, 1-eps]`.
pub fn cross_entropy_direct(p: &Plane<f64>, g: &Mask, eps: f64) -> f64 {
    let n = p.len() as f64;
    -pairs(p, g)
        .map(|(a, b)| {
            let a = a.max(eps).min(1.0 - eps);
            b * a.ln() + (1.0 - b) * (1.0 - a).ln()
        })
        .sum::<f64>()
        / n
}

pub fn hybrid_direct(p: &Plane<f64>, g: &Mask, alpha: f64, beta: f64, gamma: f64, eps: f64) -> f64 {
    alpha * cross_entropy_direct(p, g, eps) + beta * dice_loss_bg_direct(p, g) + gamma * dice_loss_direct(p, g)
}

/// Quadratic-weighted kappa from normalised observed and expected matrices.
pub fn kappa_direct(a: &[usize], b: &[usize], k: usize) -> f64 {
    let n = a.len() as f64;
    let mut o = vec![vec![0.0; k]; k];
    for (&i, &j) in a.iter().zip(b) {
        o[i][j] += 1.0 / n;
    }
    let row: Vec<f64> = (0..k).map(|i| o[i].iter().sum()).collect();
    let col: Vec<f64> = (0..k).map(|j| (0..k).map(|i| o[i][j]).sum()).collect();
    let (mut num, mut den) = (0.0, 0.0);
    for i in 0..k {
        for j in 0..k {
            let w = ((i as f64 - j as f64) / (k as f64 - 1.0)).powi(2);
            num += w * o[i][j];
            den += w * row[i] * col[j];
        }
    }
    if den == 0.0 {
        1.0
    } else {
        1.0 - num / den
    }
}

/// pN stage from five slide labels coded 0 negative, 1 ITC, 2 micro,
/// 3 macro. ITC slides do not count as positive nodes.
pub fn pn_stage_naive(labels: &[usize; 5]) -> &'static str {
    let has = |c: usize| labels.contains(&c);
    let nodes = labels.iter().filter(|&&l| l >= 2).count();
    if has(3) {
        if nodes >= 4 {
            "pN2"
        } else {
            "pN1"
        }
    } else if has(2) {
        "pN1mi"
    } else if has(1) {
        "pN0i+"
    } else {
        "pN0"
    }
}

/// One slide of lesion ground truth for [`froc_naive`].
pub struct LesionSlide<'a> {
    pub slide_id: &'a str,
    pub downsample: u32,
    pub labels: &'a Plane<u32>,
}

/// `(threshold, mean FPs per slide, sensitivity)` at every distinct
/// confidence, plus the mean over `rates` of the best sensitivity reachable
/// at or under each rate. Detections are `(slide, x, y, confidence)`.
pub fn froc_naive(
    detections: &[(&str, f64, f64, f64)],
    slides: &[LesionSlide<'_>],
    rates: &[f64],
) -> (Vec<(f64, f64, f64)>, f64) {
    let total: usize = slides
        .iter()
        .map(|s| s.labels.as_slice().iter().copied().collect::<BTreeSet<u32>>().into_iter().filter(|&l| l > 0).count())
        .sum();
    let lookup = |slide: &str, x: f64, y: f64| -> Option<(String, u32)> {
        let s = slides.iter().find(|s| s.slide_id == slide).expect("known slide");
        let d = s.downsample as f64;
        let (cx, cy) = (((x + 0.5) / d).floor(), ((y + 0.5) / d).floor());
        if cx < 0.0 || cy < 0.0 || cx >= s.labels.width() as f64 || cy >= s.labels.height() as f64 {
            return None;
        }
        let l = s.labels.get(cx as usize, cy as usize);
        (l > 0).then(|| (slide.to_string(), l))
    };
    let mut thresholds: Vec<f64> = detections.iter().map(|d| d.3).collect();
    thresholds.sort_by(|a, b| b.total_cmp(a));
    thresholds.dedup();
    let mut points = Vec::new();
    for &t in &thresholds {
        let mut found = BTreeSet::new();
        let mut fps = 0usize;
        for &(s, x, y, c) in detections {
            if c < t {
                continue;
            }
            match lookup(s, x, y) {
                Some(key) => {
                    found.insert(key);
                }
                None => fps += 1,
            }
        }
        let sens = if total == 0 { 0.0 } else { found.len() as f64 / total as f64 };
        points.push((t, fps as f64 / slides.len().max(1) as f64, sens));
    }
    let mut score = 0.0;
    for &r in rates {
        score += points.iter().filter(|p| p.1 <= r).map(|p| p.2).fold(0.0, f64::max);
    }
    (points, score / rates.len() as f64)
}

/// `|viable ∩ whole| / |whole|` by counting.
pub fn pixel_ratio(viable: &Mask, whole: &Mask) -> f64 {
    let (mut inside, mut all) = (0usize, 0usize);
    for y in 0..whole.height() {
        for x in 0..whole.width() {
            if whole.get(x, y) {
                all += 1;
                if viable.get(x, y) {
                    inside += 1;
                }
            }
        }
    }
    inside as f64 / all as f64
}
