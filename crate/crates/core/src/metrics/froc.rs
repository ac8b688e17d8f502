use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::analysis::{connected_components, Connectivity};
use crate::error::{Error, Result};
use crate::inference::{threshold_map, ProbabilityMap};
use crate::raster::{Mask, Plane};

/// A point detection in level-0 coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub slide_id: String,
    pub x: f64,
    pub y: f64,
    pub confidence: f64,
}

/// One detection per connected component of `map >= t`, at the component
/// centroid (level-0 pixel coordinates) with the component's maximum value.
pub fn detections_from_map(map: &ProbabilityMap, t: f32, connectivity: Connectivity) -> Vec<Detection> {
    let labels = connected_components(&threshold_map(map, t), connectivity);
    let d = map.downsample as f64;
    labels
        .regions()
        .into_iter()
        .map(|px| {
            let n = px.len() as f64;
            let (sx, sy) = px.iter().fold((0.0, 0.0), |(a, b), &(x, y)| (a + x as f64, b + y as f64));
            let conf = px
                .iter()
                .map(|&(x, y)| map.values.get(x, y))
                .fold(0.0f32, f32::max);
            Detection {
                slide_id: map.slide_id.clone(),
                x: (sx / n + 0.5) * d - 0.5,
                y: (sy / n + 0.5) * d - 0.5,
                confidence: conf as f64,
            }
        })
        .collect()
}

/// Ground-truth lesions of one slide: label 0 is background, each positive
/// label one lesion. Cell `(cx, cy)` spans level-0 pixels
/// `[cx*d, (cx+1)*d) x [cy*d, (cy+1)*d)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LesionMap {
    pub slide_id: String,
    pub downsample: u32,
    pub labels: Plane<u32>,
    pub count: usize,
}

impl LesionMap {
    pub fn from_labels(slide_id: &str, downsample: u32, labels: Plane<u32>) -> Self {
        let count = labels.as_slice().iter().copied().max().unwrap_or(0) as usize;
        LesionMap {
            slide_id: slide_id.into(),
            downsample,
            labels,
            count,
        }
    }

    /// Lesions are the 8-connected components of `mask`.
    pub fn from_mask(slide_id: &str, downsample: u32, mask: &Mask) -> Self {
        let l = connected_components(mask, Connectivity::Eight);
        LesionMap {
            slide_id: slide_id.into(),
            downsample,
            labels: l.labels,
            count: l.count,
        }
    }

    /// Lesion hit by a level-0 point, if any. With `tolerance > 0`, the
    /// nearest lesion cell whose centre lies within that distance counts.
    pub fn lesion_at(&self, x: f64, y: f64, tolerance: f64) -> Option<u32> {
        let d = self.downsample as f64;
        let (cx, cy) = ((x + 0.5) / d, (y + 0.5) / d);
        let (ix, iy) = (cx.floor() as i64, cy.floor() as i64);
        if let Some(l) = self.labels.get_checked(ix, iy).filter(|&l| l > 0) {
            return Some(l);
        }
        if tolerance <= 0.0 {
            return None;
        }
        let r = (tolerance / d).ceil() as i64 + 1;
        let mut best: Option<(f64, u32)> = None;
        for gy in iy - r..=iy + r {
            for gx in ix - r..=ix + r {
                let Some(l) = self.labels.get_checked(gx, gy).filter(|&l| l > 0) else {
                    continue;
                };
                let px = (gx as f64 + 0.5) * d - 0.5;
                let py = (gy as f64 + 0.5) * d - 0.5;
                let dist = ((px - x).powi(2) + (py - y).powi(2)).sqrt();
                if dist <= tolerance && best.is_none_or(|(bd, bl)| dist < bd || (dist == bd && l < bl)) {
                    best = Some((dist, l));
                }
            }
        }
        best.map(|(_, l)| l)
    }
}

pub const FROC_RATES: [f64; 6] = [0.25, 0.5, 1.0, 2.0, 4.0, 8.0];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrocPoint {
    pub threshold: f64,
    pub mean_fps: f64,
    pub sensitivity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrocCurve {
    pub points: Vec<FrocPoint>,
    pub rates: Vec<f64>,
    pub sensitivities: Vec<f64>,
    pub score: f64,
    pub slides: usize,
    pub lesions: usize,
}

/// Step interpolation: best sensitivity among points with mean FPs <= `rate`, 0 if none.
pub fn sensitivity_at(points: &[FrocPoint], rate: f64) -> f64 {
    points
        .iter()
        .filter(|p| p.mean_fps <= rate)
        .map(|p| p.sensitivity)
        .fold(0.0, f64::max)
}

/// Sweep every distinct confidence, highest first. At threshold `c` the
/// detections with confidence `>= c` survive; a lesion counts once however
/// many detections hit it; detections in no lesion are false positives.
/// FPs are averaged over all slides in `lesions`.
pub fn froc(
    detections: &[Detection],
    lesions: &[LesionMap],
    rates: &[f64],
    tolerance: f64,
) -> Result<FrocCurve> {
    let by_slide: HashMap<&str, &LesionMap> = lesions.iter().map(|l| (l.slide_id.as_str(), l)).collect();
    if by_slide.len() != lesions.len() {
        return Err(Error::invalid("duplicate slide in lesion maps"));
    }
    let mut offsets = HashMap::new();
    let mut total = 0usize;
    for l in lesions {
        offsets.insert(l.slide_id.as_str(), total);
        total += l.count;
    }
    // (confidence, global lesion index or None for an FP)
    let mut events = Vec::with_capacity(detections.len());
    for d in detections {
        let Some(map) = by_slide.get(d.slide_id.as_str()) else {
            return Err(Error::UnknownSlide(d.slide_id.clone()));
        };
        if !d.confidence.is_finite() {
            return Err(Error::invalid(format!("detection on {} has non-finite confidence", d.slide_id)));
        }
        let hit = map
            .lesion_at(d.x, d.y, tolerance)
            .map(|l| offsets[d.slide_id.as_str()] + l as usize - 1);
        events.push((d.confidence, hit));
    }
    events.sort_by(|a, b| b.0.total_cmp(&a.0));

    let slides = lesions.len().max(1) as f64;
    let mut hit = vec![false; total];
    let (mut hits, mut fps) = (0usize, 0usize);
    let mut points = Vec::new();
    let mut i = 0;
    while i < events.len() {
        let c = events[i].0;
        while i < events.len() && events[i].0 == c {
            match events[i].1 {
                Some(l) if !hit[l] => {
                    hit[l] = true;
                    hits += 1;
                }
                Some(_) => {}
                None => fps += 1,
            }
            i += 1;
        }
        points.push(FrocPoint {
            threshold: c,
            mean_fps: fps as f64 / slides,
            sensitivity: if total == 0 { 0.0 } else { hits as f64 / total as f64 },
        });
    }
    let sensitivities: Vec<f64> = rates.iter().map(|&r| sensitivity_at(&points, r)).collect();
    let score = if rates.is_empty() {
        0.0
    } else {
        sensitivities.iter().sum::<f64>() / rates.len() as f64
    };
    Ok(FrocCurve {
        points,
        rates: rates.to_vec(),
        sensitivities,
        score,
        slides: lesions.len(),
        lesions: total,
    })
}
