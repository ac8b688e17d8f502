use serde::{Deserialize, Serialize};

use super::components::{connected_components, Connectivity};
use super::props::{region_props, Region};
use crate::error::{Error, Result};
use crate::inference::{threshold_map, ProbabilityMap};
use crate::preproc::TissueMask;

pub const FEATURE_COUNT: usize = 32;

/// Column names of the feature vector, in order.
pub const FEATURE_NAMES: [&str; FEATURE_COUNT] = [
    "f1_major_axis_p90",
    "f1_major_axis_p50",
    "f2_largest_area_p50",
    "f3_tumour_tissue_ratio_p90",
    "f4_pixel_count_p90",
    "f5_area_max",
    "f5_area_mean",
    "f5_area_var",
    "f5_area_skew",
    "f5_area_kurt",
    "f6_perimeter_max",
    "f6_perimeter_mean",
    "f6_perimeter_var",
    "f6_perimeter_skew",
    "f6_perimeter_kurt",
    "f7_eccentricity_max",
    "f7_eccentricity_mean",
    "f7_eccentricity_var",
    "f7_eccentricity_skew",
    "f7_eccentricity_kurt",
    "f8_extent_max",
    "f8_extent_mean",
    "f8_extent_var",
    "f8_extent_skew",
    "f8_extent_kurt",
    "f9_solidity_max",
    "f9_solidity_mean",
    "f9_solidity_var",
    "f9_solidity_skew",
    "f9_solidity_kurt",
    "f10_mean_confidence_p90",
    "f11_region_count_p90",
];

pub const HIGH_THRESHOLD: f32 = 0.9;
pub const LOW_THRESHOLD: f32 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionFeatureVector {
    pub values: Vec<f64>,
    /// No region survived the 0.5 threshold.
    pub negative: bool,
}

impl RegionFeatureVector {
    pub fn zeros() -> Self {
        RegionFeatureVector {
            values: vec![0.0; FEATURE_COUNT],
            negative: true,
        }
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        FEATURE_NAMES
            .iter()
            .position(|n| *n == name)
            .map(|i| self.values[i])
    }

    pub fn names() -> &'static [&'static str] {
        &FEATURE_NAMES
    }
}

/// `max, mean, variance, skewness, kurtosis` of a sample. Population moments;
/// skewness `m3 / m2^1.5`, excess kurtosis `m4 / m2^2 - 3`; all higher
/// moments are 0 for samples of fewer than 2 values or zero variance.
pub fn summary_stats(values: &[f64]) -> [f64; 5] {
    if values.is_empty() {
        return [0.0; 5];
    }
    let n = values.len() as f64;
    let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mean = values.iter().sum::<f64>() / n;
    let moment = |k: i32| values.iter().map(|v| (v - mean).powi(k)).sum::<f64>() / n;
    let m2 = moment(2);
    if values.len() < 2 || m2 <= 0.0 {
        return [max, mean, 0.0, 0.0, 0.0];
    }
    let skew = moment(3) / m2.powf(1.5);
    let kurt = moment(4) / (m2 * m2) - 3.0;
    [max, mean, m2, skew, kurt]
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FeatureOptions {
    pub connectivity: Connectivity,
    /// Drop regions at 0.9 smaller than this many mm^2 before computing
    /// statistics. Off by default.
    pub min_region_area_mm2: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureResult {
    pub features: RegionFeatureVector,
    pub regions_p90: Vec<Region>,
    pub regions_p50: Vec<Region>,
}

pub fn regions_at(
    map: &ProbabilityMap,
    t: f32,
    mpp: f64,
    connectivity: Connectivity,
) -> Result<Vec<Region>> {
    let labels = connected_components(&threshold_map(map, t), connectivity);
    labels
        .regions()
        .iter()
        .enumerate()
        .map(|(i, px)| region_props(i as u32 + 1, px, Some(&map.values), mpp, map.downsample))
        .collect()
}

/// Largest by area; ties go to the lower label.
pub fn largest_region(regions: &[Region]) -> Option<&Region> {
    regions.iter().fold(None, |best: Option<&Region>, r| match best {
        Some(b) if b.area_px >= r.area_px => Some(b),
        _ => Some(r),
    })
}

pub fn extract_features(
    map: &ProbabilityMap,
    tissue: &TissueMask,
    mpp: f64,
    opts: &FeatureOptions,
) -> Result<FeatureResult> {
    if !(mpp > 0.0 && mpp.is_finite()) {
        return Err(Error::invalid(format!("mpp {mpp} must be positive")));
    }
    let mut regions_p90 = regions_at(map, HIGH_THRESHOLD, mpp, opts.connectivity)?;
    let regions_p50 = regions_at(map, LOW_THRESHOLD, mpp, opts.connectivity)?;
    if let Some(min) = opts.min_region_area_mm2 {
        regions_p90.retain(|r| r.area_mm2 >= min);
    }
    if regions_p50.is_empty() {
        return Ok(FeatureResult {
            features: RegionFeatureVector::zeros(),
            regions_p90,
            regions_p50,
        });
    }

    let tissue_px = tissue
        .resample(map.width(), map.height(), map.downsample)
        .count();
    let tumour_px: usize = regions_p90.iter().map(|r| r.area_px).sum();

    let mut v = Vec::with_capacity(FEATURE_COUNT);
    v.push(largest_region(&regions_p90).map_or(0.0, |r| r.major_axis_mm));
    v.push(largest_region(&regions_p50).map_or(0.0, |r| r.major_axis_mm));
    v.push(largest_region(&regions_p50).map_or(0.0, |r| r.area_mm2));
    v.push(if tissue_px == 0 {
        0.0
    } else {
        tumour_px as f64 / tissue_px as f64
    });
    v.push(tumour_px as f64);
    let columns: [fn(&Region) -> f64; 5] = [
        |r| r.area_mm2,
        |r| r.perimeter_mm,
        |r| r.eccentricity,
        |r| r.extent,
        |r| r.solidity,
    ];
    for col in columns {
        let xs: Vec<f64> = regions_p90.iter().map(col).collect();
        v.extend(summary_stats(&xs));
    }
    let confs: Vec<f64> = regions_p90.iter().map(|r| r.mean_confidence).collect();
    v.push(if confs.is_empty() {
        0.0
    } else {
        confs.iter().sum::<f64>() / confs.len() as f64
    });
    v.push(regions_p90.len() as f64);
    debug_assert_eq!(v.len(), FEATURE_COUNT);

    Ok(FeatureResult {
        features: RegionFeatureVector {
            values: v,
            negative: false,
        },
        regions_p90,
        regions_p50,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stats_conventions() {
        assert_eq!(summary_stats(&[]), [0.0; 5]);
        assert_eq!(summary_stats(&[3.0]), [3.0, 3.0, 0.0, 0.0, 0.0]);
        let s = summary_stats(&[1.0, 2.0, 3.0, 10.0]);
        assert_eq!(s[0], 10.0);
        assert_eq!(s[1], 4.0);
        assert!((s[2] - 12.5).abs() < 1e-12);
    }

    #[test]
    fn names_are_unique() {
        let mut n = FEATURE_NAMES.to_vec();
        n.sort();
        n.dedup();
        assert_eq!(n.len(), 32);
    }
}
