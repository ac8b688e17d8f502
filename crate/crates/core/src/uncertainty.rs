//! Per-pixel variance maps: across test-time augmentations of one scorer
//! (aleatoric), across ensemble members (epistemic), and their combination.

use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inference::{merge_partials, InferenceConfig, ProbabilityMap, ProgressFn, StitchJob};
use crate::io::{read_f32_plane, write_f32_plane};
use crate::pyramid::SlidePyramid;
use crate::raster::{ensure_same_dims, Plane};
use crate::sampler::{augment_geometric, AugmentSpec, SampleGrid};
use crate::scorer::{EnsembleHandle, PatchBatch, PatchOrigin, Scorer};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UncertaintyKind {
    Aleatoric,
    Epistemic,
    Combined,
}

impl UncertaintyKind {
    pub fn name(self) -> &'static str {
        match self {
            UncertaintyKind::Aleatoric => "aleatoric",
            UncertaintyKind::Epistemic => "epistemic",
            UncertaintyKind::Combined => "combined",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "aleatoric" => Some(UncertaintyKind::Aleatoric),
            "epistemic" => Some(UncertaintyKind::Epistemic),
            "combined" => Some(UncertaintyKind::Combined),
            _ => None,
        }
    }
}

/// How member aleatoric maps and the epistemic map are combined.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CombineRule {
    /// mean(aleatoric) + epistemic
    #[default]
    MeanPlusEpistemic,
    /// max(mean(aleatoric), epistemic)
    Max,
}

/// Variance plane; `map.values` is NaN where undefined.
#[derive(Debug, Clone, PartialEq)]
pub struct UncertaintyMap {
    pub kind: UncertaintyKind,
    pub map: ProbabilityMap,
}

impl UncertaintyMap {
    pub fn values(&self) -> &Plane<f32> {
        &self.map.values
    }

    /// Largest defined value, 0 when nothing is defined.
    pub fn max(&self) -> f32 {
        self.map
            .values
            .as_slice()
            .iter()
            .filter(|v| !v.is_nan())
            .fold(0.0, |a, &b| a.max(b))
    }

    /// Writes the raw plane with a `kind` field in the sidecar; the preview
    /// maps 0.25 to white.
    pub fn save(&self, base: impl AsRef<Path>) -> Result<()> {
        write_f32_plane(base, &self.map.values, &self.map.sidecar(Some(self.kind.name())), 0.25)
    }

    pub fn load(base: impl AsRef<Path>) -> Result<Self> {
        let (values, side) = read_f32_plane(base)?;
        let kind = side
            .kind
            .as_deref()
            .and_then(UncertaintyKind::parse)
            .ok_or_else(|| Error::invalid("sidecar has no uncertainty kind"))?;
        Ok(UncertaintyMap {
            kind,
            map: ProbabilityMap::from_values(&side.slide_id, side.downsample, values),
        })
    }
}

/// Population variance of a set of values.
pub fn population_variance(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n
}

/// Per-pixel variance over `tta` of one scorer, aligned back to the
/// untransformed patch, for `batch`.
pub fn tta_variance(scorer: &dyn Scorer, batch: &PatchBatch, tta: &[AugmentSpec]) -> Result<Vec<f32>> {
    let s = batch.patch_size as usize;
    let per = s * s;
    let identity = Plane::from_fn(s, s, |x, y| y * s + x);
    let mut sum = vec![0f64; batch.n * per];
    let mut aligned: Vec<Vec<f32>> = Vec::with_capacity(tta.len());
    for spec in tta {
        // forward[i] is the source pixel shown at position i after the transform.
        let forward = augment_geometric(spec, &identity);
        let mut pixels = Vec::with_capacity(batch.pixels.len());
        let mut origins = Vec::with_capacity(batch.n);
        for i in 0..batch.n {
            let src = batch.patch_bytes(i);
            for &j in forward.as_slice() {
                pixels.extend_from_slice(&src[3 * j..3 * j + 3]);
            }
            let base = batch.origins.get(i).copied().unwrap_or(PatchOrigin::new(0, 0));
            origins.push(PatchOrigin {
                transform: *spec,
                ..base
            });
        }
        if batch.origins.is_empty() {
            origins.clear();
        }
        let out = scorer.score(&PatchBatch::new(batch.patch_size, pixels, origins)?)?;
        let mut back = vec![0f32; batch.n * per];
        for i in 0..batch.n {
            let scored = out.patch(i);
            let dst = &mut back[i * per..(i + 1) * per];
            for (k, &j) in forward.as_slice().iter().enumerate() {
                dst[j] = scored[k];
            }
        }
        for (acc, &v) in sum.iter_mut().zip(&back) {
            *acc += v as f64;
        }
        aligned.push(back);
    }
    let n = tta.len() as f64;
    Ok((0..batch.n * per)
        .map(|i| {
            let mean = sum[i] / n;
            let ss: f64 = aligned.iter().map(|a| (a[i] as f64 - mean) * (a[i] as f64 - mean)).sum();
            (ss / n) as f32
        })
        .collect())
}

fn check_tta(tta: &[AugmentSpec]) -> Result<()> {
    if tta.is_empty() {
        return Err(Error::Empty("test-time augmentation set is empty".into()));
    }
    if let Some(bad) = tta.iter().find(|s| !s.is_geometric()) {
        return Err(Error::invalid(format!(
            "augmentation {bad:?} is not an invertible flip/rotation"
        )));
    }
    Ok(())
}

/// One aleatoric map per ensemble member, stitched like probabilities
/// (per-patch variance planes averaged over covering patches).
pub fn aleatoric_maps(
    pyramid: &SlidePyramid,
    grid: &SampleGrid,
    ensemble: &EnsembleHandle,
    cfg: &InferenceConfig,
    tta: &[AugmentSpec],
    progress: Option<ProgressFn<'_>>,
) -> Result<Vec<UncertaintyMap>> {
    cfg.validate()?;
    check_tta(tta)?;
    let origins: Vec<(i64, i64)> = grid.origins().collect();
    let job = StitchJob {
        pyramid,
        origins: &origins,
        patch_size: grid.patch_size,
        downsample: cfg.resolved_downsample(pyramid.dimensions()),
        batch_size: cfg.batch_size,
        workers: cfg.resolved_workers(),
        outputs: ensemble.len(),
    };
    let partials = job.run(progress, |batch| {
        ensemble
            .members()
            .iter()
            .enumerate()
            .map(|(i, m)| tta_variance(m.as_ref(), batch, tta).map_err(|e| (i, e)))
            .collect()
    })?;
    let (w, h) = job.map_dims();
    partials
        .iter()
        .map(|p| {
            Ok(UncertaintyMap {
                kind: UncertaintyKind::Aleatoric,
                map: merge_partials(pyramid.slide_id(), job.downsample, w, h, p)?,
            })
        })
        .collect()
}

pub fn aleatoric_map(
    pyramid: &SlidePyramid,
    grid: &SampleGrid,
    scorer: Arc<dyn Scorer>,
    cfg: &InferenceConfig,
    tta: &[AugmentSpec],
) -> Result<UncertaintyMap> {
    let handle = EnsembleHandle::new(vec![scorer])?;
    Ok(aleatoric_maps(pyramid, grid, &handle, cfg, tta, None)?.remove(0))
}

fn congruent<'a>(maps: impl Iterator<Item = &'a ProbabilityMap>) -> Result<Vec<&'a ProbabilityMap>> {
    let maps: Vec<_> = maps.collect();
    if let Some(first) = maps.first() {
        for m in &maps[1..] {
            ensure_same_dims(first.dims(), m.dims())?;
        }
    }
    Ok(maps)
}

/// Per-pixel population variance across member maps where all are defined.
pub fn epistemic_map(members: &[ProbabilityMap]) -> Result<UncertaintyMap> {
    if members.len() < 2 {
        return Err(Error::invalid(format!(
            "epistemic variance needs at least 2 members, got {}",
            members.len()
        )));
    }
    let maps = congruent(members.iter())?;
    let (w, h) = maps[0].dims();
    let mut buf = vec![0f64; maps.len()];
    let values = Plane::from_fn(w, h, |x, y| {
        for (k, m) in maps.iter().enumerate() {
            match m.value(x, y) {
                Some(v) => buf[k] = v as f64,
                None => return f32::NAN,
            }
        }
        population_variance(&buf) as f32
    });
    Ok(UncertaintyMap {
        kind: UncertaintyKind::Epistemic,
        map: ProbabilityMap::from_values(&maps[0].slide_id, maps[0].downsample, values),
    })
}

pub fn combined_map(
    aleatoric: &[UncertaintyMap],
    epistemic: &UncertaintyMap,
    rule: CombineRule,
) -> Result<UncertaintyMap> {
    if aleatoric.is_empty() {
        return Err(Error::Empty("no aleatoric maps to combine".into()));
    }
    let maps = congruent(aleatoric.iter().map(|a| &a.map).chain([&epistemic.map]))?;
    let (al, ep) = maps.split_at(maps.len() - 1);
    let ep = ep[0];
    let (w, h) = ep.dims();
    let values = Plane::from_fn(w, h, |x, y| {
        let Some(e) = ep.value(x, y) else {
            return f32::NAN;
        };
        let mut sum = 0f64;
        for a in al {
            match a.value(x, y) {
                Some(v) => sum += v as f64,
                None => return f32::NAN,
            }
        }
        let mean = sum / al.len() as f64;
        match rule {
            CombineRule::MeanPlusEpistemic => (mean + e as f64) as f32,
            CombineRule::Max => mean.max(e as f64) as f32,
        }
    });
    Ok(UncertaintyMap {
        kind: UncertaintyKind::Combined,
        map: ProbabilityMap::from_values(&ep.slide_id, ep.downsample, values),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn map(values: Vec<f32>) -> ProbabilityMap {
        let n = values.len();
        ProbabilityMap::from_values("s", 1, Plane::from_vec(n, 1, values).unwrap())
    }

    #[test]
    fn epistemic_hand_values() {
        let e = epistemic_map(&[map(vec![0.0, 0.2]), map(vec![1.0, 0.5]), map(vec![0.5, 0.8])]).unwrap();
        assert!((e.values().get(1, 0) - 0.06).abs() < 1e-7);
        let e2 = epistemic_map(&[map(vec![0.0]), map(vec![1.0])]).unwrap();
        assert_eq!(e2.values().get(0, 0), 0.25);
        assert!(epistemic_map(&[map(vec![0.0])]).is_err());
    }

    #[test]
    fn combined_adds_mean_aleatoric() {
        let al = |v: Vec<f32>| UncertaintyMap {
            kind: UncertaintyKind::Aleatoric,
            map: map(v),
        };
        let ep = UncertaintyMap {
            kind: UncertaintyKind::Epistemic,
            map: map(vec![0.01, f32::NAN]),
        };
        let c = combined_map(&[al(vec![0.02, 0.0]), al(vec![0.04, 0.0])], &ep, CombineRule::default()).unwrap();
        assert!((c.values().get(0, 0) - 0.04).abs() < 1e-8);
        assert!(c.values().get(1, 0).is_nan());
    }

    #[test]
    fn non_geometric_tta_rejected() {
        let mut spec = AugmentSpec::identity();
        spec.gaussian_blur = true;
        assert!(check_tta(&[spec]).is_err());
        assert!(check_tta(&AugmentSpec::default_tta_set()).is_ok());
    }
}
