use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{PatchBatch, PatchOrigin, ProbPatchBatch, Scorer};
use crate::error::{Error, Result};
use crate::raster::{Mask, Plane};
use crate::sampler::{augment_geometric, Flip};

pub(crate) fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub(crate) fn mix(parts: &[u64]) -> u64 {
    parts.iter().fold(0x5EED_u64, |acc, &p| splitmix64(acc ^ p))
}

fn transform_code(origin: &PatchOrigin) -> u64 {
    let flip = match origin.transform.flip {
        Flip::None => 0,
        Flip::Horizontal => 1,
        Flip::Vertical => 2,
    };
    flip * 4 + origin.transform.rot90 as u64
}

fn require_origins(batch: &PatchBatch, who: &str) -> Result<()> {
    if batch.origins.len() != batch.n {
        return Err(Error::invalid(format!(
            "{who} scorer needs the level-0 origin of every patch"
        )));
    }
    Ok(())
}

/// Emits one value everywhere.
#[derive(Debug, Clone)]
pub struct ConstantScorer {
    value: f32,
}

impl ConstantScorer {
    pub fn new(value: f32) -> Self {
        ConstantScorer {
            value: value.clamp(0.0, 1.0),
        }
    }
}

impl Scorer for ConstantScorer {
    fn score(&self, batch: &PatchBatch) -> Result<ProbPatchBatch> {
        let s = batch.patch_size as usize;
        ProbPatchBatch::new(batch.n, batch.patch_size, vec![self.value; batch.n * s * s])
    }

    fn describe(&self) -> String {
        format!("constant({})", self.value)
    }
}

/// Reads the ground-truth annotation under each patch and optionally corrupts
/// it with Gaussian noise (truncated at 5 sigma, then clamped to `[0, 1]`).
///
/// Noise is seeded by `(seed, origin, transform)`, so a patch scores the same
/// regardless of which batch or worker it lands in.
#[derive(Debug, Clone)]
pub struct OracleScorer {
    annotation: Arc<Mask>,
    sigma: f64,
    seed: u64,
}

impl OracleScorer {
    pub fn new(annotation: Arc<Mask>, sigma: f64, seed: u64) -> Self {
        OracleScorer {
            annotation,
            sigma,
            seed,
        }
    }
}

impl Scorer for OracleScorer {
    fn score(&self, batch: &PatchBatch) -> Result<ProbPatchBatch> {
        require_origins(batch, "oracle")?;
        let s = batch.patch_size as usize;
        let mut probs = Vec::with_capacity(batch.n * s * s);
        for origin in &batch.origins {
            let window = self.annotation.window(origin.x, origin.y, s, s, false);
            let gt = augment_geometric(&origin.transform, &window);
            if self.sigma == 0.0 {
                probs.extend(gt.as_slice().iter().map(|&b| if b { 1.0f32 } else { 0.0 }));
                continue;
            }
            let mut rng = ChaCha8Rng::seed_from_u64(mix(&[
                self.seed,
                origin.x as u64,
                origin.y as u64,
                transform_code(origin),
            ]));
            let normal = Normal::new(0.0, self.sigma).expect("sigma validated");
            let limit = 5.0 * self.sigma;
            for &b in gt.as_slice() {
                let noise = loop {
                    let v: f64 = normal.sample(&mut rng);
                    if v.abs() <= limit {
                        break v;
                    }
                };
                let base = if b { 1.0 } else { 0.0 };
                probs.push((base + noise).clamp(0.0, 1.0) as f32);
            }
        }
        ProbPatchBatch::new(batch.n, batch.patch_size, probs)
    }

    fn describe(&self) -> String {
        format!("oracle(sigma={})", self.sigma)
    }
}

/// Annotation-free synthetic heatmaps: one Gaussian bump per lattice cell,
/// with seeded position, radius and amplitude, squashed by a logistic into
/// soft blobs. The field is a function of absolute slide position, so
/// overlapping patches agree.
#[derive(Debug, Clone)]
pub struct BlobbyScorer {
    seed: u64,
    cell: u32,
}

impl BlobbyScorer {
    pub fn new(seed: u64, cell: u32) -> Self {
        BlobbyScorer {
            seed,
            cell: cell.max(1),
        }
    }

    fn bump(&self, cx: i64, cy: i64) -> (f64, f64, f64, f64) {
        let h = mix(&[self.seed, cx as u64, cy as u64]);
        let unit = |k: u64| (splitmix64(h ^ k) >> 11) as f64 / (1u64 << 53) as f64;
        let c = self.cell as f64;
        let x = (cx as f64 + unit(1)) * c;
        let y = (cy as f64 + unit(2)) * c;
        let radius = c * (0.1 + 0.3 * unit(3));
        let amp = unit(4) * 1.2;
        (x, y, radius, amp)
    }

    /// Probability at level-0 position `(x, y)`.
    pub fn value_at(&self, x: i64, y: i64) -> f32 {
        self.patch(x, y, 1).get(0, 0)
    }

    // The bump is separable, so each one contributes an outer product of a
    // row and a column profile over the patch.
    fn patch(&self, x0: i64, y0: i64, s: usize) -> Plane<f32> {
        let c = self.cell as i64;
        let span = |v0: i64| (v0.div_euclid(c) - 1, (v0 + s as i64 - 1).div_euclid(c) + 1);
        let ((cx0, cx1), (cy0, cy1)) = (span(x0), span(y0));
        let cols = (cx1 - cx0 + 1) as usize;
        let mut profiles = Vec::new();
        for cy in cy0..=cy1 {
            for cx in cx0..=cx1 {
                let (bx, by, r, a) = self.bump(cx, cy);
                let axis = |v0: i64, b: f64| -> Vec<f64> {
                    (0..s)
                        .map(|i| (-(v0 as f64 + i as f64 + 0.5 - b).powi(2) / (2.0 * r * r)).exp())
                        .collect()
                };
                profiles.push((a, axis(x0, bx), axis(y0, by)));
            }
        }
        let cell_of = |v0: i64, c0: i64| -> Vec<usize> {
            (0..s).map(|i| ((v0 + i as i64).div_euclid(c) - c0) as usize).collect()
        };
        let (gxs, gys) = (cell_of(x0, cx0), cell_of(y0, cy0));
        let mut out = Vec::with_capacity(s * s);
        for j in 0..s {
            let gy = gys[j];
            for i in 0..s {
                let gx = gxs[i];
                let mut field = 0.0;
                for cy in gy - 1..=gy + 1 {
                    for (a, px, py) in &profiles[cy * cols + gx - 1..=cy * cols + gx + 1] {
                        field += a * px[i] * py[j];
                    }
                }
                out.push((1.0 / (1.0 + (-(field - 0.5) * 12.0).exp())) as f32);
            }
        }
        Plane::from_vec(s, s, out).expect("patch buffer matches size")
    }
}

impl Scorer for BlobbyScorer {
    fn score(&self, batch: &PatchBatch) -> Result<ProbPatchBatch> {
        require_origins(batch, "blobby")?;
        let s = batch.patch_size as usize;
        let mut probs = Vec::with_capacity(batch.n * s * s);
        for origin in &batch.origins {
            let plane = self.patch(origin.x, origin.y, s);
            probs.extend_from_slice(augment_geometric(&origin.transform, &plane).as_slice());
        }
        ProbPatchBatch::new(batch.n, batch.patch_size, probs)
    }

    fn describe(&self) -> String {
        format!("blobby(seed={})", self.seed)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampler::AugmentSpec;

    fn batch(n: usize, s: u32, origins: Vec<PatchOrigin>) -> PatchBatch {
        PatchBatch::new(s, vec![0; n * (s * s * 3) as usize], origins).unwrap()
    }

    #[test]
    fn constant_fills_every_pixel() {
        let out = ConstantScorer::new(0.7).score(&batch(2, 256, vec![])).unwrap();
        assert_eq!(out.n, 2);
        assert!(out.probs.iter().all(|&v| v == 0.7));
    }

    #[test]
    fn oracle_without_noise_copies_annotation() {
        let ann = Arc::new(Plane::from_fn(64, 64, |x, _| x < 32));
        let scorer = OracleScorer::new(ann.clone(), 0.0, 0);
        let out = scorer.score(&batch(1, 16, vec![PatchOrigin::new(24, 10)])).unwrap();
        let expected: Vec<f32> = ann.window(24, 10, 16, 16, false).as_slice().iter().map(|&b| b as u8 as f32).collect();
        assert_eq!(out.probs, expected);
        assert!(scorer.score(&batch(1, 16, vec![])).is_err());
    }

    #[test]
    fn oracle_follows_patch_transform() {
        let ann = Arc::new(Plane::from_fn(8, 8, |x, y| x == 0 && y == 0));
        let scorer = OracleScorer::new(ann, 0.0, 0);
        let mut o = PatchOrigin::new(0, 0);
        o.transform = AugmentSpec::geometric(Flip::Horizontal, 0);
        let out = scorer.score(&batch(1, 4, vec![o])).unwrap();
        assert_eq!(out.probs[3], 1.0);
        assert_eq!(out.probs.iter().sum::<f32>(), 1.0);
    }

    #[test]
    fn blobby_is_position_consistent() {
        let s = BlobbyScorer::new(5, 64);
        let a = s.score(&batch(1, 32, vec![PatchOrigin::new(100, 40)])).unwrap();
        let b = s.score(&batch(1, 32, vec![PatchOrigin::new(116, 40)])).unwrap();
        for y in 0..32 {
            for x in 16..32 {
                assert_eq!(a.patch(0)[y * 32 + x], b.patch(0)[y * 32 + x - 16]);
            }
        }
        assert!(a.probs.iter().all(|v| (0.0..=1.0).contains(v)));
    }
}
