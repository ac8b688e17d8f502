use image::{Rgb, RgbImage};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use slidescope_core::scorer::{PatchBatch, ProbPatchBatch, Scorer};
use slidescope_core::{Mask, Plane, Result};

pub const GLASS: [u8; 3] = [242, 242, 240];
pub const STROMA: [u8; 3] = [226, 150, 196];
pub const TUMOUR: [u8; 3] = [140, 60, 150];

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ellipse {
    pub cx: f64,
    pub cy: f64,
    pub rx: f64,
    pub ry: f64,
}

impl Ellipse {
    pub fn contains(&self, x: f64, y: f64) -> bool {
        let (u, v) = ((x - self.cx) / self.rx, (y - self.cy) / self.ry);
        u * u + v * v <= 1.0
    }

    /// Pixel `(x, y)` is inside when its centre is.
    pub fn contains_px(&self, x: u32, y: u32) -> bool {
        self.contains(x as f64 + 0.5, y as f64 + 0.5)
    }
}

/// A slide with a single tissue ellipse and tumour ellipses inside it.
#[derive(Debug, Clone)]
pub struct SynthSlide {
    pub image: RgbImage,
    pub tissue: Ellipse,
    pub tumours: Vec<Ellipse>,
    /// Level-0 tumour annotation.
    pub annotation: Mask,
}

pub fn synth_slide(seed: u64, size: u32, tumours: usize) -> SynthSlide {
    let mut r = rng(seed);
    let s = size as f64;
    let tissue = Ellipse {
        cx: s / 2.0,
        cy: s / 2.0,
        rx: s * r.random_range(0.36..0.45),
        ry: s * r.random_range(0.36..0.45),
    };
    let mut blobs = Vec::new();
    while blobs.len() < tumours {
        let rx = s * r.random_range(0.02..0.1);
        let ry = s * r.random_range(0.02..0.1);
        let cx = r.random_range(0.0..s);
        let cy = r.random_range(0.0..s);
        // Keep the whole blob well inside the tissue.
        let inner = Ellipse {
            rx: tissue.rx - rx.max(ry) - 8.0,
            ry: tissue.ry - rx.max(ry) - 8.0,
            ..tissue
        };
        if inner.rx > 0.0 && inner.ry > 0.0 && inner.contains(cx, cy) {
            blobs.push(Ellipse { cx, cy, rx, ry });
        }
    }
    let annotation = Plane::from_fn(size as usize, size as usize, |x, y| {
        blobs.iter().any(|b| b.contains_px(x as u32, y as u32))
    });
    let image = RgbImage::from_fn(size, size, |x, y| {
        if annotation.get(x as usize, y as usize) {
            Rgb(TUMOUR)
        } else if tissue.contains_px(x, y) {
            Rgb(STROMA)
        } else {
            Rgb(GLASS)
        }
    });
    SynthSlide {
        image,
        tissue,
        tumours: blobs,
        annotation,
    }
}

/// Uniform random noise image.
pub fn noise_image(seed: u64, w: u32, h: u32) -> RgbImage {
    let mut r = rng(seed);
    RgbImage::from_fn(w, h, |_, _| Rgb([r.random(), r.random(), r.random()]))
}

/// Bernoulli mask with foreground probability `p`.
pub fn random_mask(r: &mut impl Rng, w: usize, h: usize, p: f64) -> Mask {
    Plane::from_fn(w, h, |_, _| r.random_bool(p))
}

/// Union of a few random axis-aligned rectangles.
pub fn random_rects(r: &mut impl Rng, w: usize, h: usize, n: usize) -> Mask {
    let mut m = Plane::filled(w, h, false);
    for _ in 0..n {
        let x0 = r.random_range(0..w);
        let y0 = r.random_range(0..h);
        let x1 = r.random_range(x0..w) + 1;
        let y1 = r.random_range(y0..h) + 1;
        for y in y0..y1 {
            for x in x0..x1 {
                m.set(x, y, true);
            }
        }
    }
    m
}

pub fn random_plane(r: &mut impl Rng, w: usize, h: usize) -> Plane<f64> {
    Plane::from_fn(w, h, |_, _| r.random::<f64>())
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Scorer whose output differs between overlapping patches: each value mixes
/// the patch origin, the position inside the patch and the red channel.
#[derive(Debug, Clone, Copy)]
pub struct PatternScorer {
    pub seed: u64,
}

impl PatternScorer {
    pub fn value(&self, origin: (i64, i64), local: (usize, usize), red: u8) -> f32 {
        let h = splitmix(
            self.seed
                ^ splitmix(origin.0 as u64)
                ^ splitmix((origin.1 as u64).rotate_left(21))
                ^ splitmix(((local.0 as u64) << 32) | local.1 as u64),
        );
        let noise = (h >> 40) as f32 / (1u64 << 24) as f32;
        0.5 * noise + 0.5 * red as f32 / 255.0
    }
}

impl Scorer for PatternScorer {
    fn score(&self, batch: &PatchBatch) -> Result<ProbPatchBatch> {
        let s = batch.patch_size as usize;
        let mut out = Vec::with_capacity(batch.n * s * s);
        for i in 0..batch.n {
            let o = batch.origins[i];
            let px = batch.patch_bytes(i);
            for y in 0..s {
                for x in 0..s {
                    out.push(self.value((o.x, o.y), (x, y), px[3 * (y * s + x)]));
                }
            }
        }
        ProbPatchBatch::new(batch.n, batch.patch_size, out)
    }
}

/// Scorer that always fails, for error-path tests.
#[derive(Debug, Clone, Copy)]
pub struct FailingScorer;

impl Scorer for FailingScorer {
    fn score(&self, _batch: &PatchBatch) -> Result<ProbPatchBatch> {
        Err(slidescope_core::Error::Protocol("scorer refused the batch".into()))
    }
}
