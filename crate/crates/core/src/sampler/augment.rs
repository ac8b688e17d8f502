//! Patch augmentation: dihedral geometry, Gaussian blur and colour jitter.

use image::{Rgb, RgbImage};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::preproc::{hsv_to_rgb_pixel, rgb_to_hsv_pixel, Hsv};
use crate::raster::{plane_to_rgb, rgb_to_plane, Plane};

pub const MAX_BRIGHTNESS_DELTA: f64 = 64.0 / 255.0;
pub const MAX_CONTRAST_DELTA: f64 = 0.75;
pub const MAX_HUE_DELTA: f64 = 0.25;
pub const MAX_SATURATION_DELTA: f64 = 0.04;

const BLUR_SIGMA: f64 = 1.0;
const BLUR_RADIUS: i64 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Flip {
    #[default]
    None,
    Horizontal,
    Vertical,
}

/// One augmentation. Geometry is applied first (flip, then `rot90`
/// counter-clockwise quarter turns), then blur, then colour changes in the
/// order brightness, contrast, saturation, hue.
///
/// Colour deltas are signed and applied as given:
/// brightness adds `delta * 255`, contrast scales deviations from the
/// per-channel mean by `1 + delta`, saturation scales S by `1 + delta`, hue
/// rotates by `delta * 360` degrees.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct AugmentSpec {
    pub flip: Flip,
    pub rot90: u8,
    pub gaussian_blur: bool,
    pub brightness_delta: f64,
    pub contrast_delta: f64,
    pub hue_delta: f64,
    pub saturation_delta: f64,
    pub seed: u64,
}

impl AugmentSpec {
    pub fn identity() -> Self {
        Self::default()
    }

    pub fn geometric(flip: Flip, rot90: u8) -> Self {
        AugmentSpec {
            flip,
            rot90: rot90 % 4,
            ..Self::default()
        }
    }

    pub fn is_geometric(&self) -> bool {
        !self.gaussian_blur
            && self.brightness_delta == 0.0
            && self.contrast_delta == 0.0
            && self.hue_delta == 0.0
            && self.saturation_delta == 0.0
    }

    pub fn validate(&self) -> Result<()> {
        let checks = [
            ("brightness_delta", self.brightness_delta, MAX_BRIGHTNESS_DELTA),
            ("contrast_delta", self.contrast_delta, MAX_CONTRAST_DELTA),
            ("hue_delta", self.hue_delta, MAX_HUE_DELTA),
            ("saturation_delta", self.saturation_delta, MAX_SATURATION_DELTA),
        ];
        for (name, v, max) in checks {
            // a hair of slack so 64.0 / 255.0 written out by hand passes
            if !v.is_finite() || v.abs() > max + 1e-12 {
                return Err(Error::invalid(format!("{name} {v} outside [-{max}, {max}]")));
            }
        }
        if self.rot90 > 3 {
            return Err(Error::invalid(format!("rot90 must be 0..=3, got {}", self.rot90)));
        }
        Ok(())
    }

    /// Draw a random spec with every delta uniform within its maximum.
    pub fn sample(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let flip = match rng.random_range(0..3) {
            0 => Flip::None,
            1 => Flip::Horizontal,
            _ => Flip::Vertical,
        };
        AugmentSpec {
            flip,
            rot90: rng.random_range(0..4),
            gaussian_blur: rng.random_bool(0.5),
            brightness_delta: rng.random_range(-MAX_BRIGHTNESS_DELTA..=MAX_BRIGHTNESS_DELTA),
            contrast_delta: rng.random_range(-MAX_CONTRAST_DELTA..=MAX_CONTRAST_DELTA),
            hue_delta: rng.random_range(-MAX_HUE_DELTA..=MAX_HUE_DELTA),
            saturation_delta: rng.random_range(-MAX_SATURATION_DELTA..=MAX_SATURATION_DELTA),
            seed,
        }
    }

    /// The six default test-time transforms: identity, three quarter turns,
    /// horizontal and vertical flip.
    pub fn default_tta_set() -> Vec<AugmentSpec> {
        vec![
            Self::identity(),
            Self::geometric(Flip::None, 1),
            Self::geometric(Flip::None, 2),
            Self::geometric(Flip::None, 3),
            Self::geometric(Flip::Horizontal, 0),
            Self::geometric(Flip::Vertical, 0),
        ]
    }
}

fn flip_plane<T: Copy>(p: &Plane<T>, flip: Flip) -> Plane<T> {
    let (w, h) = p.dims();
    match flip {
        Flip::None => p.clone(),
        Flip::Horizontal => Plane::from_fn(w, h, |x, y| p.get(w - 1 - x, y)),
        Flip::Vertical => Plane::from_fn(w, h, |x, y| p.get(x, h - 1 - y)),
    }
}

/// One counter-clockwise quarter turn.
fn rot90_ccw<T: Copy>(p: &Plane<T>) -> Plane<T> {
    let (w, h) = p.dims();
    Plane::from_fn(h, w, |x, y| p.get(w - 1 - y, x))
}

fn rotate<T: Copy>(p: &Plane<T>, quarter_turns: u8) -> Plane<T> {
    (0..quarter_turns % 4).fold(p.clone(), |acc, _| rot90_ccw(&acc))
}

/// Apply only the geometric part of `spec`.
pub fn augment_geometric<T: Copy>(spec: &AugmentSpec, plane: &Plane<T>) -> Plane<T> {
    rotate(&flip_plane(plane, spec.flip), spec.rot90)
}

/// Undo the geometric transform of `spec`. Fails when `spec` carries colour
/// or blur operations, which cannot be inverted.
pub fn invert_geometric<T: Copy>(spec: &AugmentSpec, plane: &Plane<T>) -> Result<Plane<T>> {
    if !spec.is_geometric() {
        return Err(Error::invalid(
            "only flips and quarter turns can be inverted; spec carries colour or blur operations",
        ));
    }
    let unrotated = rotate(plane, (4 - spec.rot90 % 4) % 4);
    Ok(flip_plane(&unrotated, spec.flip))
}

fn gaussian_weights() -> Vec<f64> {
    let raw: Vec<f64> = (-BLUR_RADIUS..=BLUR_RADIUS)
        .map(|i| (-(i * i) as f64 / (2.0 * BLUR_SIGMA * BLUR_SIGMA)).exp())
        .collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|v| v / total).collect()
}

fn blur(px: &Plane<[f64; 3]>) -> Plane<[f64; 3]> {
    let k = gaussian_weights();
    let (w, h) = px.dims();
    let pass = |src: &Plane<[f64; 3]>, horizontal: bool| {
        Plane::from_fn(w, h, |x, y| {
            let mut acc = [0.0; 3];
            for (i, wt) in k.iter().enumerate() {
                let o = i as i64 - BLUR_RADIUS;
                let (sx, sy) = if horizontal {
                    ((x as i64 + o).clamp(0, w as i64 - 1) as usize, y)
                } else {
                    (x, (y as i64 + o).clamp(0, h as i64 - 1) as usize)
                };
                let v = src.get(sx, sy);
                for c in 0..3 {
                    acc[c] += wt * v[c];
                }
            }
            acc
        })
    };
    pass(&pass(px, true), false)
}

pub fn augment(patch: &RgbImage, spec: &AugmentSpec) -> Result<RgbImage> {
    spec.validate()?;
    let geo = augment_geometric(spec, &rgb_to_plane(patch));
    if spec.is_geometric() {
        return Ok(plane_to_rgb(&geo));
    }
    let mut px = geo.map(|p| p.map(|c| c as f64));
    if spec.gaussian_blur {
        px = blur(&px);
    }
    if spec.brightness_delta != 0.0 {
        let shift = spec.brightness_delta * 255.0;
        px = px.map(|p| p.map(|c| c + shift));
    }
    if spec.contrast_delta != 0.0 {
        let n = px.len().max(1) as f64;
        let mut mean = [0.0; 3];
        for p in px.as_slice() {
            for c in 0..3 {
                mean[c] += p[c] / n;
            }
        }
        let f = 1.0 + spec.contrast_delta;
        px = px.map(|p| [0, 1, 2].map(|c| (p[c] - mean[c]) * f + mean[c]));
    }
    if spec.saturation_delta != 0.0 || spec.hue_delta != 0.0 {
        px = px.map(|p| {
            let clamped = p.map(|c| c.round().clamp(0.0, 255.0) as u8);
            let hsv = rgb_to_hsv_pixel(clamped);
            let adjusted = Hsv {
                h: (hsv.h + spec.hue_delta * 360.0).rem_euclid(360.0),
                s: (hsv.s * (1.0 + spec.saturation_delta)).clamp(0.0, 1.0),
                v: hsv.v,
            };
            hsv_to_rgb_pixel(adjusted).map(|c| c * 255.0)
        });
    }
    let (w, h) = px.dims();
    Ok(RgbImage::from_fn(w as u32, h as u32, |x, y| {
        Rgb(px
            .get(x as usize, y as usize)
            .map(|c| c.round().clamp(0.0, 255.0) as u8))
    }))
}
