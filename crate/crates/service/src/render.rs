//! Overlay tiles rendered from stored maps.
//!
//! Each overlay pixel at pyramid level `L` samples the map cell under the
//! level-0 centre of that pixel, so neighbouring tiles never disagree on a
//! shared edge. Colormaps are 256-entry lookups built by piecewise-linear
//! interpolation between evenly spaced anchors, rounded half up.

use std::str::FromStr;

use image::{Rgba, RgbaImage};
use serde::Serialize;
use slidescope_core::inference::ProbabilityMap;
use slidescope_core::{Error, Result};

/// Uncertainty values are scaled so that this variance maps to the top colour.
pub const UNCERTAINTY_FULL_SCALE: f32 = 0.25;
pub const SEGMENTATION_RGBA: [u8; 4] = [255, 0, 0, 255];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Colormap {
    Jet,
    Viridis,
    Grey,
}

impl Colormap {
    pub const ALL: [Colormap; 3] = [Colormap::Jet, Colormap::Viridis, Colormap::Grey];

    pub fn name(self) -> &'static str {
        match self {
            Colormap::Jet => "jet",
            Colormap::Viridis => "viridis",
            Colormap::Grey => "grey",
        }
    }

    fn anchors(self) -> &'static [[u8; 3]] {
        match self {
            Colormap::Jet => &[[0, 0, 255], [0, 255, 255], [0, 255, 0], [255, 255, 0], [255, 0, 0]],
            Colormap::Viridis => &[[68, 1, 84], [59, 82, 139], [33, 145, 140], [94, 201, 98], [253, 231, 37]],
            Colormap::Grey => &[[0, 0, 0], [255, 255, 255]],
        }
    }

    pub fn lut(self) -> [[u8; 3]; 256] {
        let anchors = self.anchors();
        let segments = (anchors.len() - 1) as u32;
        let mut out = [[0u8; 3]; 256];
        for (i, entry) in out.iter_mut().enumerate() {
            // Position along the anchor chain in units of 1/255.
            let pos = i as u32 * segments;
            let seg = (pos / 255).min(segments - 1) as usize;
            let frac = pos - seg as u32 * 255;
            let (a, b) = (anchors[seg], anchors[seg + 1]);
            for c in 0..3 {
                let num = a[c] as i64 * (255 - frac as i64) + b[c] as i64 * frac as i64;
                entry[c] = ((2 * num + 255) / 510) as u8;
            }
        }
        out
    }
}

impl FromStr for Colormap {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Colormap::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown colormap {s:?}")))
    }
}

/// Lookup index for a value in `[0, full_scale]`.
pub fn lut_index(v: f32, full_scale: f32) -> usize {
    let t = (v / full_scale).clamp(0.0, 1.0);
    (t * 255.0).round() as usize
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OverlayStyle {
    /// Colour each covered cell through the lookup.
    Colormap { lut: [[u8; 3]; 256], full_scale: f32 },
    /// Fixed colour where the value reaches `threshold`.
    Threshold { threshold: f32 },
}

/// One overlay tile at `level`. `level_dims` are that level's pixel
/// dimensions; pixels beyond them or over uncovered cells are transparent.
pub fn render_tile(
    map: &ProbabilityMap,
    style: &OverlayStyle,
    level: u32,
    level_dims: (u32, u32),
    tile: (u32, u32),
    tile_size: u32,
) -> RgbaImage {
    let mut img = RgbaImage::new(tile_size, tile_size);
    let d = map.downsample as u64;
    for j in 0..tile_size {
        let gy = tile.1 as u64 * tile_size as u64 + j as u64;
        if gy >= level_dims.1 as u64 {
            break;
        }
        let my = (((2 * gy + 1) << level) / (2 * d)) as usize;
        for i in 0..tile_size {
            let gx = tile.0 as u64 * tile_size as u64 + i as u64;
            if gx >= level_dims.0 as u64 {
                break;
            }
            let mx = (((2 * gx + 1) << level) / (2 * d)) as usize;
            if mx >= map.width() || my >= map.height() {
                continue;
            }
            let Some(v) = map.value(mx, my) else { continue };
            let px = match style {
                OverlayStyle::Colormap { lut, full_scale } => {
                    let [r, g, b] = lut[lut_index(v, *full_scale)];
                    [r, g, b, 255]
                }
                OverlayStyle::Threshold { threshold } => {
                    if v >= *threshold {
                        SEGMENTATION_RGBA
                    } else {
                        continue;
                    }
                }
            };
            img.put_pixel(i, j, Rgba(px));
        }
    }
    img
}

pub fn encode_rgba_png(img: &RgbaImage) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    img.write_to(&mut std::io::Cursor::new(&mut out), image::ImageFormat::Png)?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use slidescope_core::Plane;

    #[test]
    fn lut_hits_anchors() {
        let jet = Colormap::Jet.lut();
        assert_eq!(jet[0], [0, 0, 255]);
        assert_eq!(jet[255], [255, 0, 0]);
        let grey = Colormap::Grey.lut();
        for (i, c) in grey.iter().enumerate() {
            assert_eq!(*c, [i as u8; 3]);
        }
        let v = Colormap::Viridis.lut();
        assert_eq!(v[0], [68, 1, 84]);
        assert_eq!(v[255], [253, 231, 37]);
    }

    #[test]
    fn segmentation_tile_follows_threshold() {
        let map = ProbabilityMap::from_values("s", 4, Plane::filled(8, 8, 0.7f32));
        let at = |t: f32| render_tile(&map, &OverlayStyle::Threshold { threshold: t }, 0, (32, 32), (0, 0), 16);
        assert!(at(0.7).pixels().all(|p| p.0 == SEGMENTATION_RGBA));
        assert!(at(0.7001).pixels().all(|p| p.0[3] == 0));
    }

    #[test]
    fn tiles_beyond_level_are_transparent() {
        let map = ProbabilityMap::from_values("s", 1, Plane::filled(20, 20, 0.5f32));
        let style = OverlayStyle::Colormap { lut: Colormap::Grey.lut(), full_scale: 1.0 };
        let img = render_tile(&map, &style, 0, (20, 20), (1, 1), 16);
        assert_eq!(img.get_pixel(3, 3).0, [128, 128, 128, 255]);
        assert_eq!(img.get_pixel(4, 3).0[3], 0);
    }
}
