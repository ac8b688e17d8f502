//! Artifact persistence: atomic writes, 1-bit mask PNGs, float planes with
//! JSON sidecars, and CSV tables.

use std::fs;
use std::io::Cursor;
use std::path::{Path, PathBuf};

use image::codecs::png::PngEncoder;
use image::{ExtendedColorType, ImageEncoder};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::preproc::TissueMask;
use crate::raster::{Mask, Plane};

/// Write to a sibling temp file, then rename over `path`.
pub fn atomic_write(path: impl AsRef<Path>, bytes: &[u8]) -> Result<()> {
    let path = path.as_ref();
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(format!(".tmp{}", std::process::id()));
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn atomic_write_json<T: Serialize>(path: impl AsRef<Path>, value: &T) -> Result<()> {
    atomic_write(path, &serde_json::to_vec_pretty(value)?)
}

pub fn read_json<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<T> {
    Ok(serde_json::from_slice(&fs::read(path)?)?)
}

/// `foo.png` -> `foo.json`
pub fn sidecar_path(path: impl AsRef<Path>) -> PathBuf {
    path.as_ref().with_extension("json")
}

/// 1-bit grayscale PNG, white = foreground.
pub fn encode_mask_png(mask: &Mask) -> Result<Vec<u8>> {
    let (w, h) = mask.dims();
    if w == 0 || h == 0 {
        return Err(Error::Empty("cannot encode a zero-sized mask".into()));
    }
    let row_bytes = w.div_ceil(8);
    let mut packed = vec![0u8; row_bytes * h];
    for y in 0..h {
        for (x, &b) in mask.row(y).iter().enumerate() {
            if b {
                packed[y * row_bytes + x / 8] |= 0x80 >> (x % 8);
            }
        }
    }
    let mut buf = Vec::new();
    {
        let mut enc = png::Encoder::new(&mut buf, w as u32, h as u32);
        enc.set_color(png::ColorType::Grayscale);
        enc.set_depth(png::BitDepth::One);
        let mut writer = enc
            .write_header()
            .map_err(|e| Error::invalid(format!("png: {e}")))?;
        writer
            .write_image_data(&packed)
            .map_err(|e| Error::invalid(format!("png: {e}")))?;
    }
    Ok(buf)
}

pub fn write_mask_png(path: impl AsRef<Path>, mask: &Mask) -> Result<()> {
    atomic_write(path, &encode_mask_png(mask)?)
}

/// Any PNG; a pixel is foreground when any channel is non-zero.
pub fn decode_mask_png(bytes: &[u8]) -> Result<Mask> {
    let img = image::load_from_memory_with_format(bytes, image::ImageFormat::Png)?.into_rgb8();
    let (w, h) = img.dimensions();
    let data = img.pixels().map(|p| p.0 != [0, 0, 0]).collect();
    Plane::from_vec(w as usize, h as usize, data)
}

pub fn read_mask_png(path: impl AsRef<Path>) -> Result<Mask> {
    decode_mask_png(&fs::read(path)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaskSidecar {
    pub slide_id: String,
    pub level: u32,
    pub downsample: u32,
}

/// Writes `path` (PNG) and its `.json` sidecar.
pub fn write_tissue_mask(path: impl AsRef<Path>, mask: &TissueMask) -> Result<()> {
    let path = path.as_ref();
    write_mask_png(path, &mask.mask)?;
    atomic_write_json(
        sidecar_path(path),
        &MaskSidecar {
            slide_id: mask.slide_id.clone(),
            level: mask.level,
            downsample: mask.downsample,
        },
    )
}

pub fn read_tissue_mask(path: impl AsRef<Path>) -> Result<TissueMask> {
    let path = path.as_ref();
    let side: MaskSidecar = read_json(sidecar_path(path))?;
    let mask = read_mask_png(path)?;
    Ok(TissueMask {
        slide_id: side.slide_id,
        level: side.level,
        downsample: side.downsample,
        mask,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlaneSidecar {
    pub slide_id: String,
    pub downsample: u32,
    pub width: usize,
    pub height: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kind: Option<String>,
}

/// Raw little-endian f32 plane; NaN marks pixels no patch covered.
pub fn encode_f32_plane(plane: &Plane<f32>) -> Vec<u8> {
    plane.as_slice().iter().flat_map(|v| v.to_le_bytes()).collect()
}

pub fn decode_f32_plane(bytes: &[u8], width: usize, height: usize) -> Result<Plane<f32>> {
    if bytes.len() != width * height * 4 {
        return Err(Error::invalid(format!(
            "float plane has {} bytes, expected {}",
            bytes.len(),
            width * height * 4
        )));
    }
    let data = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Plane::from_vec(width, height, data)
}

/// 8-bit grey preview: `value / full_scale` mapped to 0..255, NaN as 0.
pub fn preview_png(plane: &Plane<f32>, full_scale: f32) -> Result<Vec<u8>> {
    let (w, h) = plane.dims();
    let grey: Vec<u8> = plane
        .as_slice()
        .iter()
        .map(|&v| {
            if v.is_nan() {
                0
            } else {
                ((v / full_scale).clamp(0.0, 1.0) * 255.0).round() as u8
            }
        })
        .collect();
    let mut buf = Vec::new();
    PngEncoder::new(Cursor::new(&mut buf)).write_image(
        &grey,
        w as u32,
        h as u32,
        ExtendedColorType::L8,
    )?;
    Ok(buf)
}

/// Writes `<base>.f32`, `<base>.json` and `<base>.png`.
pub fn write_f32_plane(
    base: impl AsRef<Path>,
    plane: &Plane<f32>,
    sidecar: &PlaneSidecar,
    preview_full_scale: f32,
) -> Result<()> {
    let base = base.as_ref();
    if plane.dims() != (sidecar.width, sidecar.height) {
        return Err(Error::ShapeMismatch {
            expected: (sidecar.width, sidecar.height),
            actual: plane.dims(),
        });
    }
    atomic_write(base.with_extension("f32"), &encode_f32_plane(plane))?;
    if !plane.is_empty() {
        atomic_write(base.with_extension("png"), &preview_png(plane, preview_full_scale)?)?;
    }
    atomic_write_json(base.with_extension("json"), sidecar)
}

pub fn read_f32_plane(base: impl AsRef<Path>) -> Result<(Plane<f32>, PlaneSidecar)> {
    let base = base.as_ref();
    let side: PlaneSidecar = read_json(base.with_extension("json"))?;
    let plane = decode_f32_plane(&fs::read(base.with_extension("f32"))?, side.width, side.height)?;
    Ok((plane, side))
}

pub fn write_csv<T: Serialize>(path: impl AsRef<Path>, rows: &[T]) -> Result<()> {
    atomic_write(path, &csv_bytes(rows)?)
}

pub fn csv_bytes<T: Serialize>(rows: &[T]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    w.into_inner()
        .map_err(|e| Error::Io(e.into_error()))
}

pub fn read_csv<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<Vec<T>> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}
