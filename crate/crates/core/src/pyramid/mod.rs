//! Pyramidal slide storage.
//!
//! A slide lives in a directory holding `manifest.json` and one folder per
//! level with fixed-size PNG tiles:
//!
//! ```text
//! <slide>/
//!   manifest.json
//!   level_0/0_0.png  level_0/1_0.png ...
//!   level_1/0_0.png ...
//! ```
//!
//! Level `L` has dimensions `ceil(level-0 dims / 2^L)` and is produced from
//! level `L-1` by 2x2 area averaging with round-half-up. Tiles at the right and
//! bottom edges are padded with the slide background colour, so every level is
//! fully tiled.
//!
//! A [`SlidePyramid`] is either backed by such a directory (tiles decoded
//! lazily through a shared [`TileCache`]) or held in memory right after
//! [`SlidePyramid::build`].

mod cache;

use std::fs;
use std::io::{BufWriter, Cursor};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use image::codecs::png::PngEncoder;
use image::{ImageEncoder, Rgb, RgbImage};
use serde::{Deserialize, Serialize};

pub use cache::{TileCache, TileKey};

use crate::error::{Error, Result};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const DEFAULT_BACKGROUND: [u8; 3] = [255, 255, 255];
const DEFAULT_CACHE_TILES: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LevelInfo {
    pub level: u32,
    pub width: u32,
    pub height: u32,
}

impl LevelInfo {
    pub fn downsample(&self) -> u32 {
        1 << self.level
    }
}

/// The `manifest.json` document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub slide_id: String,
    pub mpp_x: f64,
    pub mpp_y: f64,
    pub tile_size: u32,
    pub levels: Vec<LevelInfo>,
    pub background: [u8; 3],
}

impl Manifest {
    /// Geometric mean of the per-axis resolutions, used for areas and lengths.
    pub fn mpp(&self) -> f64 {
        (self.mpp_x * self.mpp_y).sqrt()
    }

    pub fn dimensions(&self) -> (u32, u32) {
        (self.levels[0].width, self.levels[0].height)
    }

    pub fn level(&self, level: u32) -> Result<&LevelInfo> {
        self.levels.get(level as usize).ok_or(Error::UnknownLevel {
            level,
            levels: self.levels.len(),
        })
    }

    /// Number of tiles along x and y at `level`.
    pub fn tile_grid(&self, level: u32) -> Result<(u32, u32)> {
        let info = self.level(level)?;
        Ok((
            info.width.div_ceil(self.tile_size),
            info.height.div_ceil(self.tile_size),
        ))
    }

    pub fn validate(&self) -> std::result::Result<(), String> {
        if self.slide_id.is_empty() {
            return Err("empty slide_id".into());
        }
        if !(self.mpp_x > 0.0 && self.mpp_y > 0.0) {
            return Err(format!("mpp must be positive, got ({}, {})", self.mpp_x, self.mpp_y));
        }
        if !self.tile_size.is_power_of_two() {
            return Err(format!("tile_size {} is not a power of two", self.tile_size));
        }
        let Some(base) = self.levels.first() else {
            return Err("no levels".into());
        };
        if base.width == 0 || base.height == 0 {
            return Err("level 0 has zero extent".into());
        }
        for (i, lvl) in self.levels.iter().enumerate() {
            let expected = level_dims(base.width, base.height, i as u32);
            if lvl.level != i as u32 || (lvl.width, lvl.height) != expected {
                return Err(format!(
                    "level {i}: expected index {i} with dims {expected:?}, got {} with {:?}",
                    lvl.level,
                    (lvl.width, lvl.height)
                ));
            }
        }
        Ok(())
    }
}

/// A rectangle to read. `x`, `y` are level-0 coordinates of the top-left
/// corner; `width`, `height` are in pixels of the requested level.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RegionRequest {
    pub level: u32,
    pub x: i64,
    pub y: i64,
    pub width: u32,
    pub height: u32,
}

impl RegionRequest {
    pub fn new(level: u32, x: i64, y: i64, width: u32, height: u32) -> Self {
        RegionRequest {
            level,
            x,
            y,
            width,
            height,
        }
    }
}

#[derive(Debug)]
enum Storage {
    Memory(Vec<RgbImage>),
    Disk { root: PathBuf, cache: Option<TileCache> },
}

#[derive(Debug)]
pub struct SlidePyramid {
    manifest: Manifest,
    storage: Storage,
}

pub(crate) fn level_dims(width: u32, height: u32, level: u32) -> (u32, u32) {
    let d = 1u32 << level;
    (width.div_ceil(d), height.div_ceil(d))
}

/// Number of levels needed so the coarsest level fits in one tile.
pub fn level_count(width: u32, height: u32, tile_size: u32) -> u32 {
    let max_dim = width.max(height) as u64;
    let mut levels = 1;
    while (tile_size as u64) << (levels - 1) < max_dim {
        levels += 1;
    }
    levels
}

/// 2x2 area average with round-half-up; edge cells average only the pixels
/// that exist.
pub fn downsample_2x(src: &RgbImage) -> RgbImage {
    let (w, h) = (src.width(), src.height());
    let (dw, dh) = (w.div_ceil(2), h.div_ceil(2));
    let mut out = RgbImage::new(dw, dh);
    for y in 0..dh {
        for x in 0..dw {
            let mut sum = [0u32; 3];
            let mut n = 0u32;
            for sy in 2 * y..(2 * y + 2).min(h) {
                for sx in 2 * x..(2 * x + 2).min(w) {
                    let p = src.get_pixel(sx, sy).0;
                    for c in 0..3 {
                        sum[c] += p[c] as u32;
                    }
                    n += 1;
                }
            }
            let px = sum.map(|s| ((s + n / 2) / n) as u8);
            out.put_pixel(x, y, Rgb(px));
        }
    }
    out
}

pub fn encode_png(img: &RgbImage) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    PngEncoder::new(Cursor::new(&mut buf)).write_image(
        img.as_raw(),
        img.width(),
        img.height(),
        image::ExtendedColorType::Rgb8,
    )?;
    Ok(buf)
}

fn tile_path(root: &Path, level: u32, tx: u32, ty: u32) -> PathBuf {
    root.join(format!("level_{level}")).join(format!("{tx}_{ty}.png"))
}

fn floor_div(a: i64, b: i64) -> i64 {
    a.div_euclid(b)
}

impl SlidePyramid {
    /// Build an in-memory pyramid from a flat RGB image.
    pub fn build(
        slide_id: impl Into<String>,
        image: &RgbImage,
        tile_size: u32,
        mpp: (f64, f64),
    ) -> Result<SlidePyramid> {
        if image.width() == 0 || image.height() == 0 {
            return Err(Error::Empty("image has zero extent".into()));
        }
        if !tile_size.is_power_of_two() || !(128..=1024).contains(&tile_size) {
            return Err(Error::invalid(format!(
                "tile size must be a power of two in [128, 1024], got {tile_size}"
            )));
        }
        if !(mpp.0 > 0.0 && mpp.1 > 0.0) {
            return Err(Error::invalid(format!("mpp must be positive, got {mpp:?}")));
        }
        let n = level_count(image.width(), image.height(), tile_size);
        let mut levels = vec![image.clone()];
        for _ in 1..n {
            let next = downsample_2x(levels.last().unwrap());
            levels.push(next);
        }
        let manifest = Manifest {
            slide_id: slide_id.into(),
            mpp_x: mpp.0,
            mpp_y: mpp.1,
            tile_size,
            levels: levels
                .iter()
                .enumerate()
                .map(|(i, img)| LevelInfo {
                    level: i as u32,
                    width: img.width(),
                    height: img.height(),
                })
                .collect(),
            background: DEFAULT_BACKGROUND,
        };
        Ok(SlidePyramid {
            manifest,
            storage: Storage::Memory(levels),
        })
    }

    pub fn with_background(mut self, background: [u8; 3]) -> Self {
        self.manifest.background = background;
        self
    }

    /// Open a slide directory with the default tile cache.
    pub fn open(dir: impl AsRef<Path>) -> Result<SlidePyramid> {
        Self::open_with_cache(dir, Some(DEFAULT_CACHE_TILES))
    }

    /// Open a slide directory; `cache_tiles = None` disables caching.
    pub fn open_with_cache(dir: impl AsRef<Path>, cache_tiles: Option<usize>) -> Result<SlidePyramid> {
        let root = dir.as_ref().to_path_buf();
        let manifest = read_manifest(&root.join(MANIFEST_FILE))?;
        Ok(SlidePyramid {
            manifest,
            storage: Storage::Disk {
                root,
                cache: cache_tiles.map(TileCache::new),
            },
        })
    }

    /// Write the pyramid to `dir` (created if missing), returning a
    /// disk-backed handle to the written slide.
    pub fn write(&self, dir: impl AsRef<Path>) -> Result<SlidePyramid> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir)?;
        for info in &self.manifest.levels {
            let level_dir = dir.join(format!("level_{}", info.level));
            fs::create_dir_all(&level_dir)?;
            let (nx, ny) = self.manifest.tile_grid(info.level)?;
            for ty in 0..ny {
                for tx in 0..nx {
                    let tile = self.tile(info.level, tx, ty)?;
                    let bytes = encode_png(&tile)?;
                    fs::write(tile_path(dir, info.level, tx, ty), bytes)?;
                }
            }
        }
        let tmp = dir.join(format!("{MANIFEST_FILE}.tmp"));
        {
            let f = BufWriter::new(fs::File::create(&tmp)?);
            serde_json::to_writer_pretty(f, &self.manifest)?;
        }
        fs::rename(&tmp, dir.join(MANIFEST_FILE))?;
        SlidePyramid::open(dir)
    }

    pub fn manifest(&self) -> &Manifest {
        &self.manifest
    }

    pub fn slide_id(&self) -> &str {
        &self.manifest.slide_id
    }

    pub fn dimensions(&self) -> (u32, u32) {
        self.manifest.dimensions()
    }

    pub fn level_count(&self) -> usize {
        self.manifest.levels.len()
    }

    pub fn root(&self) -> Option<&Path> {
        match &self.storage {
            Storage::Disk { root, .. } => Some(root),
            Storage::Memory(_) => None,
        }
    }

    pub fn cache(&self) -> Option<&TileCache> {
        match &self.storage {
            Storage::Disk { cache, .. } => cache.as_ref(),
            Storage::Memory(_) => None,
        }
    }

    /// One full tile (always `tile_size` square, background-padded).
    pub fn tile(&self, level: u32, tx: u32, ty: u32) -> Result<Arc<RgbImage>> {
        let (nx, ny) = self.manifest.tile_grid(level)?;
        if tx >= nx || ty >= ny {
            return Err(Error::invalid(format!(
                "tile ({tx}, {ty}) outside the {nx}x{ny} grid of level {level}"
            )));
        }
        let t = self.manifest.tile_size;
        match &self.storage {
            Storage::Memory(levels) => {
                let src = &levels[level as usize];
                let bg = Rgb(self.manifest.background);
                let mut tile = RgbImage::from_pixel(t, t, bg);
                let (x0, y0) = (tx * t, ty * t);
                for y in 0..t.min(src.height() - y0) {
                    for x in 0..t.min(src.width() - x0) {
                        tile.put_pixel(x, y, *src.get_pixel(x0 + x, y0 + y));
                    }
                }
                Ok(Arc::new(tile))
            }
            Storage::Disk { root, cache } => {
                let key = (level, tx, ty);
                if let Some(hit) = cache.as_ref().and_then(|c| c.get(key)) {
                    return Ok(hit);
                }
                let path = tile_path(root, level, tx, ty);
                let img = image::open(&path)?.into_rgb8();
                if img.width() != t || img.height() != t {
                    return Err(Error::invalid(format!(
                        "tile {} is {}x{}, expected {t}x{t}",
                        path.display(),
                        img.width(),
                        img.height()
                    )));
                }
                let img = Arc::new(img);
                if let Some(c) = cache {
                    c.insert(key, img.clone());
                }
                Ok(img)
            }
        }
    }

    /// Read a rectangle; pixels outside the slide are the background colour.
    pub fn read_region(&self, req: &RegionRequest) -> Result<RgbImage> {
        let info = *self.manifest.level(req.level)?;
        if req.width == 0 || req.height == 0 {
            return Err(Error::invalid("region width and height must be positive"));
        }
        let d = info.downsample() as i64;
        let lx = floor_div(req.x, d);
        let ly = floor_div(req.y, d);
        let bg = Rgb(self.manifest.background);
        let mut out = RgbImage::from_pixel(req.width, req.height, bg);

        // Intersection with the level extent.
        let x_start = lx.max(0);
        let y_start = ly.max(0);
        let x_end = (lx + req.width as i64).min(info.width as i64);
        let y_end = (ly + req.height as i64).min(info.height as i64);
        if x_start >= x_end || y_start >= y_end {
            return Ok(out);
        }

        if let Storage::Memory(levels) = &self.storage {
            let src = &levels[req.level as usize];
            for y in y_start..y_end {
                for x in x_start..x_end {
                    let p = *src.get_pixel(x as u32, y as u32);
                    out.put_pixel((x - lx) as u32, (y - ly) as u32, p);
                }
            }
            return Ok(out);
        }

        let t = self.manifest.tile_size as i64;
        for ty in (y_start / t)..=((y_end - 1) / t) {
            for tx in (x_start / t)..=((x_end - 1) / t) {
                let tile = self.tile(req.level, tx as u32, ty as u32)?;
                let ys = (ty * t).max(y_start);
                let ye = ((ty + 1) * t).min(y_end);
                let xs = (tx * t).max(x_start);
                let xe = ((tx + 1) * t).min(x_end);
                for y in ys..ye {
                    for x in xs..xe {
                        let p = *tile.get_pixel((x - tx * t) as u32, (y - ty * t) as u32);
                        out.put_pixel((x - lx) as u32, (y - ly) as u32, p);
                    }
                }
            }
        }
        Ok(out)
    }

    /// The whole of one level as a single raster.
    pub fn read_level(&self, level: u32) -> Result<RgbImage> {
        let info = *self.manifest.level(level)?;
        self.read_region(&RegionRequest::new(level, 0, 0, info.width, info.height))
    }
}

fn read_manifest(path: &Path) -> Result<Manifest> {
    let text = fs::read_to_string(path)?;
    let manifest: Manifest = serde_json::from_str(&text).map_err(|e| Error::Manifest {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })?;
    manifest.validate().map_err(|reason| Error::Manifest {
        path: path.to_path_buf(),
        reason,
    })?;
    Ok(manifest)
}

#[derive(Debug, Clone)]
pub struct SlideEntry {
    pub dir: PathBuf,
    pub manifest: Manifest,
}

#[derive(Debug, Clone)]
pub struct ListingWarning {
    pub path: PathBuf,
    pub message: String,
}

#[derive(Debug, Clone, Default)]
pub struct SlideListing {
    pub slides: Vec<SlideEntry>,
    pub warnings: Vec<ListingWarning>,
}

fn sorted_subdirs(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut dirs: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| p.is_dir())
        .collect();
    dirs.sort();
    Ok(dirs)
}

/// Find slide directories under `root`.
///
/// Slides are the immediate sub-directories holding a `manifest.json`;
/// directories without one are searched one level further, so slides may be
/// grouped in folders. A manifest that fails to parse is reported as a
/// warning and skipped.
pub fn list_slides(root: impl AsRef<Path>) -> Result<SlideListing> {
    let mut listing = SlideListing::default();
    let visit = |dir: &Path, listing: &mut SlideListing| -> bool {
        let path = dir.join(MANIFEST_FILE);
        if !path.is_file() {
            return false;
        }
        match read_manifest(&path) {
            Ok(manifest) => listing.slides.push(SlideEntry {
                dir: dir.to_path_buf(),
                manifest,
            }),
            Err(e) => {
                log::warn!("skipping {}: {e}", path.display());
                listing.warnings.push(ListingWarning {
                    path,
                    message: e.to_string(),
                });
            }
        }
        true
    };
    for dir in sorted_subdirs(root.as_ref())? {
        if !visit(&dir, &mut listing) {
            for nested in sorted_subdirs(&dir)? {
                visit(&nested, &mut listing);
            }
        }
    }
    listing
        .slides
        .sort_by(|a, b| a.manifest.slide_id.cmp(&b.manifest.slide_id));
    Ok(listing)
}
