//! Dense row-major planes used for masks, probability maps and label images.

use image::RgbImage;

use crate::error::{Error, Result};

/// A dense row-major 2-D grid of `T`.
#[derive(Debug, Clone, PartialEq)]
pub struct Plane<T> {
    width: usize,
    height: usize,
    data: Vec<T>,
}

/// Binary plane, `true` = foreground.
pub type Mask = Plane<bool>;

impl<T: Copy> Plane<T> {
    pub fn filled(width: usize, height: usize, value: T) -> Self {
        Plane {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    pub fn from_vec(width: usize, height: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::invalid(format!(
                "plane data length {} does not match {width}x{height}",
                data.len()
            )));
        }
        Ok(Plane {
            width,
            height,
            data,
        })
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Plane {
            width,
            height,
            data,
        }
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> T {
        self.data[y * self.width + x]
    }

    /// Bounds-checked access with signed coordinates.
    #[inline]
    pub fn get_checked(&self, x: i64, y: i64) -> Option<T> {
        if x < 0 || y < 0 || x as usize >= self.width || y as usize >= self.height {
            None
        } else {
            Some(self.data[y as usize * self.width + x as usize])
        }
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, value: T) {
        self.data[y * self.width + x] = value;
    }

    #[inline]
    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    #[inline]
    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    pub fn row(&self, y: usize) -> &[T] {
        &self.data[y * self.width..(y + 1) * self.width]
    }

    pub fn map<U: Copy>(&self, f: impl Fn(T) -> U) -> Plane<U> {
        Plane {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_map<U: Copy, V: Copy>(
        &self,
        other: &Plane<U>,
        f: impl Fn(T, U) -> V,
    ) -> Result<Plane<V>> {
        ensure_same_dims(self.dims(), other.dims())?;
        Ok(Plane {
            width: self.width,
            height: self.height,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    /// Copy of the sub-window `[x0, x0+w) x [y0, y0+h)`, filling outside with `fill`.
    pub fn window(&self, x0: i64, y0: i64, w: usize, h: usize, fill: T) -> Plane<T> {
        Plane::from_fn(w, h, |x, y| {
            self.get_checked(x0 + x as i64, y0 + y as i64)
                .unwrap_or(fill)
        })
    }

    pub fn transpose(&self) -> Plane<T> {
        Plane::from_fn(self.height, self.width, |x, y| self.get(y, x))
    }
}

pub(crate) fn ensure_same_dims(expected: (usize, usize), actual: (usize, usize)) -> Result<()> {
    if expected != actual {
        return Err(Error::ShapeMismatch { expected, actual });
    }
    Ok(())
}

impl Plane<bool> {
    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    pub fn any(&self) -> bool {
        self.data.iter().any(|&b| b)
    }

    pub fn and(&self, other: &Mask) -> Result<Mask> {
        self.zip_map(other, |a, b| a && b)
    }

    pub fn or(&self, other: &Mask) -> Result<Mask> {
        self.zip_map(other, |a, b| a || b)
    }

    pub fn not(&self) -> Mask {
        self.map(|a| !a)
    }

    /// `true` if every foreground pixel of `self` is foreground in `other`.
    pub fn is_subset_of(&self, other: &Mask) -> bool {
        self.dims() == other.dims() && self.data.iter().zip(&other.data).all(|(&a, &b)| !a || b)
    }

    /// Foreground pixel coordinates in row-major order.
    pub fn foreground(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for y in 0..self.height {
            for x in 0..self.width {
                if self.get(x, y) {
                    out.push((x, y));
                }
            }
        }
        out
    }
}

/// Summed-area table over a mask for O(1) rectangle counts.
#[derive(Debug, Clone)]
pub struct IntegralMask {
    width: usize,
    height: usize,
    // (width + 1) x (height + 1), first row/column zero.
    sums: Vec<u64>,
}

impl IntegralMask {
    pub fn new(mask: &Mask) -> Self {
        let (w, h) = mask.dims();
        let stride = w + 1;
        let mut sums = vec![0u64; stride * (h + 1)];
        for y in 0..h {
            let mut row = 0u64;
            for x in 0..w {
                row += mask.get(x, y) as u64;
                sums[(y + 1) * stride + x + 1] = sums[y * stride + x + 1] + row;
            }
        }
        IntegralMask {
            width: w,
            height: h,
            sums,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    /// Foreground count in `[x0, x1) x [y0, y1)`, clipped to the mask.
    pub fn count(&self, x0: i64, y0: i64, x1: i64, y1: i64) -> u64 {
        let cx = |v: i64| v.clamp(0, self.width as i64) as usize;
        let cy = |v: i64| v.clamp(0, self.height as i64) as usize;
        let (x0, x1, y0, y1) = (cx(x0), cx(x1), cy(y0), cy(y1));
        if x0 >= x1 || y0 >= y1 {
            return 0;
        }
        let s = self.width + 1;
        self.sums[y1 * s + x1] + self.sums[y0 * s + x0]
            - self.sums[y0 * s + x1]
            - self.sums[y1 * s + x0]
    }
}

/// View an RGB image as a plane of pixel triples.
pub fn rgb_to_plane(img: &RgbImage) -> Plane<[u8; 3]> {
    let (w, h) = (img.width() as usize, img.height() as usize);
    let data = img.pixels().map(|p| p.0).collect();
    Plane {
        width: w,
        height: h,
        data,
    }
}

pub fn plane_to_rgb(plane: &Plane<[u8; 3]>) -> RgbImage {
    let raw: Vec<u8> = plane.as_slice().iter().flatten().copied().collect();
    RgbImage::from_raw(plane.width() as u32, plane.height() as u32, raw)
        .expect("plane length matches dimensions")
}
