use image::RgbImage;

use crate::raster::Plane;

/// Hexcone HSV: `h` in degrees `[0, 360)`, `s` and `v` in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Hsv {
    pub h: f64,
    pub s: f64,
    pub v: f64,
}

pub fn rgb_to_hsv_pixel(rgb: [u8; 3]) -> Hsv {
    let [r, g, b] = rgb.map(|c| c as f64 / 255.0);
    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    let delta = max - min;
    let v = max;
    let s = if max > 0.0 { delta / max } else { 0.0 };
    let h = if delta == 0.0 {
        0.0
    } else if max == r {
        60.0 * ((g - b) / delta).rem_euclid(6.0)
    } else if max == g {
        60.0 * ((b - r) / delta + 2.0)
    } else {
        60.0 * ((r - g) / delta + 4.0)
    };
    let h = if h >= 360.0 { h - 360.0 } else { h };
    Hsv { h, s, v }
}

pub fn hsv_to_rgb_pixel(hsv: Hsv) -> [f64; 3] {
    let c = hsv.v * hsv.s;
    let hp = hsv.h.rem_euclid(360.0) / 60.0;
    let x = c * (1.0 - (hp % 2.0 - 1.0).abs());
    let (r, g, b) = match hp as u32 {
        0 => (c, x, 0.0),
        1 => (x, c, 0.0),
        2 => (0.0, c, x),
        3 => (0.0, x, c),
        4 => (x, 0.0, c),
        _ => (c, 0.0, x),
    };
    let m = hsv.v - c;
    [r + m, g + m, b + m]
}

pub fn rgb_to_hsv(img: &RgbImage) -> Plane<Hsv> {
    Plane::from_fn(img.width() as usize, img.height() as usize, |x, y| {
        rgb_to_hsv_pixel(img.get_pixel(x as u32, y as u32).0)
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn primaries() {
        assert_eq!(rgb_to_hsv_pixel([0, 0, 0]), Hsv { h: 0.0, s: 0.0, v: 0.0 });
        assert_eq!(rgb_to_hsv_pixel([255, 0, 0]), Hsv { h: 0.0, s: 1.0, v: 1.0 });
        let g = rgb_to_hsv_pixel([0, 255, 0]);
        assert!((g.h - 120.0).abs() < 1e-12);
        let b = rgb_to_hsv_pixel([0, 0, 255]);
        assert!((b.h - 240.0).abs() < 1e-12);
        let m = rgb_to_hsv_pixel([255, 0, 1]);
        assert!(m.h < 360.0 && m.h > 359.0);
    }

    #[test]
    fn round_trips_through_rgb() {
        for r in (0..=255).step_by(17) {
            for g in (0..=255).step_by(15) {
                for b in (0..=255).step_by(51) {
                    let back = hsv_to_rgb_pixel(rgb_to_hsv_pixel([r, g, b]));
                    for (c, v) in [r, g, b].iter().zip(back) {
                        assert!((*c as f64 / 255.0 - v).abs() < 1e-9);
                    }
                }
            }
        }
    }
}
