use serde::{Deserialize, Serialize};

use crate::raster::{Mask, Plane};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum Connectivity {
    #[serde(rename = "4")]
    Four,
    #[default]
    #[serde(rename = "8")]
    Eight,
}

impl Connectivity {
    pub fn from_number(n: u8) -> Option<Self> {
        match n {
            4 => Some(Connectivity::Four),
            8 => Some(Connectivity::Eight),
            _ => None,
        }
    }

    fn offsets(self) -> &'static [(i64, i64)] {
        match self {
            Connectivity::Four => &[(1, 0), (-1, 0), (0, 1), (0, -1)],
            Connectivity::Eight => &[
                (1, 0),
                (-1, 0),
                (0, 1),
                (0, -1),
                (1, 1),
                (1, -1),
                (-1, 1),
                (-1, -1),
            ],
        }
    }
}

/// Label image: 0 is background, components are `1..=count` in order of
/// their first pixel in row-major scan.
#[derive(Debug, Clone, PartialEq)]
pub struct Labels {
    pub labels: Plane<u32>,
    pub count: usize,
}

impl Labels {
    /// Pixel lists per component, index `i` holding label `i + 1`, each in
    /// row-major order.
    pub fn regions(&self) -> Vec<Vec<(usize, usize)>> {
        let mut out = vec![Vec::new(); self.count];
        for y in 0..self.labels.height() {
            for (x, &l) in self.labels.row(y).iter().enumerate() {
                if l > 0 {
                    out[l as usize - 1].push((x, y));
                }
            }
        }
        out
    }
}

pub fn connected_components(mask: &Mask, connectivity: Connectivity) -> Labels {
    let (w, h) = mask.dims();
    let mut labels = Plane::filled(w, h, 0u32);
    let mut count = 0u32;
    let mut stack = Vec::new();
    for y in 0..h {
        for x in 0..w {
            if !mask.get(x, y) || labels.get(x, y) != 0 {
                continue;
            }
            count += 1;
            labels.set(x, y, count);
            stack.push((x, y));
            while let Some((cx, cy)) = stack.pop() {
                for &(dx, dy) in connectivity.offsets() {
                    let (nx, ny) = (cx as i64 + dx, cy as i64 + dy);
                    if mask.get_checked(nx, ny) == Some(true) {
                        let (nx, ny) = (nx as usize, ny as usize);
                        if labels.get(nx, ny) == 0 {
                            labels.set(nx, ny, count);
                            stack.push((nx, ny));
                        }
                    }
                }
            }
        }
    }
    Labels {
        labels,
        count: count as usize,
    }
}

/// Set background pixels unreachable from the border (4-connected) to foreground.
pub fn fill_holes(mask: &Mask) -> Mask {
    let (w, h) = mask.dims();
    let mut outside = Plane::filled(w, h, false);
    let mut stack = Vec::new();
    let seed = |x: usize, y: usize, outside: &mut Mask, stack: &mut Vec<(usize, usize)>| {
        if !mask.get(x, y) && !outside.get(x, y) {
            outside.set(x, y, true);
            stack.push((x, y));
        }
    };
    for x in 0..w {
        seed(x, 0, &mut outside, &mut stack);
        seed(x, h.saturating_sub(1), &mut outside, &mut stack);
    }
    for y in 0..h {
        seed(0, y, &mut outside, &mut stack);
        seed(w.saturating_sub(1), y, &mut outside, &mut stack);
    }
    while let Some((x, y)) = stack.pop() {
        for (dx, dy) in [(1i64, 0i64), (-1, 0), (0, 1), (0, -1)] {
            let (nx, ny) = (x as i64 + dx, y as i64 + dy);
            if mask.get_checked(nx, ny) == Some(false) {
                let (nx, ny) = (nx as usize, ny as usize);
                if !outside.get(nx, ny) {
                    outside.set(nx, ny, true);
                    stack.push((nx, ny));
                }
            }
        }
    }
    outside.not()
}
