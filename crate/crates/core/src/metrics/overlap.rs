use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::raster::{ensure_same_dims, Mask, Plane};

/// `2|A∩B| / (|A|+|B|)`, 1 when both are empty.
pub fn dice(a: &Mask, b: &Mask) -> Result<f64> {
    let inter = a.and(b)?.count();
    let total = a.count() + b.count();
    Ok(if total == 0 {
        1.0
    } else {
        2.0 * inter as f64 / total as f64
    })
}

/// `|A∩B| / |A∪B|`, 1 when both are empty.
pub fn jaccard(a: &Mask, b: &Mask) -> Result<f64> {
    let inter = a.and(b)?.count();
    let union = a.or(b)?.count();
    Ok(if union == 0 {
        1.0
    } else {
        inter as f64 / union as f64
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Polarity {
    Foreground,
    Background,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossValue {
    pub value: f64,
    /// Both sums in the denominator were zero; `value` is 0 by convention.
    pub degenerate: bool,
}

/// `1 - 2 Σ p·g / (Σ p² + Σ g²)`; background polarity uses `1-p` and `1-g`.
pub fn dice_loss(p: &Plane<f64>, g: &Mask, polarity: Polarity) -> Result<LossValue> {
    ensure_same_dims(g.dims(), p.dims())?;
    let (mut pg, mut pp, mut gg) = (0.0f64, 0.0f64, 0.0f64);
    for (&pv, &gv) in p.as_slice().iter().zip(g.as_slice()) {
        let gv = if gv { 1.0 } else { 0.0 };
        let (pv, gv) = match polarity {
            Polarity::Foreground => (pv, gv),
            Polarity::Background => (1.0 - pv, 1.0 - gv),
        };
        pg += pv * gv;
        pp += pv * pv;
        gg += gv * gv;
    }
    let denom = pp + gg;
    Ok(if denom == 0.0 {
        LossValue {
            value: 0.0,
            degenerate: true,
        }
    } else {
        LossValue {
            value: 1.0 - 2.0 * pg / denom,
            degenerate: false,
        }
    })
}

pub const CE_EPSILON: f64 = 1e-7;

/// Mean binary cross-entropy with `p` clamped to `[ε, 1-ε]`.
pub fn cross_entropy(p: &Plane<f64>, g: &Mask) -> Result<f64> {
    ensure_same_dims(g.dims(), p.dims())?;
    if p.is_empty() {
        return Ok(0.0);
    }
    let sum: f64 = p
        .as_slice()
        .iter()
        .zip(g.as_slice())
        .map(|(&pv, &gv)| {
            let pv = pv.clamp(CE_EPSILON, 1.0 - CE_EPSILON);
            if gv {
                -pv.ln()
            } else {
                -(1.0 - pv).ln()
            }
        })
        .sum();
    Ok(sum / p.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            alpha: 0.5,
            beta: 0.25,
            gamma: 0.25,
        }
    }
}

/// `α·CE + β·DiceLoss(background) + γ·DiceLoss(foreground)`.
pub fn hybrid_loss(p: &Plane<f64>, g: &Mask, w: &LossWeights) -> Result<f64> {
    let ce = cross_entropy(p, g)?;
    let bg = dice_loss(p, g, Polarity::Background)?.value;
    let fg = dice_loss(p, g, Polarity::Foreground)?.value;
    Ok(w.alpha * ce + w.beta * bg + w.gamma * fg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn half_overlap() {
        let a = Plane::from_fn(4, 1, |x, _| x < 2);
        let b = Plane::from_fn(4, 1, |x, _| (1..3).contains(&x));
        assert_eq!(dice(&a, &b).unwrap(), 0.5);
        assert!((jaccard(&a, &b).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        let e = Plane::filled(4, 1, false);
        assert_eq!(dice(&e, &e).unwrap(), 1.0);
    }

    #[test]
    fn dice_loss_half_plane() {
        // p = 0.5 everywhere, g has 2 of 4 pixels: 1 - 2*1 / (1 + 2) = 1/3.
        let p = Plane::filled(2, 2, 0.5);
        let g = Plane::from_vec(2, 2, vec![true, true, false, false]).unwrap();
        let v = dice_loss(&p, &g, Polarity::Foreground).unwrap();
        assert!((v.value - 1.0 / 3.0).abs() < 1e-15);
        let zero = dice_loss(&Plane::filled(2, 2, 0.0), &Plane::filled(2, 2, false), Polarity::Foreground).unwrap();
        assert!(zero.degenerate && zero.value == 0.0);
    }

    #[test]
    fn cross_entropy_half_is_ln2() {
        let p = Plane::filled(3, 3, 0.5);
        let g = Plane::from_fn(3, 3, |x, _| x == 1);
        assert!((cross_entropy(&p, &g).unwrap() - std::f64::consts::LN_2).abs() < 1e-15);
    }
}
