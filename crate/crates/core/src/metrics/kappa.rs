use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Kappa {
    pub kappa: f64,
    /// Expected disagreement was zero (both raters used one class); kappa is 1 by convention.
    pub degenerate: bool,
}

/// Cohen's kappa with weights `(i-j)^2 / (k-1)^2` over labels `0..k`.
pub fn kappa_quadratic(a: &[usize], b: &[usize], k: usize) -> Result<Kappa> {
    if a.len() != b.len() {
        return Err(Error::invalid(format!("rater lengths differ: {} vs {}", a.len(), b.len())));
    }
    if a.is_empty() {
        return Err(Error::Empty("no ratings".into()));
    }
    if k < 2 {
        return Err(Error::invalid("need at least two classes"));
    }
    if let Some(bad) = a.iter().chain(b).find(|&&l| l >= k) {
        return Err(Error::invalid(format!("label {bad} outside 0..{k}")));
    }
    let n = a.len() as f64;
    let mut observed = vec![0.0f64; k * k];
    let mut ra = vec![0.0f64; k];
    let mut rb = vec![0.0f64; k];
    for (&i, &j) in a.iter().zip(b) {
        observed[i * k + j] += 1.0;
        ra[i] += 1.0;
        rb[j] += 1.0;
    }
    let norm = ((k - 1) * (k - 1)) as f64;
    let (mut wo, mut we) = (0.0, 0.0);
    for i in 0..k {
        for j in 0..k {
            let w = ((i as f64 - j as f64).powi(2)) / norm;
            wo += w * observed[i * k + j];
            we += w * ra[i] * rb[j] / n;
        }
    }
    Ok(if we == 0.0 {
        Kappa {
            kappa: 1.0,
            degenerate: true,
        }
    } else {
        Kappa {
            kappa: 1.0 - wo / we,
            degenerate: false,
        }
    })
}
