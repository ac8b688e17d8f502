/// Result of an Otsu threshold search over a 256-bin histogram.
///
/// Class 0 holds bins `<= threshold`, class 1 bins `> threshold`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OtsuThreshold {
    pub threshold: u8,
    /// All mass sits in a single bin; `threshold` is that bin.
    pub degenerate: bool,
}

/// Relative slack under which two between-class variances count as tied.
pub const TIE_TOLERANCE: f64 = 1e-12;

/// Between-class variance `w0 * w1 * (mu0 - mu1)^2` for every split point.
pub fn between_class_variances(hist: &[u64; 256]) -> [f64; 256] {
    let total: u64 = hist.iter().sum();
    let sum_all: f64 = hist.iter().enumerate().map(|(i, &c)| i as f64 * c as f64).sum();
    let n = total as f64;
    let mut out = [0.0; 256];
    let mut w0 = 0u64;
    let mut sum0 = 0.0;
    for t in 0..256 {
        w0 += hist[t];
        sum0 += t as f64 * hist[t] as f64;
        let w1 = total - w0;
        if w0 == 0 || w1 == 0 {
            continue;
        }
        let mu0 = sum0 / w0 as f64;
        let mu1 = (sum_all - sum0) / w1 as f64;
        let p0 = w0 as f64 / n;
        let p1 = w1 as f64 / n;
        out[t] = p0 * p1 * (mu0 - mu1) * (mu0 - mu1);
    }
    out
}

/// Otsu's threshold; ties resolve to the smallest threshold. Returns `None`
/// for an empty histogram.
pub fn otsu_threshold(hist: &[u64; 256]) -> Option<OtsuThreshold> {
    let total: u64 = hist.iter().sum();
    if total == 0 {
        return None;
    }
    let occupied: Vec<usize> = (0..256).filter(|&i| hist[i] > 0).collect();
    if occupied.len() == 1 {
        return Some(OtsuThreshold {
            threshold: occupied[0] as u8,
            degenerate: true,
        });
    }
    let var = between_class_variances(hist);
    let best = var.iter().cloned().fold(0.0f64, f64::max);
    let threshold = var
        .iter()
        .position(|&v| v >= best * (1.0 - TIE_TOLERANCE))
        .expect("maximum is attained") as u8;
    Some(OtsuThreshold {
        threshold,
        degenerate: false,
    })
}

pub fn histogram(values: impl IntoIterator<Item = u8>) -> [u64; 256] {
    let mut h = [0u64; 256];
    for v in values {
        h[v as usize] += 1;
    }
    h
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_spikes_split_between_them() {
        let mut h = [0u64; 256];
        h[50] = 1000;
        h[200] = 300;
        let t = otsu_threshold(&h).unwrap();
        assert!(!t.degenerate);
        assert_eq!(t.threshold, 50);
    }

    #[test]
    fn single_spike_is_degenerate() {
        let mut h = [0u64; 256];
        h[100] = 42;
        assert_eq!(
            otsu_threshold(&h),
            Some(OtsuThreshold { threshold: 100, degenerate: true })
        );
    }

    #[test]
    fn empty_histogram_has_no_threshold() {
        assert_eq!(otsu_threshold(&[0; 256]), None);
    }
}
