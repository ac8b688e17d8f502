use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::dataset::Dataset;
use super::labels::SlideLabel;
use crate::error::{Error, Result};

fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum()
}

/// Indices of the `k` nearest rows to `rows[i]` among `rows` (excluding `i`),
/// ties broken by index.
fn nearest(rows: &[&Vec<f64>], i: usize, k: usize) -> Vec<usize> {
    let mut d: Vec<(f64, usize)> = (0..rows.len())
        .filter(|&j| j != i)
        .map(|j| (dist2(rows[i], rows[j]), j))
        .collect();
    d.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    d.into_iter().take(k).map(|(_, j)| j).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SmoteParams {
    pub k_neighbors: usize,
    /// Rows per class after oversampling; `None` means the largest class count.
    pub target: Option<usize>,
    pub seed: u64,
}

impl Default for SmoteParams {
    fn default() -> Self {
        SmoteParams {
            k_neighbors: 5,
            target: None,
            seed: 0,
        }
    }
}

/// Oversample every present class below the target by interpolating between
/// a random member and one of its `k` nearest same-class neighbours.
/// Original rows come first and are unchanged.
pub fn smote(data: &Dataset, params: &SmoteParams) -> Result<Dataset> {
    if params.k_neighbors == 0 {
        return Err(Error::invalid("k_neighbors must be positive"));
    }
    let counts = data.class_counts();
    let target = params
        .target
        .unwrap_or_else(|| counts.iter().copied().max().unwrap_or(0));
    let mut out = data.clone();
    for label in SlideLabel::ALL {
        let have = counts[label.index()];
        if have == 0 || have >= target {
            continue;
        }
        if have < 2 {
            return Err(Error::TooFewSamples {
                class: label.name().into(),
                count: have,
            });
        }
        let members: Vec<&Vec<f64>> = data
            .x
            .iter()
            .zip(&data.y)
            .filter(|(_, &y)| y == label)
            .map(|(x, _)| x)
            .collect();
        let k = params.k_neighbors.min(have - 1);
        let neighbours: Vec<Vec<usize>> = (0..have).map(|i| nearest(&members, i, k)).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
        rng.set_stream(label.index() as u64);
        for s in 0..target - have {
            let i = rng.random_range(0..have);
            let j = neighbours[i][rng.random_range(0..k)];
            let u: f64 = rng.random();
            let x: Vec<f64> = members[i]
                .iter()
                .zip(members[j])
                .map(|(a, b)| a + u * (b - a))
                .collect();
            out.push(format!("smote-{}-{s}", label.name()), x, label);
        }
    }
    Ok(out)
}

/// Pairs `(a, b)`, `a < b`, of different classes that are each other's
/// nearest neighbour.
pub fn tomek_links(data: &Dataset) -> Vec<(usize, usize)> {
    let rows: Vec<&Vec<f64>> = data.x.iter().collect();
    let nn: Vec<Option<usize>> = (0..rows.len())
        .map(|i| nearest(&rows, i, 1).first().copied())
        .collect();
    let mut links = Vec::new();
    for (a, &b) in nn.iter().enumerate() {
        if let Some(b) = b {
            if a < b && nn[b] == Some(a) && data.y[a] != data.y[b] {
                links.push((a, b));
            }
        }
    }
    links
}

/// Drop both members of every Tomek link, or with `majority_only` just the
/// member from the more populous class (both when the classes tie).
pub fn tomek_remove(data: &Dataset, majority_only: bool) -> (Dataset, Vec<usize>) {
    let counts = data.class_counts();
    let mut drop = vec![false; data.len()];
    for (a, b) in tomek_links(data) {
        let (ca, cb) = (counts[data.y[a].index()], counts[data.y[b].index()]);
        if !majority_only || ca == cb {
            drop[a] = true;
            drop[b] = true;
        } else if ca > cb {
            drop[a] = true;
        } else {
            drop[b] = true;
        }
    }
    let mut kept = Dataset::default();
    let mut removed = Vec::new();
    for i in 0..data.len() {
        if drop[i] {
            removed.push(i);
        } else {
            kept.push(data.ids[i].clone(), data.x[i].clone(), data.y[i]);
        }
    }
    (kept, removed)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SmoteTomekParams {
    pub smote: SmoteParams,
    pub majority_only: bool,
}

pub fn smote_tomek(data: &Dataset, params: &SmoteTomekParams) -> Result<Dataset> {
    let balanced = smote(data, &params.smote)?;
    Ok(tomek_remove(&balanced, params.majority_only).0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use SlideLabel::*;

    #[test]
    fn two_point_class_stays_on_segment() {
        let mut x = vec![vec![0.0, 0.0], vec![2.0, 4.0]];
        let mut y = vec![Micro, Micro];
        for i in 0..6 {
            x.push(vec![100.0 + i as f64, 0.0]);
            y.push(Negative);
        }
        let d = Dataset::new(x, y).unwrap();
        let out = smote(&d, &SmoteParams::default()).unwrap();
        assert_eq!(out.class_counts(), [6, 0, 6, 0]);
        for row in &out.x[8..] {
            assert!((row[1] - 2.0 * row[0]).abs() < 1e-12);
            assert!((0.0..=2.0).contains(&row[0]));
        }
        assert_eq!(&out.x[..8], &d.x[..]);
    }

    #[test]
    fn singleton_class_cannot_be_oversampled() {
        let d = Dataset::new(vec![vec![0.0], vec![1.0], vec![2.0]], vec![Itc, Macro, Macro]).unwrap();
        assert!(matches!(smote(&d, &SmoteParams::default()), Err(Error::TooFewSamples { .. })));
    }

    #[test]
    fn constructed_link_removed() {
        let x = vec![vec![0.0], vec![0.1], vec![10.0], vec![10.5], vec![20.0], vec![21.0]];
        let y = vec![Negative, Negative, Negative, Macro, Macro, Macro];
        let d = Dataset::new(x, y).unwrap();
        assert_eq!(tomek_links(&d), vec![(2, 3)]);
        let (kept, removed) = tomek_remove(&d, false);
        assert_eq!(removed, vec![2, 3]);
        assert_eq!(kept.len(), 4);
    }
}
