use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::dataset::Dataset;
use super::labels::{vote, SlideLabel};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ForestParams {
    pub n_trees: usize,
    /// Features examined per split; `None` means `floor(sqrt(d))`.
    pub features_per_split: Option<usize>,
    pub bootstrap: bool,
    pub max_depth: Option<usize>,
    pub min_samples_split: usize,
    pub seed: u64,
}

impl Default for ForestParams {
    fn default() -> Self {
        ForestParams {
            n_trees: 100,
            features_per_split: None,
            bootstrap: true,
            max_depth: None,
            min_samples_split: 2,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Node {
    /// Samples with `x[feature] <= threshold` go left.
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        /// Training samples per class, indexed by [`SlideLabel`] order.
        counts: [usize; 4],
    },
}

/// Flat node list; the root is node 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn leaf_counts(&self, x: &[f64]) -> [usize; 4] {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => i = if x[*feature] <= *threshold { *left } else { *right },
                Node::Leaf { counts } => return *counts,
            }
        }
    }

    pub fn predict(&self, x: &[f64]) -> SlideLabel {
        vote(&self.leaf_counts(x))
    }

    pub fn depth(&self) -> usize {
        fn go(nodes: &[Node], i: usize) -> usize {
            match &nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + go(nodes, *left).max(go(nodes, *right)),
            }
        }
        go(&self.nodes, 0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Forest {
    pub n_features: usize,
    pub features_per_split: usize,
    pub seed: u64,
    pub trees: Vec<Tree>,
}

fn gini(counts: &[usize; 4], n: usize) -> f64 {
    if n == 0 {
        return 0.0;
    }
    let n = n as f64;
    1.0 - counts.iter().map(|&c| (c as f64 / n).powi(2)).sum::<f64>()
}

struct Builder<'a> {
    x: &'a [Vec<f64>],
    y: &'a [SlideLabel],
    mtry: usize,
    max_depth: Option<usize>,
    min_split: usize,
}

struct BestSplit {
    feature: usize,
    threshold: f64,
    impurity: f64,
}

impl Builder<'_> {
    fn counts(&self, idx: &[usize]) -> [usize; 4] {
        let mut c = [0; 4];
        for &i in idx {
            c[self.y[i].index()] += 1;
        }
        c
    }

    /// Best threshold on one feature, or `None` if the feature is constant here.
    fn scan(&self, idx: &mut [usize], feature: usize, total: &[usize; 4]) -> Option<BestSplit> {
        idx.sort_by(|&a, &b| self.x[a][feature].total_cmp(&self.x[b][feature]).then(a.cmp(&b)));
        let n = idx.len();
        let lo = self.x[idx[0]][feature];
        let hi = self.x[idx[n - 1]][feature];
        if lo == hi {
            return None;
        }
        let mut left = [0usize; 4];
        let mut best: Option<BestSplit> = None;
        for k in 0..n - 1 {
            left[self.y[idx[k]].index()] += 1;
            let (a, b) = (self.x[idx[k]][feature], self.x[idx[k + 1]][feature]);
            if a == b {
                continue;
            }
            let nl = k + 1;
            let nr = n - nl;
            let right = [total[0] - left[0], total[1] - left[1], total[2] - left[2], total[3] - left[3]];
            let imp = (nl as f64 * gini(&left, nl) + nr as f64 * gini(&right, nr)) / n as f64;
            if best.as_ref().is_none_or(|bs| imp < bs.impurity) {
                let mid = a + (b - a) / 2.0;
                let threshold = if mid < b { mid } else { a };
                best = Some(BestSplit {
                    feature,
                    threshold,
                    impurity: imp,
                });
            }
        }
        best
    }

    fn build(&self, idx: Vec<usize>, rng: &mut ChaCha8Rng) -> Tree {
        let mut nodes = Vec::new();
        let d = self.x[0].len();
        let mut features: Vec<usize> = (0..d).collect();
        // (node slot, samples, depth)
        let mut stack = vec![(0usize, idx, 0usize)];
        nodes.push(Node::Leaf { counts: [0; 4] });
        while let Some((slot, mut samples, depth)) = stack.pop() {
            let counts = self.counts(&samples);
            let pure = counts.iter().filter(|&&c| c > 0).count() <= 1;
            let depth_done = self.max_depth.is_some_and(|m| depth >= m);
            if pure || samples.len() < self.min_split || depth_done {
                nodes[slot] = Node::Leaf { counts };
                continue;
            }
            features.shuffle(rng);
            let mut best: Option<BestSplit> = None;
            let mut visited = 0;
            for &f in &features {
                if visited >= self.mtry {
                    break;
                }
                if let Some(s) = self.scan(&mut samples, f, &counts) {
                    visited += 1;
                    if best.as_ref().is_none_or(|b| s.impurity < b.impurity) {
                        best = Some(s);
                    }
                }
            }
            let Some(best) = best else {
                nodes[slot] = Node::Leaf { counts };
                continue;
            };
            let (l, r): (Vec<usize>, Vec<usize>) = samples
                .iter()
                .partition(|&&i| self.x[i][best.feature] <= best.threshold);
            let (li, ri) = (nodes.len(), nodes.len() + 1);
            nodes.push(Node::Leaf { counts: [0; 4] });
            nodes.push(Node::Leaf { counts: [0; 4] });
            nodes[slot] = Node::Split {
                feature: best.feature,
                threshold: best.threshold,
                left: li,
                right: ri,
            };
            stack.push((ri, r, depth + 1));
            stack.push((li, l, depth + 1));
        }
        Tree { nodes }
    }
}

pub fn default_features_per_split(d: usize) -> usize {
    ((d as f64).sqrt().floor() as usize).max(1)
}

/// Bagged Gini trees; tree `t` draws from its own seeded stream, so the
/// result does not depend on thread count.
pub fn rf_train(data: &Dataset, params: &ForestParams) -> Result<Forest> {
    if data.is_empty() {
        return Err(Error::Empty("training set is empty".into()));
    }
    let classes = data.class_counts().iter().filter(|&&c| c > 0).count();
    if classes < 2 {
        return Err(Error::invalid("training set needs at least two classes"));
    }
    if params.n_trees == 0 {
        return Err(Error::invalid("forest needs at least one tree"));
    }
    let d = data.dim();
    if d == 0 {
        return Err(Error::invalid("rows have no features"));
    }
    if data.x.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::invalid("features must be finite"));
    }
    let mtry = params
        .features_per_split
        .unwrap_or_else(|| default_features_per_split(d))
        .clamp(1, d);
    let builder = Builder {
        x: &data.x,
        y: &data.y,
        mtry,
        max_depth: params.max_depth,
        min_split: params.min_samples_split.max(2),
    };
    let n = data.len();
    let trees = (0..params.n_trees)
        .into_par_iter()
        .map(|t| {
            let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
            rng.set_stream(t as u64);
            let idx = if params.bootstrap {
                (0..n).map(|_| rng.random_range(0..n)).collect()
            } else {
                (0..n).collect()
            };
            builder.build(idx, &mut rng)
        })
        .collect();
    Ok(Forest {
        n_features: d,
        features_per_split: mtry,
        seed: params.seed,
        trees,
    })
}

/// Majority vote over trees (ties to the more severe label) and the vote counts.
pub fn rf_predict(forest: &Forest, x: &[f64]) -> Result<(SlideLabel, [usize; 4])> {
    if x.len() != forest.n_features {
        return Err(Error::invalid(format!(
            "expected {} features, got {}",
            forest.n_features,
            x.len()
        )));
    }
    let mut votes = [0usize; 4];
    for t in &forest.trees {
        votes[t.predict(x).index()] += 1;
    }
    Ok((vote(&votes), votes))
}
