use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldAssignment {
    /// `(slide_id, fold)` in input order.
    pub folds: Vec<(String, u32)>,
    pub warnings: Vec<String>,
}

impl FoldAssignment {
    pub fn fold_of(&self, slide_id: &str) -> Option<u32> {
        self.folds
            .iter()
            .find(|(s, _)| s == slide_id)
            .map(|&(_, f)| f)
    }
}

/// Split slides into `k` folds so that each stratum (tumour / negative) is
/// spread as evenly as possible: per-stratum fold sizes differ by at most one.
pub fn stratified_folds(slides: &[(String, bool)], k: u32, seed: u64) -> Result<FoldAssignment> {
    if k < 2 {
        return Err(Error::invalid(format!("need at least 2 folds, got {k}")));
    }
    let mut folds = vec![0u32; slides.len()];
    let mut warnings = Vec::new();
    for (stream, stratum) in [(0u64, true), (1u64, false)] {
        let mut members: Vec<usize> = (0..slides.len())
            .filter(|&i| slides[i].1 == stratum)
            .collect();
        members.sort_by(|&a, &b| slides[a].0.cmp(&slides[b].0));
        if (members.len() as u32) < k {
            let name = if stratum { "tumour" } else { "negative" };
            let msg = format!(
                "{name} stratum has {} slide(s) for {k} folds; some folds get none",
                members.len()
            );
            log::warn!("{msg}");
            warnings.push(msg);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        members.shuffle(&mut rng);
        for (pos, &i) in members.iter().enumerate() {
            folds[i] = pos as u32 % k;
        }
    }
    Ok(FoldAssignment {
        folds: slides.iter().map(|(s, _)| s.clone()).zip(folds).collect(),
        warnings,
    })
}
