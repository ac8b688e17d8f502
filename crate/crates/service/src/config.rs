use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use slidescope_core::analysis::{BurdenPlan, FeatureOptions};
use slidescope_core::inference::InferenceConfig;
use slidescope_core::preproc::TissueMaskOptions;
use slidescope_core::sampler::AugmentSpec;
use slidescope_core::scorer::ScorerSpec;
use slidescope_core::uncertainty::{CombineRule, UncertaintyKind};

/// Everything a segmentation job needs besides the slide itself.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct JobConfig {
    pub inference: InferenceConfig,
    pub scorers: Vec<ScorerSpec>,
    pub uncertainty: Vec<UncertaintyKind>,
    /// Test-time augmentations for aleatoric maps; `None` uses identity,
    /// three rotations and both flips.
    pub tta: Option<Vec<AugmentSpec>>,
    pub combine: CombineRule,
    pub mask: TissueMaskOptions,
    pub features: FeatureOptions,
    pub burden: BurdenPlan,
    /// Trained forests (JSON); when present the slide label comes from
    /// their majority vote instead of the size rule.
    pub forests: Vec<PathBuf>,
}

impl Default for JobConfig {
    fn default() -> Self {
        JobConfig {
            inference: InferenceConfig::default(),
            scorers: Vec::new(),
            uncertainty: Vec::new(),
            tta: None,
            combine: CombineRule::default(),
            mask: TissueMaskOptions::default(),
            features: FeatureOptions::default(),
            burden: BurdenPlan::default(),
            forests: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FieldError {
    pub field: String,
    pub message: String,
}

impl JobConfig {
    pub fn field_errors(&self) -> Vec<FieldError> {
        let mut out: Vec<FieldError> = self
            .inference
            .problems()
            .into_iter()
            .map(|(f, m)| FieldError {
                field: format!("inference.{f}"),
                message: m,
            })
            .collect();
        let err = |field: String, message: String| FieldError { field, message };
        if self.scorers.is_empty() {
            out.push(err("scorers".into(), "at least one scorer is required".into()));
        }
        for (i, s) in self.scorers.iter().enumerate() {
            if let Err(m) = s.validate() {
                out.push(err(format!("scorers[{i}]"), m));
            }
        }
        for k in &self.uncertainty {
            if matches!(k, UncertaintyKind::Epistemic | UncertaintyKind::Combined) && self.scorers.len() < 2 {
                out.push(err(
                    "uncertainty".into(),
                    format!("{} needs at least two scorers", k.name()),
                ));
            }
        }
        if let Some(tta) = &self.tta {
            if tta.is_empty() {
                out.push(err("tta".into(), "must not be empty".into()));
            }
            for (i, t) in tta.iter().enumerate() {
                if !t.is_geometric() {
                    out.push(err(format!("tta[{i}]"), "only flips and 90-degree rotations are invertible".into()));
                }
            }
        }
        if self.mask.blur_k % 2 == 0 {
            out.push(err("mask.blur_k".into(), "must be odd".into()));
        }
        out
    }

    pub fn tta_set(&self) -> Vec<AugmentSpec> {
        self.tta.clone().unwrap_or_else(AugmentSpec::default_tta_set)
    }

    pub fn wants(&self, kind: UncertaintyKind) -> bool {
        self.uncertainty.contains(&kind)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_lists_fields() {
        let cfg: JobConfig = serde_json::from_str(
            r#"{"inference": {"patch_size": 256, "stride": 512}, "uncertainty": ["epistemic"]}"#,
        )
        .unwrap();
        let fields: Vec<_> = cfg.field_errors().into_iter().map(|e| e.field).collect();
        assert_eq!(fields, vec!["inference.stride", "scorers", "uncertainty"]);
    }
}
