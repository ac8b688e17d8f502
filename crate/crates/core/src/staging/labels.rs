use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::analysis::{largest_region, regions_at, Connectivity, Region};
use crate::error::{Error, Result};
use crate::inference::ProbabilityMap;

/// Slide-level metastasis category, ordered by severity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SlideLabel {
    Negative,
    Itc,
    Micro,
    Macro,
}

impl SlideLabel {
    pub const ALL: [SlideLabel; 4] = [
        SlideLabel::Negative,
        SlideLabel::Itc,
        SlideLabel::Micro,
        SlideLabel::Macro,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            SlideLabel::Negative => "negative",
            SlideLabel::Itc => "itc",
            SlideLabel::Micro => "micro",
            SlideLabel::Macro => "macro",
        }
    }
}

impl fmt::Display for SlideLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SlideLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "negative" | "neg" => Ok(SlideLabel::Negative),
            "itc" | "itcs" => Ok(SlideLabel::Itc),
            "micro" | "micrometastasis" => Ok(SlideLabel::Micro),
            "macro" | "macrometastasis" => Ok(SlideLabel::Macro),
            other => Err(Error::invalid(format!("unknown slide label `{other}`"))),
        }
    }
}

/// Patient-level nodal stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum PnStage {
    #[serde(rename = "pN0")]
    PN0,
    #[serde(rename = "pN0i+")]
    PN0ItcOnly,
    #[serde(rename = "pN1mi")]
    PN1Mi,
    #[serde(rename = "pN1")]
    PN1,
    #[serde(rename = "pN2")]
    PN2,
}

impl PnStage {
    pub const ALL: [PnStage; 5] = [
        PnStage::PN0,
        PnStage::PN0ItcOnly,
        PnStage::PN1Mi,
        PnStage::PN1,
        PnStage::PN2,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            PnStage::PN0 => "pN0",
            PnStage::PN0ItcOnly => "pN0i+",
            PnStage::PN1Mi => "pN1mi",
            PnStage::PN1 => "pN1",
            PnStage::PN2 => "pN2",
        }
    }
}

impl fmt::Display for PnStage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PnStage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        PnStage::ALL
            .into_iter()
            .find(|p| p.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::invalid(format!("unknown pN stage `{s}`")))
    }
}

pub const ITC_MAX_MM: f64 = 0.2;
pub const MICRO_MAX_MM: f64 = 2.0;

/// Size rule on the largest region's major axis.
pub fn classify_rule(regions: &[Region]) -> SlideLabel {
    match largest_region(regions) {
        None => SlideLabel::Negative,
        Some(r) if r.major_axis_mm <= ITC_MAX_MM => SlideLabel::Itc,
        Some(r) if r.major_axis_mm <= MICRO_MAX_MM => SlideLabel::Micro,
        Some(_) => SlideLabel::Macro,
    }
}

/// [`classify_rule`] on regions of `map` at 0.9.
pub fn classify_map(map: &ProbabilityMap, mpp: f64, connectivity: Connectivity) -> Result<SlideLabel> {
    Ok(classify_rule(&regions_at(map, crate::analysis::HIGH_THRESHOLD, mpp, connectivity)?))
}

/// Highest count wins; ties go to the more severe label.
pub fn vote(counts: &[usize; 4]) -> SlideLabel {
    let mut best = 0;
    for i in 1..4 {
        if counts[i] >= counts[best] {
            best = i;
        }
    }
    SlideLabel::ALL[best]
}

/// Majority over classifier outputs, ties to the more severe label.
pub fn ensemble_classify(predictions: &[SlideLabel]) -> Result<SlideLabel> {
    if predictions.is_empty() {
        return Err(Error::Empty("no classifier predictions".into()));
    }
    let mut counts = [0usize; 4];
    for p in predictions {
        counts[p.index()] += 1;
    }
    Ok(vote(&counts))
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct PnOptions {
    /// Count ITC slides toward the pN1/pN2 node total.
    pub count_itc: bool,
}

pub const SLIDES_PER_PATIENT: usize = 5;

pub fn pn_stage(labels: &[SlideLabel], opts: PnOptions) -> Result<PnStage> {
    if labels.len() != SLIDES_PER_PATIENT {
        return Err(Error::invalid(format!(
            "a patient has {SLIDES_PER_PATIENT} slides, got {}",
            labels.len()
        )));
    }
    let count = |l: SlideLabel| labels.iter().filter(|&&x| x == l).count();
    let (itc, micro, macro_) = (count(SlideLabel::Itc), count(SlideLabel::Micro), count(SlideLabel::Macro));
    let metastases = micro + macro_;
    Ok(if metastases == 0 {
        if itc > 0 {
            PnStage::PN0ItcOnly
        } else {
            PnStage::PN0
        }
    } else if macro_ == 0 {
        PnStage::PN1Mi
    } else {
        let nodes = metastases + if opts.count_itc { itc } else { 0 };
        if nodes <= 3 {
            PnStage::PN1
        } else {
            PnStage::PN2
        }
    })
}
