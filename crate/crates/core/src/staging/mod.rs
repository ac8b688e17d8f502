//! Slide metastasis typing, class balancing, random forests and patient
//! pN staging.

mod balance;
mod dataset;
mod forest;
mod labels;

pub use balance::{smote, smote_tomek, tomek_links, tomek_remove, SmoteParams, SmoteTomekParams};
pub use dataset::Dataset;
pub use forest::{default_features_per_split, rf_predict, rf_train, Forest, ForestParams, Node, Tree};
pub use labels::{
    classify_map, classify_rule, ensemble_classify, pn_stage, vote, PnOptions, PnStage, SlideLabel,
    ITC_MAX_MM, MICRO_MAX_MM, SLIDES_PER_PATIENT,
};
