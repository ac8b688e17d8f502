//! Evaluation metrics: overlap scores, segmentation losses, FROC and
//! quadratic-weighted kappa.

mod froc;
mod kappa;
mod overlap;

pub use froc::{
    detections_from_map, froc, sensitivity_at, Detection, FrocCurve, FrocPoint, LesionMap, FROC_RATES,
};
pub use kappa::{kappa_quadratic, Kappa};
pub use overlap::{
    cross_entropy, dice, dice_loss, hybrid_loss, jaccard, LossValue, LossWeights, Polarity, CE_EPSILON,
};
