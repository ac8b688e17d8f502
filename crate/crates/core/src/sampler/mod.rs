//! Patch-coordinate sampling: inference grids, balanced training coordinates,
//! perturbation, augmentation and stratified folds.

mod augment;
mod folds;
mod grid;
mod training;

pub use augment::{
    augment, augment_geometric, invert_geometric, AugmentSpec, Flip, MAX_BRIGHTNESS_DELTA,
    MAX_CONTRAST_DELTA, MAX_HUE_DELTA, MAX_SATURATION_DELTA,
};
pub use folds::{stratified_folds, FoldAssignment};
pub use grid::{axis_positions, build_grid, patch_centre, patch_origin, SampleGrid};
pub use training::{
    label_patch, perturb, sample_training_set, LabelledCoord, PatchLabel, SamplingConfig,
    TrainingSlide,
};
