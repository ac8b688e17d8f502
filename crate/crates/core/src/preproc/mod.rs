//! Tissue masking: black-region replacement, median blur, HSV conversion,
//! Otsu thresholding of saturation and binary morphology.

mod hsv;
mod median;
mod morphology;
mod otsu;
mod tissue;

pub use hsv::{hsv_to_rgb_pixel, rgb_to_hsv, rgb_to_hsv_pixel, Hsv};
pub use median::{median_blur, median_blur_plane};
pub use morphology::{
    apply_plan, dilate, erode, morphology, KernelShape, MorphKernel, MorphOp, MorphStep,
};
pub use otsu::{between_class_variances, histogram, otsu_threshold, OtsuThreshold, TIE_TOLERANCE};
pub use tissue::{
    default_mask_level, replace_black, tissue_mask, tissue_mask_from_image, TissueMask,
    TissueMaskOptions, TissueMaskResult, AUTO_MASK_MAX_DIM,
};
