//! Whole-slide image segmentation and analysis engine.
//!
//! The crate covers the path from a tiled slide pyramid to slide-level
//! decisions:
//!
//! - [`pyramid`]: on-disk pyramidal slide format, region reads, tile cache
//! - [`preproc`]: tissue masking (HSV, Otsu, median blur, binary morphology)
//! - [`sampler`]: patch grids, balanced training coordinates, augmentation, folds
//! - [`scorer`]: the patch-scoring contract, built-in scorers, external wire protocol
//! - [`inference`]: overlap-stitched probability maps and ensemble averaging
//! - [`uncertainty`]: test-time-augmentation and ensemble variance maps
//! - [`analysis`]: connected components, region properties, heatmap features, tumour burden
//! - [`staging`]: metastasis typing, random forest, SMOTE/Tomek, pN-stage
//! - [`metrics`]: Dice/Jaccard, hybrid loss, FROC, quadratic-weighted kappa
//!
//! Neural networks are out of scope: anything that maps RGB patches to
//! per-pixel probabilities can be plugged in through [`scorer::Scorer`].

pub mod analysis;
pub mod error;
pub mod inference;
pub mod io;
pub mod metrics;
pub mod preproc;
pub mod pyramid;
pub mod raster;
pub mod sampler;
pub mod scorer;
pub mod staging;
pub mod uncertainty;

pub use error::{Error, Result};
pub use raster::{Mask, Plane};
