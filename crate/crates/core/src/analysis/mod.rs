//! Region analysis on thresholded heatmaps: connected components, region
//! properties, the 32-value slide feature vector, convex hulls and tumour
//! burden.

mod burden;
mod components;
mod features;
mod hull;
mod props;

pub use burden::{tumor_burden, whole_tumor_approx, BurdenPlan, BurdenResult};
pub use components::{connected_components, fill_holes, Connectivity, Labels};
pub use features::{
    extract_features, largest_region, regions_at, summary_stats, FeatureOptions, FeatureResult,
    RegionFeatureVector, FEATURE_COUNT, FEATURE_NAMES, HIGH_THRESHOLD, LOW_THRESHOLD,
};
pub use hull::{convex_hull, convex_hull_mask, rasterize_hull};
pub use props::{inertia_eigenvalues, region_props, Region};
