//! Grad-CAM heatmaps and multi-scale fusion statistics.

mod gradcam;
mod stats;

pub use gradcam::{grad_cam, normalize, Heatmap, Introspect};
pub use stats::{
    contributions, export_scale_weight_stats, quantile, summarize, FeatureStats, ScaleWeightStats,
    StageStats, STATS_HEADER,
};
