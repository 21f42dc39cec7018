//! Aligning unsupervised predictions to ground truth and scoring them,
//! including metrics that expose dataset bias.

mod align;
mod metrics;

pub use align::{linear_align, procrustes_align, AlignmentTransform, LINEAR_RIDGE};
pub use metrics::{
    aligned_errors, compute_metrics, compute_metrics_with, constant_predictor, fraction_near_line, lower_median,
    scatter_data, write_scatter_csv, BinStats, ErrorMode, MetricsReport, ScatterRow, ACCURACY_THRESHOLD_DEG,
};
