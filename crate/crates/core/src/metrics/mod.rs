//! Evaluation metrics.

pub mod ap;
pub mod gaze;
pub mod report;
pub mod social;

pub use ap::{ap_binary, ap_laeo, ap_lah, LaeoFrame, LaeoRetention, LahSample, LahTruth};
pub use gaze::{dist, heatmap_auc, roc_auc, DistResult, Heatmap};
pub use report::{evaluate, EvalOptions, MetricReport, MetricRow, SocialSource};
pub use social::F1Counts;
