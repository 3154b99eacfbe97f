//! Dataset loading, training, evaluation, study runners and report output.

mod data;
mod eval;
pub mod gradcheck;
mod overlay;
mod report;
mod train;

pub use data::{load_dataset, preprocess, Dataset, Sample};
pub use eval::{baseline_metrics, evaluate, head_names, predicts_dc, BranchMetrics, Confusion, Metrics, TrainingSummary, METRICS_VERSION};
pub use overlay::{colormap, export_attention_overlay, overlay, OVERLAY_ALPHA};
pub use report::{default_grid, mean_std, run_ablation, run_collision_types, AblationReport, AblationRow, Cell};
pub use train::{train, train_and_test, train_with, EpochLog, TrainConfig, TrainOutcome, TRAIN_CONFIG_VERSION};
