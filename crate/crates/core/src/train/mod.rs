//! Dataset indexing, statue-level splits, the training loop, and evaluation.

pub mod dataset;
pub mod eval;
pub mod split;
pub mod trainer;

pub use dataset::{DatasetIndex, DatasetMetadata, Record, StatueEntry, ViewSample};
pub use eval::{
    evaluate, evaluate_checkpoint, mask_iou, prediction_from_target, psnr, EvalReport, GroundTruthPredictor, Metrics, Predictor, StatueMetrics,
    ViewMetrics, PSNR_CAP_DB,
};
pub use split::{split_by_statue, SplitSpec, DEFAULT_FRACTIONS};
pub use trainer::{read_metrics_log, train, GrlSchedule, LogEntry, TrainConfig, TrainOutcome};
