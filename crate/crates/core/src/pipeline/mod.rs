//! Training, evaluation, SNR sweeps and the embedding comparison.

pub mod classifier;
pub mod data;
pub mod eval;
pub mod metrics;
pub mod train;

pub use classifier::Classifier;
pub use data::{augmented_mixture, test_scene, Dataset, Manifest};
pub use eval::{
    ablation_from_checkpoints, ablation_raw_csv, ablation_table_csv, evaluate, median, run_ablation, snr_sweep,
    summarize, sweep_csv, tail_variance, AblationRun, SweepPoint, Variant,
};
pub use metrics::{EvalReport, ReportMeta};
pub use train::{log_jsonl, train, train_with, LogRecord, TrainOutcome};
