//! Experiment orchestration: configs, run records, sweeps, the setting
//! matrix, the support-set probe and embedding export.

mod config;
mod export;
mod matrix;
mod pipeline;
mod probe;
mod record;
pub mod rundir;
mod sweeps;

pub use config::{
    ExperimentConfig, FineTuneSpec, RestartMode, Setting, StructShotSpec, TransferMode, TransferSpec,
};
pub use export::{embedding_rows, export_embeddings, EmbeddingFormat};
pub use matrix::{rerender_matrix, run_setting_matrix, write_matrix, MatrixResult, Stages};
pub use pipeline::{
    category_pool, finetune_cell, finetune_split, metrics_header, run_train, structshot_report, transfer_cell,
    transfer_on, transfer_splits, CorpusStages, StageModel, TrainRunSpec,
};
pub use probe::{render_probe_csv, run_adversarial_probe, ProbeOptions, ProbeStep, DEFAULT_DROP_THRESHOLD};
pub use record::{
    metric_values, summarize, CategoryReports, Fingerprint, MetricSummary, RestartResult, RunRecord, METRIC_NAMES,
};
pub use sweeps::{
    render_category_csv, render_sweep_csv, run_finetune_sweep, run_transfer_sweep, SweepOptions, DEFAULT_COUNTS,
    DEFAULT_PROPORTIONS,
};
