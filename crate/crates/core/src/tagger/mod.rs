//! Token classification on top of a BERT-family encoder.

mod alignment;
mod encoder;
mod grid;
mod model;
mod tokenizer;
mod train;

pub use alignment::{align_labels, plan_windows, PieceLabel, TokenizationAlignment, WindowPlan};
pub use encoder::{Activation, Encoder, EncoderConfig, ModelType, ParamStore};
pub use grid::{
    grid_search, CellRecord, CheckpointSummary, FineTuneTrainer, TransferTrainer, GridResult, GridSpace, Trainer, DEFAULT_EPOCHS,
    DEFAULT_LEARNING_RATES,
};
pub use model::{EncoderHandle, Precision, RandomEncoderSpec, Snapshot, TaggerModel, MODELS_ENV};
pub use tokenizer::{SpecialIds, SubwordTokenizer};
pub use train::{
    checkpoint_steps, evaluate_model, fine_tune, select_best, smoothed, transfer, Checkpoint, TrainOutcome,
    TrainingConfig,
};
pub use crate::evaluation::weighted_f1;
