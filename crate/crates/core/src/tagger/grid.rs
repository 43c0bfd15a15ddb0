use serde::{Deserialize, Serialize};

use super::model::EncoderHandle;
use super::model::TaggerModel;
use super::train::{fine_tune, transfer, TrainOutcome, TrainingConfig};
use crate::evaluation::EvalReport;
use crate::corpus::TaggedSentence;
use crate::error::{Error, Result};

pub const DEFAULT_LEARNING_RATES: [f64; 3] = [1e-6, 5e-6, 1e-5];
pub const DEFAULT_EPOCHS: [usize; 2] = [3, 5];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpace {
    pub learning_rates: Vec<f64>,
    pub epochs: Vec<usize>,
}

impl Default for GridSpace {
    fn default() -> Self {
        GridSpace {
            learning_rates: DEFAULT_LEARNING_RATES.to_vec(),
            epochs: DEFAULT_EPOCHS.to_vec(),
        }
    }
}

impl GridSpace {
    pub fn single(learning_rate: f64, epochs: usize) -> Self {
        GridSpace {
            learning_rates: vec![learning_rate],
            epochs: vec![epochs],
        }
    }

    /// Cells in tie-break order: learning rate ascending, then epochs
    /// ascending. Duplicates are dropped.
    pub fn cells(&self, base: &TrainingConfig) -> Vec<TrainingConfig> {
        let mut lrs = self.learning_rates.clone();
        lrs.sort_by(f64::total_cmp);
        lrs.dedup();
        let mut eps = self.epochs.clone();
        eps.sort_unstable();
        eps.dedup();
        lrs.iter()
            .flat_map(|&lr| {
                eps.iter().map(move |&e| TrainingConfig {
                    learning_rate: lr,
                    epochs: e,
                    ..base.clone()
                })
            })
            .collect()
    }
}

/// Anything that trains one grid cell and reports its best validation
/// weighted F1.
pub trait Trainer {
    type Output;
    fn train(&mut self, config: &TrainingConfig) -> Result<Self::Output>;
    fn score(output: &Self::Output) -> f64;
    /// Per-checkpoint validation results, for the run log.
    fn checkpoints(_output: &Self::Output) -> Vec<CheckpointSummary> {
        Vec::new()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointSummary {
    pub step: usize,
    pub train_loss: Option<f64>,
    pub report: EvalReport,
    pub weighted_f1: f64,
}

fn summaries(o: &TrainOutcome) -> Vec<CheckpointSummary> {
    o.all
        .iter()
        .map(|c| CheckpointSummary {
            step: c.step,
            train_loss: c.train_loss,
            report: c.report,
            weighted_f1: c.weighted_f1,
        })
        .collect()
}

pub struct FineTuneTrainer<'a> {
    pub encoder: &'a EncoderHandle,
    pub train: &'a [TaggedSentence],
    pub valid: &'a [TaggedSentence],
}

impl Trainer for FineTuneTrainer<'_> {
    type Output = TrainOutcome;

    fn train(&mut self, config: &TrainingConfig) -> Result<TrainOutcome> {
        fine_tune(self.encoder, self.train, self.valid, config)
    }

    fn score(output: &TrainOutcome) -> f64 {
        output.best.weighted_f1
    }

    fn checkpoints(output: &TrainOutcome) -> Vec<CheckpointSummary> {
        summaries(output)
    }
}

pub struct TransferTrainer<'a> {
    pub start: &'a TaggerModel,
    pub train: &'a [TaggedSentence],
    pub valid: &'a [TaggedSentence],
}

impl Trainer for TransferTrainer<'_> {
    type Output = TrainOutcome;

    fn train(&mut self, config: &TrainingConfig) -> Result<TrainOutcome> {
        transfer(self.start, self.train, self.valid, config)
    }

    fn score(output: &TrainOutcome) -> f64 {
        output.best.weighted_f1
    }

    fn checkpoints(output: &TrainOutcome) -> Vec<CheckpointSummary> {
        summaries(output)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellRecord {
    pub learning_rate: f64,
    pub epochs: usize,
    pub weighted_f1: Option<f64>,
    pub error: Option<String>,
    pub checkpoints: Vec<CheckpointSummary>,
}

#[derive(Debug)]
pub struct GridResult<O> {
    pub best_config: TrainingConfig,
    pub best: O,
    pub cells: Vec<CellRecord>,
}

/// Trains every cell; a failing cell is logged and skipped. The highest
/// score wins, the earlier cell (lower learning rate, then fewer epochs) on
/// ties. Only the current winner's output is kept in memory.
pub fn grid_search<T: Trainer>(trainer: &mut T, space: &GridSpace, base: &TrainingConfig) -> Result<GridResult<T::Output>> {
    let cells = space.cells(base);
    if cells.is_empty() {
        return Err(Error::Config("empty grid".into()));
    }
    let mut records = Vec::with_capacity(cells.len());
    let mut best: Option<(TrainingConfig, T::Output, f64)> = None;
    for cell in cells {
        let mut rec = CellRecord {
            learning_rate: cell.learning_rate,
            epochs: cell.epochs,
            weighted_f1: None,
            error: None,
            checkpoints: Vec::new(),
        };
        match trainer.train(&cell) {
            Ok(out) => {
                let s = T::score(&out);
                rec.weighted_f1 = Some(s);
                rec.checkpoints = T::checkpoints(&out);
                if best.as_ref().is_none_or(|(_, _, b)| s > *b) {
                    best = Some((cell, out, s));
                }
            }
            Err(e) => {
                log::error!("grid cell lr={} epochs={} failed: {e}", cell.learning_rate, cell.epochs);
                rec.error = Some(e.to_string());
            }
        }
        records.push(rec);
    }
    let (best_config, best, _) = best.ok_or_else(|| {
        Error::Config(format!("all {} grid cells failed", records.len()))
    })?;
    Ok(GridResult {
        best_config,
        best,
        cells: records,
    })
}
