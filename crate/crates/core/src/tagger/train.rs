use std::time::Instant;

use candle_nn::{AdamW, Optimizer, ParamsAdamW};
use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use serde::{Deserialize, Serialize};

use super::encoder::DropoutRng;
use super::model::{EncoderHandle, Precision, Snapshot, TaggerModel};
use crate::corpus::{Tag, TaggedSentence};
use crate::error::{Error, Result};
use crate::evaluation::{token_prf, weighted_f1, EvalReport};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainingConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    /// Seeds initialisation of fresh weights and dropout.
    pub seed: u64,
    /// Seeds batch order; `None` uses `seed`.
    pub data_seed: Option<u64>,
    pub precision: Precision,
    pub checkpoints_per_run: usize,
    /// Overrides the step count implied by `epochs`.
    pub max_steps: Option<usize>,
    pub weight_decay: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub max_grad_norm: f64,
    /// Keep the weights of every checkpoint, not only the best one.
    pub keep_all_snapshots: bool,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        TrainingConfig {
            learning_rate: 1e-5,
            epochs: 3,
            batch_size: 2,
            seed: 42,
            data_seed: None,
            precision: Precision::Full,
            checkpoints_per_run: 5,
            max_steps: None,
            weight_decay: 0.0,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            max_grad_norm: 1.0,
            keep_all_snapshots: false,
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return bad("learning_rate must be positive");
        }
        if self.epochs == 0 {
            return bad("epochs must be positive");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be positive");
        }
        if self.checkpoints_per_run == 0 {
            return bad("checkpoints_per_run must be positive");
        }
        if self.weight_decay < 0.0 || self.max_grad_norm < 0.0 {
            return bad("weight_decay and max_grad_norm must be non-negative");
        }
        Ok(())
    }

    /// The same config for restart `i`: seeds shifted by `i`. With
    /// `init_only` the batch order stays on the base seed.
    pub fn for_restart(&self, i: u64, init_only: bool) -> Self {
        let mut c = self.clone();
        c.seed = self.seed + i;
        c.data_seed = if init_only {
            Some(self.data_seed.unwrap_or(self.seed))
        } else {
            self.data_seed.map(|d| d + i)
        };
        c
    }
}

#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub step: usize,
    pub report: EvalReport,
    pub weighted_f1: f64,
    /// Mean training loss over the steps since the previous checkpoint.
    pub train_loss: Option<f64>,
    pub snapshot: Option<Snapshot>,
}

#[derive(Debug)]
pub struct TrainOutcome {
    /// Model holding the weights of the best checkpoint.
    pub model: TaggerModel,
    pub best: Checkpoint,
    pub all: Vec<Checkpoint>,
    pub loss_history: Vec<f64>,
    pub total_steps: usize,
    pub seconds: f64,
}

impl TrainOutcome {
    pub fn best_index(&self) -> usize {
        self.all.iter().position(|c| c.step == self.best.step).unwrap_or(0)
    }
}

/// Steps after which a checkpoint is taken: `ceil(k * total / n)` for
/// `k = 1..=n`. Repeats occur when `n > total`.
pub fn checkpoint_steps(total: usize, n: usize) -> Vec<usize> {
    (1..=n).map(|k| (k * total).div_ceil(n)).collect()
}

/// Index of the highest weighted F1; earliest wins ties.
pub fn select_best(scores: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, &s) in scores.iter().enumerate() {
        match best {
            Some(b) if s <= scores[b] => {}
            _ => best = Some(i),
        }
    }
    best
}

pub fn evaluate_model(model: &TaggerModel, sentences: &[TaggedSentence]) -> Result<EvalReport> {
    let pred = model.predict(sentences)?;
    let gold: Vec<Vec<Tag>> = sentences.iter().map(|s| s.tags().to_vec()).collect();
    token_prf(&gold, &pred)
}

/// Fine-tunes a fresh model built from `encoder`. The random-encoder
/// vocabulary is learnt from `train`.
pub fn fine_tune(
    encoder: &EncoderHandle,
    train: &[TaggedSentence],
    valid: &[TaggedSentence],
    config: &TrainingConfig,
) -> Result<TrainOutcome> {
    check_inputs(train, valid, config)?;
    let model = encoder.instantiate(train, config.seed)?;
    train_model(model, train, valid, config)
}

/// Continues training from `start` (encoder and head); `start` itself is
/// left untouched.
pub fn transfer(
    start: &TaggerModel,
    train: &[TaggedSentence],
    valid: &[TaggedSentence],
    config: &TrainingConfig,
) -> Result<TrainOutcome> {
    check_inputs(train, valid, config)?;
    train_model(start.fork()?, train, valid, config)
}

fn check_inputs(train: &[TaggedSentence], valid: &[TaggedSentence], config: &TrainingConfig) -> Result<()> {
    config.validate()?;
    if train.is_empty() {
        return Err(Error::domain("empty training set"));
    }
    if valid.is_empty() {
        return Err(Error::domain("empty validation set"));
    }
    if !valid.iter().any(TaggedSentence::has_entity) {
        return Err(Error::domain(
            "validation set has no SN or SV token, so weighted F1 is undefined",
        ));
    }
    Ok(())
}

fn shuffle(order: &mut [usize], rng: &mut ChaCha8Rng) {
    for i in (1..order.len()).rev() {
        let bound = (i + 1) as u64;
        let zone = u64::MAX - u64::MAX % bound;
        let j = loop {
            let x = rng.next_u64();
            if x < zone {
                break (x % bound) as usize;
            }
        };
        order.swap(i, j);
    }
}

fn clip_grads(grads: &mut candle_core::backprop::GradStore, vars: &[candle_core::Var], max_norm: f64) -> Result<()> {
    if max_norm <= 0.0 {
        return Ok(());
    }
    let mut sq = 0f64;
    for v in vars {
        if let Some(g) = grads.get(v.as_tensor()) {
            sq += g.sqr()?.sum_all()?.to_scalar::<f32>()? as f64;
        }
    }
    let norm = sq.sqrt();
    if norm > max_norm {
        let scale = max_norm / (norm + 1e-6);
        for v in vars {
            if let Some(g) = grads.remove(v.as_tensor()) {
                grads.insert(v.as_tensor(), (g * scale)?);
            }
        }
    }
    Ok(())
}

fn train_model(
    mut model: TaggerModel,
    train: &[TaggedSentence],
    valid: &[TaggedSentence],
    config: &TrainingConfig,
) -> Result<TrainOutcome> {
    let started = Instant::now();
    model.set_precision(config.precision);
    let examples = model.training_examples(train)?;
    let steps_per_epoch = examples.len().div_ceil(config.batch_size);
    let total = config.max_steps.unwrap_or(steps_per_epoch * config.epochs);
    let marks = checkpoint_steps(total, config.checkpoints_per_run);

    let vars = model.params().vars();
    let mut opt = AdamW::new(
        vars.clone(),
        ParamsAdamW {
            lr: config.learning_rate,
            beta1: config.adam_beta1,
            beta2: config.adam_beta2,
            eps: config.adam_eps,
            weight_decay: config.weight_decay,
        },
    )?;
    let mut data_rng = ChaCha8Rng::seed_from_u64(config.data_seed.unwrap_or(config.seed));
    data_rng.set_stream(3);
    let mut drop_rng = ChaCha8Rng::seed_from_u64(config.seed);
    drop_rng.set_stream(4);

    let mut all: Vec<Checkpoint> = Vec::with_capacity(marks.len());
    let mut best: Option<usize> = None;
    let mut losses = Vec::with_capacity(total);
    let mut since_last: Vec<f64> = Vec::new();
    let mut next_mark = 0;
    let mut step = 0;

    let mut take_checkpoints = |model: &TaggerModel, step: usize, since_last: &mut Vec<f64>, next_mark: &mut usize| -> Result<()> {
        while *next_mark < marks.len() && marks[*next_mark] == step {
            let report = evaluate_model(model, valid)?;
            let wf1 = weighted_f1(&report)?;
            let train_loss = if since_last.is_empty() {
                None
            } else {
                Some(since_last.iter().sum::<f64>() / since_last.len() as f64)
            };
            since_last.clear();
            let improves = best.is_none_or(|b| wf1 > all[b].weighted_f1);
            let snapshot = if improves || config.keep_all_snapshots {
                Some(model.snapshot()?)
            } else {
                None
            };
            if improves {
                if let Some(b) = best {
                    if !config.keep_all_snapshots {
                        all[b].snapshot = None;
                    }
                }
                best = Some(all.len());
            }
            log::info!("checkpoint step {step}: weighted F1 {wf1:.4}");
            all.push(Checkpoint {
                step,
                report,
                weighted_f1: wf1,
                train_loss,
                snapshot,
            });
            *next_mark += 1;
        }
        Ok(())
    };

    take_checkpoints(&model, 0, &mut since_last, &mut next_mark)?;
    let mut order: Vec<usize> = (0..examples.len()).collect();
    while step < total {
        shuffle(&mut order, &mut data_rng);
        for chunk in order.chunks(config.batch_size) {
            if step >= total {
                break;
            }
            let lr = config.learning_rate * (1.0 - step as f64 / total as f64);
            opt.set_learning_rate(lr);
            let batch: Vec<_> = chunk.iter().map(|&i| (&examples[i].0, examples[i].1.as_slice())).collect();
            let loss = if batch.iter().all(|(_, l)| l.iter().all(Option::is_none)) {
                None
            } else {
                let mut d = DropoutRng { rng: &mut drop_rng };
                Some(model.loss(&batch, Some(&mut d))?)
            };
            step += 1;
            if let Some(loss) = loss {
                let value = loss.to_scalar::<f32>()? as f64;
                if !value.is_finite() {
                    return Err(Error::Training {
                        step,
                        message: format!("loss is {value}"),
                    });
                }
                let mut grads = loss.backward()?;
                clip_grads(&mut grads, &vars, config.max_grad_norm)?;
                opt.step(&grads)?;
                losses.push(value);
                since_last.push(value);
            }
            take_checkpoints(&model, step, &mut since_last, &mut next_mark)?;
        }
    }
    drop(take_checkpoints);

    let best = best.ok_or_else(|| Error::domain("no checkpoint was taken"))?;
    let chosen = all[best].clone();
    model.restore(chosen.snapshot.as_ref().expect("best snapshot retained"))?;
    Ok(TrainOutcome {
        model,
        best: chosen,
        all,
        loss_history: losses,
        total_steps: total,
        seconds: started.elapsed().as_secs_f64(),
    })
}

/// Mean loss over each window of `width` steps.
pub fn smoothed(losses: &[f64], width: usize) -> Vec<f64> {
    losses
        .chunks(width.max(1))
        .map(|c| c.iter().sum::<f64>() / c.len() as f64)
        .collect()
}
