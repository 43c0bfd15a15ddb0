//! The real stages: sampling, grid-searched training and evaluation on a
//! loaded corpus.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, RestartMode, StructShotSpec, TransferMode, TransferSpec};
use super::matrix::Stages;
use super::record::{RestartResult, RunRecord};
use super::rundir::cached_or_run;
use crate::corpus::{Category, Corpus, Split, Tag, TaggedSentence};
use crate::error::{Error, Result};
use crate::evaluation::{token_prf, EvalReport};
use crate::sampling::{build_aggregate, build_fewsample_split, carve_validation, FewSampleSplit, SamplingSpec};
use crate::structshot::{structshot_tag_with, DecodeMode, StructShotOptions};
use crate::tagger::{
    evaluate_model, grid_search, CellRecord, EncoderHandle, FineTuneTrainer, GridResult, GridSpace, TaggerModel,
    TrainOutcome, TrainingConfig, TransferTrainer,
};

/// Training pool of a category: its official train split when the category
/// ships a validation split, otherwise train minus a carved `fraction`.
pub fn category_pool(corpus: &Corpus, category: Category, fraction: f64, seed: u64) -> Result<Vec<TaggedSentence>> {
    let train = corpus.require(category, Split::Train)?;
    if corpus.contains(category, Split::Valid) {
        Ok(train.to_vec())
    } else {
        Ok(carve_validation(train, fraction, seed)?.0)
    }
}

pub fn finetune_split(corpus: &Corpus, category: Category, sampling: SamplingSpec) -> Result<FewSampleSplit> {
    let train = corpus.require(category, Split::Train)?;
    build_fewsample_split(train, sampling, vec![(category, Split::Train)])
}

/// `count` sentences (and a validation set) from each category's pool.
pub fn transfer_splits(
    corpus: &Corpus,
    categories: &[Category],
    count: usize,
    spec: &TransferSpec,
) -> Result<BTreeMap<Category, FewSampleSplit>> {
    categories
        .iter()
        .map(|&c| {
            let pool = category_pool(corpus, c, spec.validation_fraction, spec.seed)?;
            let split = build_fewsample_split(&pool, SamplingSpec::count(count, spec.seed), vec![(c, Split::Train)])
                .map_err(|e| Error::domain(format!("{c}: {e}")))?;
            Ok((c, split))
        })
        .collect()
}

fn union(splits: &BTreeMap<Category, FewSampleSplit>, part: fn(&FewSampleSplit) -> &Vec<TaggedSentence>) -> Result<Vec<TaggedSentence>> {
    build_aggregate(&splits.iter().map(|(c, s)| (*c, part(s).clone())).collect())
}

/// Grid-searched transfer from `start` on the union of `splits`.
pub fn transfer_on(
    start: &TaggerModel,
    splits: &BTreeMap<Category, FewSampleSplit>,
    grid: &GridSpace,
    training: &TrainingConfig,
) -> Result<GridResult<TrainOutcome>> {
    let train = union(splits, |s| &s.train)?;
    let valid = union(splits, |s| &s.valid)?;
    grid_search(
        &mut TransferTrainer {
            start,
            train: &train,
            valid: &valid,
        },
        grid,
        training,
    )
}

pub fn structshot_report(
    model: &TaggerModel,
    support: &[TaggedSentence],
    test: &[TaggedSentence],
    transition_corpus: &[TaggedSentence],
    spec: &StructShotSpec,
) -> Result<EvalReport> {
    let opts = StructShotOptions {
        mode: DecodeMode::Viterbi,
        temperature: spec.temperature,
        require_coverage: true,
    };
    let pred = structshot_tag_with(model, support, test, transition_corpus, opts)?;
    let gold: Vec<Vec<Tag>> = test.iter().map(|s| s.tags().to_vec()).collect();
    token_prf(&gold, &pred)
}

/// Models produced by the stages of one restart.
pub struct StageModel {
    pub shared: TaggerModel,
    pub per_category: BTreeMap<Category, TaggerModel>,
}

impl StageModel {
    pub fn for_category(&self, c: Category) -> &TaggerModel {
        self.per_category.get(&c).unwrap_or(&self.shared)
    }
}

/// [`Stages`] over a loaded corpus. Support sets for the nearest-neighbour
/// settings are the per-category transfer samples.
pub struct CorpusStages<'a> {
    pub corpus: &'a Corpus,
    pub config: &'a ExperimentConfig,
    pub encoder: EncoderHandle,
    ft: Option<FewSampleSplit>,
    tl: Option<BTreeMap<Category, FewSampleSplit>>,
}

impl<'a> CorpusStages<'a> {
    pub fn new(corpus: &'a Corpus, config: &'a ExperimentConfig) -> Result<Self> {
        config.validate()?;
        let encoder = EncoderHandle::parse(&config.encoder)?;
        let ft = finetune_split(corpus, config.fine_tune.category, config.fine_tune.sampling)?;
        let tl = match &config.transfer {
            Some(t) => Some(transfer_splits(corpus, &t.categories, t.count, t)?),
            None => None,
        };
        for c in config.transfer.iter().flat_map(|t| &t.categories) {
            corpus.require(*c, Split::Test)?;
        }
        Ok(CorpusStages {
            corpus,
            config,
            encoder,
            ft: Some(ft),
            tl,
        })
    }

    fn transition_corpus(&self, spec: &StructShotSpec) -> Result<&[TaggedSentence]> {
        if spec.transition_category == self.config.fine_tune.category {
            return Ok(&self.ft.as_ref().expect("prepared").train);
        }
        self.tl
            .as_ref()
            .and_then(|m| m.get(&spec.transition_category))
            .map(|s| s.train.as_slice())
            .ok_or_else(|| Error::Config(format!("no sample of {} for transitions", spec.transition_category)))
    }
}

impl Stages for CorpusStages<'_> {
    type Model = StageModel;

    fn fine_tune(&mut self, restart: u64) -> Result<StageModel> {
        let split = self.ft.as_ref().expect("prepared");
        let training = self.config.training_for_restart(restart);
        let res = grid_search(
            &mut FineTuneTrainer {
                encoder: &self.encoder,
                train: &split.train,
                valid: &split.valid,
            },
            &self.config.grid,
            &training,
        )?;
        Ok(StageModel {
            shared: res.best.model,
            per_category: BTreeMap::new(),
        })
    }

    fn transfer(&mut self, base: &StageModel, restart: u64) -> Result<StageModel> {
        let spec = self.config.transfer.as_ref().ok_or_else(|| Error::Config("no transfer stage".into()))?;
        let splits = self.tl.as_ref().expect("prepared");
        let training = self.config.training_for_restart(restart);
        match spec.mode {
            TransferMode::Aggregate => Ok(StageModel {
                shared: transfer_on(&base.shared, splits, &self.config.grid, &training)?.best.model,
                per_category: BTreeMap::new(),
            }),
            TransferMode::Individual => {
                let mut per_category = BTreeMap::new();
                for (c, s) in splits {
                    let one = BTreeMap::from([(*c, s.clone())]);
                    per_category.insert(*c, transfer_on(&base.shared, &one, &self.config.grid, &training)?.best.model);
                }
                Ok(StageModel {
                    shared: base.shared.fork()?,
                    per_category,
                })
            }
        }
    }

    fn evaluate(&mut self, model: &StageModel, category: Category, structshot: bool, _restart: u64) -> Result<EvalReport> {
        let test = self.corpus.require(category, Split::Test)?;
        let m = model.for_category(category);
        if !structshot {
            return evaluate_model(m, test);
        }
        let spec = self.config.structshot.as_ref().ok_or_else(|| Error::Config("no structshot stage".into()))?;
        let support = &self
            .tl
            .as_ref()
            .and_then(|t| t.get(&category))
            .ok_or_else(|| Error::Config(format!("no support sample for {category}")))?
            .train;
        structshot_report(m, support, test, self.transition_corpus(spec)?, spec)
    }
}

/// Settings of the `train` verb.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainRunSpec {
    pub encoder: String,
    pub category: Category,
    pub sampling: SamplingSpec,
    pub grid: GridSpace,
    pub training: TrainingConfig,
    pub restarts: usize,
    pub restart_mode: RestartMode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct TrainCell {
    best_config: TrainingConfig,
    valid_weighted_f1: f64,
    best_step: usize,
    test_report: EvalReport,
    cells: Vec<CellRecord>,
    model_dir: PathBuf,
}

pub fn metrics_header() -> String {
    "restart,learning_rate,epochs,step,train_loss,sn_precision,sn_recall,sn_f1,sv_precision,sv_recall,sv_f1,weighted_f1\n".into()
}

fn metrics_rows(restart: u64, cells: &[CellRecord]) -> String {
    let mut out = String::new();
    for c in cells {
        for k in &c.checkpoints {
            let r = &k.report;
            let _ = writeln!(
                out,
                "{restart},{},{},{},{},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6}",
                c.learning_rate,
                c.epochs,
                k.step,
                k.train_loss.map(|l| format!("{l:.6}")).unwrap_or_default(),
                r.sn.precision,
                r.sn.recall,
                r.sn.f1,
                r.sv.precision,
                r.sv.recall,
                r.sv.f1,
                k.weighted_f1
            );
        }
    }
    out
}

/// Samples, grid-searches and evaluates each restart, writing
///
/// - `config.json` and `manifest.json` (sampling provenance, seeds),
/// - `checkpoints/restart-<i>/step-<n>/` for each restart's selected model,
/// - `metrics.csv` (restart x grid cell x checkpoint),
/// - `best/`, the restart with the highest validation weighted F1,
/// - `record.json` with the test reports.
pub fn run_train(corpus: &Corpus, spec: &TrainRunSpec, out: &Path, force: bool) -> Result<RunRecord> {
    let started = Instant::now();
    if spec.restarts == 0 {
        return Err(Error::Config("restarts must be positive".into()));
    }
    let encoder = EncoderHandle::parse(&spec.encoder)?;
    let split = finetune_split(corpus, spec.category, spec.sampling)?;
    let test = corpus.require(spec.category, Split::Test)?;
    fs::create_dir_all(out)?;
    fs::write(out.join("config.json"), serde_json::to_string_pretty(spec)? + "\n")?;
    let manifest = serde_json::json!({
        "provenance": split.provenance,
        "train_size": split.train.len(),
        "valid_size": split.valid.len(),
        "restart_seeds": (0..spec.restarts as u64).map(|r| spec.training.seed + r).collect::<Vec<_>>(),
        "training": spec.training,
        "grid": spec.grid,
        "encoder": encoder.name(),
    });
    fs::write(out.join("manifest.json"), serde_json::to_string_pretty(&manifest)? + "\n")?;

    let mut cells: Vec<Option<TrainCell>> = Vec::new();
    let mut restarts = Vec::new();
    for r in 0..spec.restarts as u64 {
        let training = spec.training.for_restart(r, spec.restart_mode.init_only());
        let res = cached_or_run(Some(&out.join("cells").join(format!("restart-{r}"))), force, || {
            let g = grid_search(
                &mut FineTuneTrainer {
                    encoder: &encoder,
                    train: &split.train,
                    valid: &split.valid,
                },
                &spec.grid,
                &training,
            )?;
            let o = &g.best;
            let model_dir = PathBuf::from("checkpoints")
                .join(format!("restart-{r}"))
                .join(format!("step-{}", o.best.step));
            o.model.save(&out.join(&model_dir))?;
            if training.keep_all_snapshots {
                for c in o.all.iter().filter(|c| c.step != o.best.step) {
                    if let Some(s) = &c.snapshot {
                        let m = o.model.fork()?;
                        m.restore(s)?;
                        m.save(&out.join("checkpoints").join(format!("restart-{r}")).join(format!("step-{}", c.step)))?;
                    }
                }
            }
            Ok(TrainCell {
                best_config: g.best_config.clone(),
                valid_weighted_f1: o.best.weighted_f1,
                best_step: o.best.step,
                test_report: evaluate_model(&o.model, test)?,
                cells: g.cells,
                model_dir,
            })
        });
        restarts.push(RestartResult::from_result(
            r,
            training.seed,
            res.as_ref().map(|c| c.test_report).map_err(|e| Error::domain(e.to_string())),
        ));
        cells.push(res.ok());
    }

    let mut metrics = metrics_header();
    for (r, c) in cells.iter().enumerate() {
        if let Some(c) = c {
            metrics += &metrics_rows(r as u64, &c.cells);
        }
    }
    fs::write(out.join("metrics.csv"), metrics)?;
    let best = cells
        .iter()
        .enumerate()
        .filter_map(|(i, c)| c.as_ref().map(|c| (i, c)))
        .fold(None::<(usize, &TrainCell)>, |acc, (i, c)| match acc {
            Some((_, b)) if c.valid_weighted_f1 <= b.valid_weighted_f1 => acc,
            _ => Some((i, c)),
        });
    if let Some((_, c)) = best {
        let model = TaggerModel::load(&out.join(&c.model_dir))?;
        let best_dir = out.join("best");
        if best_dir.exists() {
            fs::remove_dir_all(&best_dir)?;
        }
        model.save(&best_dir)?;
    }
    let record = RunRecord::new(
        format!("{}-{}", spec.encoder, spec.category),
        serde_json::to_value(spec)?,
        restarts,
        started.elapsed().as_secs_f64(),
    );
    record.save(&out.join("record.json"))?;
    Ok(record)
}

/// One transfer cell for the sweeps: sample `count` per category, transfer
/// from `start`, evaluate on each category's test split.
pub fn transfer_cell(
    corpus: &Corpus,
    start: &TaggerModel,
    categories: &[Category],
    count: usize,
    spec: &TransferSpec,
    grid: &GridSpace,
    training: &TrainingConfig,
) -> Result<Vec<(Category, EvalReport)>> {
    let splits = transfer_splits(corpus, categories, count, spec)?;
    let model = transfer_on(start, &splits, grid, training)?.best.model;
    categories
        .iter()
        .map(|&c| Ok((c, evaluate_model(&model, corpus.require(c, Split::Test)?)?)))
        .collect()
}

/// One fine-tuning cell for the proportion sweep, scored on the category's
/// test split.
pub fn finetune_cell(
    corpus: &Corpus,
    encoder: &EncoderHandle,
    category: Category,
    sampling: SamplingSpec,
    grid: &GridSpace,
    training: &TrainingConfig,
) -> Result<EvalReport> {
    let split = finetune_split(corpus, category, sampling)?;
    let g = grid_search(
        &mut FineTuneTrainer {
            encoder,
            train: &split.train,
            valid: &split.valid,
        },
        grid,
        training,
    )?;
    evaluate_model(&g.best.model, corpus.require(category, Split::Test)?)
}
