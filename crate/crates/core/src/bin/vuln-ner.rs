use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use vuln_ner::corpus::{
    load_viem_dataset, parse_conll_with, pooled_nononly_proportion, render_stats_csv, render_stats_text,
    serialize_conll, stats_table, Category, Corpus, Delimiter, PoolRule, Split, Tag, TaggedSentence,
};
use vuln_ner::evaluation::{render_report_csv, span_prf, token_prf};
use vuln_ner::harness::{
    export_embeddings, finetune_cell, render_probe_csv, run_adversarial_probe, run_finetune_sweep,
    run_setting_matrix, run_train, run_transfer_sweep, transfer_cell, write_matrix, CorpusStages, EmbeddingFormat,
    ExperimentConfig, ProbeOptions, RestartMode, Setting, SweepOptions, TrainRunSpec, TransferMode, DEFAULT_COUNTS,
    DEFAULT_PROPORTIONS,
};
use vuln_ner::sampling::{
    build_aggregate, build_fewsample_split, content_hash, SampleSize, SamplingSpec, DEFAULT_SEED,
};
use vuln_ner::structshot::{estimate_transitions, structshot_tag_with, DecodeMode, StructShotOptions};
use vuln_ner::tagger::{EncoderHandle, GridSpace, Precision, TaggerModel};
use vuln_ner::{Error, Result};

#[derive(Parser)]
#[command(name = "vuln-ner", version, about = "Few-sample software name/version tagging for vulnerability reports")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum DelimArg {
    Tab,
    Whitespace,
}

impl From<DelimArg> for Delimiter {
    fn from(d: DelimArg) -> Self {
        match d {
            DelimArg::Tab => Delimiter::Tab,
            DelimArg::Whitespace => Delimiter::Whitespace,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum PoolArg {
    Train,
    TrainValid,
    TrainOfficialValid,
}

#[derive(Args, Clone)]
struct FileArgs {
    /// Column separator of input CoNLL files.
    #[arg(long, value_enum, default_value = "tab")]
    delimiter: DelimArg,
}

/// Experiment settings; each flag overrides the matching field of `--config`.
#[derive(Args, Clone, Default)]
struct ExpArgs {
    /// JSON experiment config.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Dataset root.
    #[arg(long)]
    root: Option<PathBuf>,
    #[arg(long, value_enum)]
    delimiter: Option<DelimArg>,
    /// `random[:hidden=..,layers=..]`, a model directory, or a name under $VULN_NER_MODELS.
    #[arg(long)]
    encoder: Option<String>,
    /// Fine-tuning category.
    #[arg(long)]
    category: Option<Category>,
    /// Fine-tuning sample as a fraction of the category's train split.
    #[arg(long)]
    proportion: Option<f64>,
    /// Base seed for sampling and training.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    restarts: Option<usize>,
    /// Keep batch order on the base seed across restarts.
    #[arg(long)]
    init_only: bool,
    /// `default`, or `LRS:EPOCHS` such as `1e-5,5e-6:3,5`.
    #[arg(long)]
    grid: Option<String>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    checkpoints: Option<usize>,
    /// Train with f16 activations.
    #[arg(long)]
    half: bool,
    /// Comma-separated settings, e.g. `FT,FT+TL`.
    #[arg(long, value_delimiter = ',')]
    settings: Option<Vec<Setting>>,
    /// Sentences sampled per transfer category.
    #[arg(long)]
    count: Option<usize>,
    #[arg(long)]
    individual: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_grid(s: &str) -> Result<GridSpace> {
    if s == "default" {
        return Ok(GridSpace::default());
    }
    let (lrs, eps) = s
        .split_once(':')
        .ok_or_else(|| Error::Config(format!("grid {s:?} is not LRS:EPOCHS")))?;
    let bad = || Error::Config(format!("bad grid {s:?}"));
    Ok(GridSpace {
        learning_rates: lrs.split(',').map(|x| x.trim().parse::<f64>().map_err(|_| bad())).collect::<Result<_>>()?,
        epochs: eps.split(',').map(|x| x.trim().parse::<usize>().map_err(|_| bad())).collect::<Result<_>>()?,
    })
}

impl ExpArgs {
    fn resolve(&self) -> Result<ExperimentConfig> {
        let mut c = match &self.config {
            Some(p) => ExperimentConfig::load(p)?,
            None => ExperimentConfig::default(),
        };
        if let Some(v) = &self.root {
            c.data_root = v.clone();
        }
        if let Some(v) = self.delimiter {
            c.delimiter = v.into();
        }
        if let Some(v) = &self.encoder {
            c.encoder = v.clone();
        }
        if let Some(v) = self.category {
            c.fine_tune.category = v;
        }
        if let Some(v) = self.proportion {
            c.fine_tune.sampling.size = SampleSize::Proportion(v);
        }
        if let Some(v) = self.seed {
            c.fine_tune.sampling.seed = v;
            c.training.seed = v;
            if let Some(t) = &mut c.transfer {
                t.seed = v;
            }
        }
        if let Some(v) = self.restarts {
            c.restarts = v;
        }
        if self.init_only {
            c.restart_mode = RestartMode::InitOnly;
        }
        if let Some(v) = &self.grid {
            c.grid = parse_grid(v)?;
        }
        if let Some(v) = self.batch_size {
            c.training.batch_size = v;
        }
        if let Some(v) = self.checkpoints {
            c.training.checkpoints_per_run = v;
        }
        if self.half {
            c.training.precision = Precision::Half;
        }
        if let Some(v) = &self.settings {
            c.settings = v.clone();
        }
        if let Some(t) = &mut c.transfer {
            if let Some(v) = self.count {
                t.count = v;
            }
            if self.individual {
                t.mode = TransferMode::Individual;
            }
        }
        if let Some(v) = &self.out {
            c.output_dir = v.clone();
        }
        Ok(c)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Validate a dataset release and write it back in normalised form.
    Ingest {
        #[arg(long)]
        root: PathBuf,
        #[command(flatten)]
        files: FileArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Per-category/split statistics and pooled non-entity-only proportions.
    Stats {
        #[arg(long)]
        root: PathBuf,
        #[command(flatten)]
        files: FileArgs,
        #[arg(long)]
        csv: bool,
        #[arg(long, value_enum, default_value = "train-official-valid")]
        pool_rule: PoolArg,
    },
    /// Draw a few-sample training set and its validation set.
    Sample {
        #[arg(long)]
        root: PathBuf,
        #[command(flatten)]
        files: FileArgs,
        #[arg(long, default_value = "memc")]
        category: Category,
        #[arg(long, conflicts_with = "count")]
        proportion: Option<f64>,
        #[arg(long)]
        count: Option<usize>,
        /// Sample `--count` from each of the 12 transfer categories and concatenate.
        #[arg(long, requires = "count")]
        aggregate: bool,
        #[arg(long, default_value_t = DEFAULT_SEED)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Grid-searched fine-tuning with restarts.
    Train {
        #[command(flatten)]
        exp: ExpArgs,
        #[arg(long)]
        force: bool,
    },
    /// Transfer from a trained model to the other categories.
    Transfer {
        #[command(flatten)]
        exp: ExpArgs,
        /// Model directory, e.g. RUN_DIR/best.
        #[arg(long)]
        from: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "64")]
        counts: Vec<usize>,
        #[arg(long, conflicts_with = "individual")]
        aggregate: bool,
        #[arg(long)]
        force: bool,
    },
    /// Nearest-neighbour tagging against a support file.
    Structshot {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        support: PathBuf,
        #[arg(long)]
        test: PathBuf,
        /// Tag sequences for the transition model; defaults to the support file.
        #[arg(long, alias = "transitions-from")]
        transitions: Option<PathBuf>,
        /// Plain nearest neighbour, no Viterbi.
        #[arg(long, alias = "no-crf")]
        nn: bool,
        #[arg(long, default_value_t = 1.0)]
        temperature: f64,
        #[command(flatten)]
        files: FileArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Tag sentences with a trained model.
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[command(flatten)]
        files: FileArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score predictions against gold tags.
    Eval {
        #[arg(long)]
        gold: PathBuf,
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        span_level: bool,
        #[command(flatten)]
        files: FileArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the FT / FT+SS / FT+TL / FT+TL+SS comparison.
    Matrix {
        #[command(flatten)]
        exp: ExpArgs,
    },
    /// Fine-tuning over sample proportions.
    SweepFt {
        #[command(flatten)]
        exp: ExpArgs,
        #[arg(long, value_delimiter = ',')]
        proportions: Option<Vec<f64>>,
        #[arg(long)]
        force: bool,
    },
    /// Transfer over per-category counts.
    SweepTl {
        #[command(flatten)]
        exp: ExpArgs,
        #[arg(long)]
        from: PathBuf,
        #[arg(long, value_delimiter = ',')]
        counts: Option<Vec<usize>>,
        #[arg(long)]
        force: bool,
    },
    /// Grow a support set sentence by sentence and track test scores.
    Probe {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        pool: PathBuf,
        #[arg(long)]
        test: PathBuf,
        #[arg(long, alias = "transitions-from")]
        transitions: Option<PathBuf>,
        #[arg(long, default_value_t = 0.20)]
        threshold: f64,
        #[arg(long, default_value_t = 1.0)]
        temperature: f64,
        #[command(flatten)]
        files: FileArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write per-token representations with gold tags.
    ExportEmb {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        binary: bool,
        #[command(flatten)]
        files: FileArgs,
        #[arg(long)]
        out: PathBuf,
    },
}

fn read_conll(path: &Path, files: &FileArgs) -> Result<Vec<TaggedSentence>> {
    let text = fs::read_to_string(path).map_err(|e| Error::from(e).in_file(path))?;
    parse_conll_with(&text, files.delimiter.into()).map_err(|e| e.in_file(path))
}

fn write_json<T: serde::Serialize>(path: &Path, v: &T) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(v)? + "\n")?;
    Ok(())
}

fn load_corpus(c: &ExperimentConfig) -> Result<Corpus> {
    load_viem_dataset(&c.data_root, c.delimiter)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Ingest { root, files, out } => {
            let corpus = load_viem_dataset(&root, files.delimiter.into())?;
            let mut manifest = BTreeMap::new();
            for ((c, s), sentences) in corpus.iter() {
                let dir = out.join(c.name());
                fs::create_dir_all(&dir)?;
                fs::write(dir.join(format!("{}.conll", s.name())), serialize_conll(sentences))?;
                manifest.insert(
                    format!("{c}/{s}"),
                    serde_json::json!({"sentences": sentences.len(), "sha256": content_hash(sentences)}),
                );
            }
            write_json(&out.join("manifest.json"), &manifest)?;
            println!("ingested {} splits into {}", corpus.len(), out.display());
        }
        Command::Stats { root, files, csv, pool_rule } => {
            let corpus = load_viem_dataset(&root, files.delimiter.into())?;
            let rows = stats_table(&corpus)?;
            if csv {
                print!("{}", render_stats_csv(&rows));
            } else {
                print!("{}", render_stats_text(&rows));
            }
            let rule = match pool_rule {
                PoolArg::Train => PoolRule::Train,
                PoolArg::TrainValid => PoolRule::TrainValid,
                PoolArg::TrainOfficialValid => PoolRule::TrainOfficialValid,
            };
            let others: Vec<Category> = Category::TRANSFER_TARGETS.to_vec();
            let all = pooled_nononly_proportion(&corpus, &Category::ALL, rule)?;
            let without = pooled_nononly_proportion(&corpus, &others, rule)?;
            println!("# non-entity-only sentences, all categories: {all:.4}");
            println!("# non-entity-only sentences, without memc: {without:.4}");
        }
        Command::Sample { root, files, category, proportion, count, aggregate, seed, out } => {
            let corpus = load_viem_dataset(&root, files.delimiter.into())?;
            let spec = match (proportion, count) {
                (Some(p), None) => SamplingSpec::proportion(p, seed),
                (None, Some(k)) => SamplingSpec::count(k, seed),
                _ => return Err(Error::Config("give exactly one of --proportion and --count".into())),
            };
            fs::create_dir_all(&out)?;
            let splits = if aggregate {
                Category::TRANSFER_TARGETS
                    .iter()
                    .map(|&c| {
                        let pool = vuln_ner::harness::category_pool(&corpus, c, vuln_ner::sampling::VALIDATION_FRACTION, seed)?;
                        Ok((c, build_fewsample_split(&pool, spec, vec![(c, Split::Train)])?))
                    })
                    .collect::<Result<BTreeMap<_, _>>>()?
            } else {
                let train = corpus.require(category, Split::Train)?;
                BTreeMap::from([(category, build_fewsample_split(train, spec, vec![(category, Split::Train)])?)])
            };
            let (train, valid) = if aggregate {
                (
                    build_aggregate(&splits.iter().map(|(c, s)| (*c, s.train.clone())).collect())?,
                    build_aggregate(&splits.iter().map(|(c, s)| (*c, s.valid.clone())).collect())?,
                )
            } else {
                let s = &splits[&category];
                (s.train.clone(), s.valid.clone())
            };
            fs::write(out.join("train.conll"), serialize_conll(&train))?;
            fs::write(out.join("valid.conll"), serialize_conll(&valid))?;
            let prov: BTreeMap<String, _> = splits.iter().map(|(c, s)| (c.name().to_string(), &s.provenance)).collect();
            write_json(&out.join("provenance.json"), &prov)?;
            println!("train {} / valid {} -> {}", train.len(), valid.len(), out.display());
        }
        Command::Train { exp, force } => {
            let c = exp.resolve()?;
            let corpus = load_corpus(&c)?;
            let spec = TrainRunSpec {
                encoder: c.encoder.clone(),
                category: c.fine_tune.category,
                sampling: c.fine_tune.sampling,
                grid: c.grid.clone(),
                training: c.training.clone(),
                restarts: c.restarts,
                restart_mode: c.restart_mode,
            };
            let rec = run_train(&corpus, &spec, &c.output_dir, force)?;
            print_record(&rec);
        }
        Command::Transfer { exp, from, counts, aggregate: _, force } => {
            let c = exp.resolve()?;
            transfer_sweep(&c, &from, &counts, force)?;
        }
        Command::SweepTl { exp, from, counts, force } => {
            let c = exp.resolve()?;
            transfer_sweep(&c, &from, &counts.unwrap_or_else(|| DEFAULT_COUNTS.to_vec()), force)?;
        }
        Command::SweepFt { exp, proportions, force } => {
            let c = exp.resolve()?;
            let corpus = load_corpus(&c)?;
            let encoder = EncoderHandle::parse(&c.encoder)?;
            let opts = SweepOptions {
                restarts: c.restarts,
                base_seed: c.training.seed,
                out_dir: Some(c.output_dir.clone()),
                force,
            };
            let props = proportions.unwrap_or_else(|| DEFAULT_PROPORTIONS.to_vec());
            let recs = run_finetune_sweep(&props, &c, &opts, |p, r| {
                let sampling = SamplingSpec {
                    size: SampleSize::Proportion(p),
                    seed: c.fine_tune.sampling.seed,
                };
                finetune_cell(&corpus, &encoder, c.fine_tune.category, sampling, &c.grid, &c.training_for_restart(r))
            })?;
            for r in &recs {
                print_record(r);
            }
        }
        Command::Matrix { exp } => {
            let c = exp.resolve()?;
            c.validate()?;
            let corpus = load_corpus(&c)?;
            let mut stages = CorpusStages::new(&corpus, &c)?;
            let res = run_setting_matrix(&c, &mut stages)?;
            fs::create_dir_all(&c.output_dir)?;
            c.save(&c.output_dir.join("config.json"))?;
            write_matrix(&c.output_dir, &res)?;
            print!("{}", res.comparison.text);
        }
        Command::Structshot { model, support, test, transitions, nn, temperature, files, out } => {
            let m = TaggerModel::load(&model)?;
            let sup = read_conll(&support, &files)?;
            let tst = read_conll(&test, &files)?;
            let trans = match &transitions {
                Some(p) => read_conll(p, &files)?,
                None => sup.clone(),
            };
            let opts = StructShotOptions {
                mode: if nn { DecodeMode::NearestNeighbor } else { DecodeMode::Viterbi },
                temperature,
                require_coverage: true,
            };
            let pred = structshot_tag_with(&m, &sup, &tst, &trans, opts)?;
            write_predictions(&out, &tst, pred)?;
            write_json(
                &out.with_extension("manifest.json"),
                &serde_json::json!({
                    "model": model, "support": support, "support_sha256": content_hash(&sup),
                    "test": test, "transitions_sha256": content_hash(&trans),
                    "mode": if nn { "nearest-neighbor" } else { "viterbi" }, "temperature": temperature,
                }),
            )?;
        }
        Command::Predict { model, input, files, out } => {
            let m = TaggerModel::load(&model)?;
            let sentences = read_conll(&input, &files)?;
            let pred = m.predict(&sentences)?;
            write_predictions(&out, &sentences, pred)?;
        }
        Command::Eval { gold, pred, span_level, files, out } => {
            let g: Vec<Vec<Tag>> = read_conll(&gold, &files)?.iter().map(|s| s.tags().to_vec()).collect();
            let p: Vec<Vec<Tag>> = read_conll(&pred, &files)?.iter().map(|s| s.tags().to_vec()).collect();
            let report = if span_level { span_prf(&g, &p)? } else { token_prf(&g, &p)? };
            let csv = render_report_csv(&report);
            match out {
                Some(o) => fs::write(o, &csv)?,
                None => print!("{csv}"),
            }
        }
        Command::Probe { model, pool, test, transitions, threshold, temperature, files, out } => {
            let m = TaggerModel::load(&model)?;
            let pool_s = read_conll(&pool, &files)?;
            let test_s = read_conll(&test, &files)?;
            let trans = match &transitions {
                Some(p) => read_conll(p, &files)?,
                None => pool_s.clone(),
            };
            let seqs: Vec<&[Tag]> = trans.iter().map(|s| s.tags()).collect();
            let t = estimate_transitions(&seqs)?;
            let steps = run_adversarial_probe(
                &pool_s,
                &test_s,
                &m,
                &t,
                ProbeOptions {
                    drop_threshold: threshold,
                    temperature,
                },
            )?;
            fs::create_dir_all(&out)?;
            let csv = render_probe_csv(&steps);
            fs::write(out.join("trajectory.csv"), &csv)?;
            write_json(&out.join("trajectory.json"), &steps)?;
            write_json(
                &out.join("manifest.json"),
                &serde_json::json!({"model": model, "pool_sha256": content_hash(&pool_s), "test_sha256": content_hash(&test_s)}),
            )?;
            print!("{csv}");
            for s in steps.iter().filter(|s| s.flagged) {
                println!("# SN F1 drop above {threshold} at k={} ({})", s.k, s.added);
            }
        }
        Command::ExportEmb { model, input, binary, files, out } => {
            let m = TaggerModel::load(&model)?;
            let sentences = read_conll(&input, &files)?;
            let fmt = if binary { EmbeddingFormat::Binary } else { EmbeddingFormat::Text };
            let n = export_embeddings(&m, &sentences, &out, fmt)?;
            println!("{n} rows -> {}", out.display());
        }
    }
    Ok(())
}

fn transfer_sweep(c: &ExperimentConfig, from: &Path, counts: &[usize], force: bool) -> Result<()> {
    let spec = c.transfer.clone().ok_or_else(|| Error::Config("config has no transfer stage".into()))?;
    let corpus = load_corpus(c)?;
    let start = TaggerModel::load(from)?;
    let opts = SweepOptions {
        restarts: c.restarts,
        base_seed: c.training.seed,
        out_dir: Some(c.output_dir.clone()),
        force,
    };
    let recs = run_transfer_sweep(counts, spec.mode, &spec.categories, c, &opts, |count, cats, r| {
        transfer_cell(&corpus, &start, cats, count, &spec, &c.grid, &c.training_for_restart(r))
    })?;
    for r in &recs {
        print_record(r);
    }
    Ok(())
}

fn write_predictions(out: &Path, sentences: &[TaggedSentence], pred: Vec<Vec<Tag>>) -> Result<()> {
    let tagged: Vec<TaggedSentence> = sentences
        .iter()
        .zip(pred)
        .map(|(s, p)| s.retagged(p))
        .collect::<Result<_>>()?;
    fs::write(out, serialize_conll(&tagged))?;
    Ok(())
}

fn print_record(r: &vuln_ner::harness::RunRecord) {
    match &r.summary {
        Some(s) => println!(
            "{}: SN F1 {:.4} (+/- {:.4})  SV F1 {:.4} (+/- {:.4})  weighted {:.4}  [{} of {} restarts]",
            r.label,
            s.mean[2],
            s.std[2],
            s.mean[5],
            s.std[5],
            s.mean[6],
            s.n,
            r.restarts.len()
        ),
        None => println!("{}: all restarts failed", r.label),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
