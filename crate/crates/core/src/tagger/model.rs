use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use candle_core::{DType, Device, Tensor};
use rand_chacha::ChaCha8Rng;
use rand_core::SeedableRng;
use serde::{Deserialize, Serialize};

use super::alignment::{align_labels, plan_windows, PieceLabel, TokenizationAlignment, WindowPlan};
use super::encoder::{set_checked, Dense, DropoutRng, Encoder, EncoderConfig, ParamStore};
use super::tokenizer::SubwordTokenizer;
use crate::corpus::{Tag, TaggedSentence};
use crate::error::{Error, Result};
use crate::structshot::TokenEmbedder;

const INFER_BATCH: usize = 16;
const HEAD: &str = "classifier";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    #[default]
    Full,
    /// f16 activations over f32 master weights.
    Half,
}

impl Precision {
    pub fn dtype(self) -> DType {
        match self {
            Precision::Full => DType::F32,
            Precision::Half => DType::F16,
        }
    }
}

/// Where an encoder comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum EncoderHandle {
    /// A Hugging Face style directory: `config.json`, `model.safetensors`,
    /// and `tokenizer.json` or `vocab.txt`.
    Pretrained { name: String, dir: PathBuf },
    /// A freshly initialised BERT whose WordPiece vocabulary is learnt from
    /// the training data.
    Random(RandomEncoderSpec),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RandomEncoderSpec {
    pub hidden: usize,
    pub layers: usize,
    pub heads: usize,
    pub max_len: usize,
    pub max_vocab: usize,
}

impl Default for RandomEncoderSpec {
    fn default() -> Self {
        RandomEncoderSpec {
            hidden: 32,
            layers: 1,
            heads: 2,
            max_len: 128,
            max_vocab: 8000,
        }
    }
}

pub const MODELS_ENV: &str = "VULN_NER_MODELS";

impl EncoderHandle {
    /// Parses `random`, `random:hidden=64,layers=2,...`, a directory path,
    /// or a model name looked up under `$VULN_NER_MODELS/<name>`.
    pub fn parse(s: &str) -> Result<Self> {
        if let Some(rest) = s.strip_prefix("random") {
            let mut spec = RandomEncoderSpec::default();
            let rest = rest.strip_prefix(':').unwrap_or(rest);
            for kv in rest.split(',').filter(|x| !x.is_empty()) {
                let (k, v) = kv
                    .split_once('=')
                    .ok_or_else(|| Error::Config(format!("bad encoder option {kv:?}")))?;
                let v: usize = v
                    .parse()
                    .map_err(|_| Error::Config(format!("bad value in {kv:?}")))?;
                match k {
                    "hidden" => spec.hidden = v,
                    "layers" => spec.layers = v,
                    "heads" => spec.heads = v,
                    "max_len" => spec.max_len = v,
                    "vocab" => spec.max_vocab = v,
                    _ => return Err(Error::Config(format!("unknown encoder option {k:?}"))),
                }
            }
            return Ok(EncoderHandle::Random(spec));
        }
        let direct = PathBuf::from(s);
        let dir = if direct.join("config.json").is_file() {
            direct
        } else if let Some(root) = std::env::var_os(MODELS_ENV) {
            PathBuf::from(root).join(s)
        } else {
            direct
        };
        if !dir.join("config.json").is_file() {
            return Err(Error::Config(format!(
                "cannot resolve encoder {s:?}: no config.json at {} (set {MODELS_ENV} to a model root)",
                dir.display()
            )));
        }
        Ok(EncoderHandle::Pretrained {
            name: s.to_string(),
            dir,
        })
    }

    pub fn name(&self) -> String {
        match self {
            EncoderHandle::Pretrained { name, .. } => name.clone(),
            EncoderHandle::Random(s) => format!(
                "random:hidden={},layers={},heads={},max_len={},vocab={}",
                s.hidden, s.layers, s.heads, s.max_len, s.max_vocab
            ),
        }
    }

    /// Builds a tagger: weights loaded (pretrained) or drawn from `seed`
    /// (random encoder and every classification head).
    pub fn instantiate(&self, vocab_corpus: &[TaggedSentence], seed: u64) -> Result<TaggerModel> {
        match self {
            EncoderHandle::Random(spec) => {
                let tokenizer = SubwordTokenizer::build_wordpiece(vocab_corpus, spec.max_vocab)?;
                let mut cfg = EncoderConfig::small(tokenizer.vocab_size(), spec.hidden, spec.layers, spec.heads, spec.max_len);
                cfg.pad_token_id = tokenizer.special().pad;
                TaggerModel::new(cfg, tokenizer, seed, self.name())
            }
            EncoderHandle::Pretrained { name, dir } => {
                let cfg: EncoderConfig = serde_json::from_str(&fs::read_to_string(dir.join("config.json"))?)?;
                let tokenizer = SubwordTokenizer::from_dir(dir)?;
                let model = TaggerModel::new(cfg, tokenizer, seed, name.clone())?;
                model.load_pretrained_weights(&dir.join("model.safetensors"))?;
                Ok(model)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct TaggerMeta {
    encoder_name: String,
    tags: Vec<Tag>,
}

/// Encoder plus a linear token-classification head over `SN`, `SV`, `O`.
#[derive(Debug)]
pub struct TaggerModel {
    encoder: Encoder,
    head: Dense,
    params: ParamStore,
    tokenizer: SubwordTokenizer,
    config: EncoderConfig,
    device: Device,
    precision: Precision,
    encoder_name: String,
}

/// A frozen copy of every model parameter.
pub type Snapshot = Arc<BTreeMap<String, Tensor>>;

impl TaggerModel {
    pub fn new(config: EncoderConfig, tokenizer: SubwordTokenizer, seed: u64, encoder_name: String) -> Result<Self> {
        if tokenizer.vocab_size() > config.vocab_size {
            return Err(Error::Config(format!(
                "tokenizer has {} pieces but the encoder only {}",
                tokenizer.vocab_size(),
                config.vocab_size
            )));
        }
        let device = Device::Cpu;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamStore::default();
        let encoder = Encoder::new(&config, &mut params, &mut rng, &device)?;
        let head = Dense::new(&mut params, HEAD, config.hidden_size, Tag::COUNT, config.initializer_range, &mut rng, &device)?;
        Ok(TaggerModel {
            encoder,
            head,
            params,
            tokenizer,
            config,
            device,
            precision: Precision::Full,
            encoder_name,
        })
    }

    pub fn encoder_name(&self) -> &str {
        &self.encoder_name
    }

    pub fn config(&self) -> &EncoderConfig {
        &self.config
    }

    pub fn tokenizer(&self) -> &SubwordTokenizer {
        &self.tokenizer
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn precision(&self) -> Precision {
        self.precision
    }

    pub fn set_precision(&mut self, p: Precision) {
        self.precision = p;
    }

    /// Longest `[CLS] ... [SEP]` input accepted.
    pub fn max_input_len(&self) -> usize {
        self.config.max_input_len()
    }

    /// An independent copy (separate parameter storage).
    pub fn fork(&self) -> Result<Self> {
        let mut m = TaggerModel::new(self.config.clone(), self.tokenizer.clone(), 0, self.encoder_name.clone())?;
        m.precision = self.precision;
        m.params.restore(&self.params.snapshot()?)?;
        Ok(m)
    }

    pub fn snapshot(&self) -> Result<Snapshot> {
        Ok(Arc::new(self.params.snapshot()?))
    }

    pub fn restore(&self, snapshot: &Snapshot) -> Result<()> {
        self.params.restore(snapshot)
    }

    /// Copies released encoder weights into the model. Names are tried with
    /// and without the architecture prefix, and with the legacy
    /// `gamma`/`beta` LayerNorm names. A missing classification head keeps
    /// its seeded initialisation.
    pub fn load_pretrained_weights(&self, path: &Path) -> Result<()> {
        let tensors = candle_core::safetensors::load(path, &self.device)
            .map_err(|e| Error::from(e).in_file(path))?;
        let prefix = self.config.model_type.prefix();
        for name in self.params.names().map(str::to_string).collect::<Vec<_>>() {
            let var = self.params.get(&name).expect("listed parameter");
            let mut candidates = vec![format!("{prefix}.{name}"), name.clone()];
            if name.contains("LayerNorm") {
                let legacy = name.replace(".weight", ".gamma").replace(".bias", ".beta");
                candidates.push(format!("{prefix}.{legacy}"));
                candidates.push(legacy);
            }
            match candidates.iter().find_map(|c| tensors.get(c)) {
                Some(t) if name.starts_with(HEAD) && t.dims() != var.dims() => {
                    log::warn!("ignoring pretrained {name} of shape {:?}", t.dims());
                }
                Some(t) => set_checked(&name, var, t)?,
                None if name.starts_with(HEAD) => {
                    log::info!("{name} not in checkpoint; using fresh initialisation");
                }
                None => {
                    return Err(Error::Config(format!(
                        "{} lacks encoder weight {name}",
                        path.display()
                    )))
                }
            }
        }
        Ok(())
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("config.json"), serde_json::to_string_pretty(&self.config)?)?;
        self.tokenizer.save(&dir.join("tokenizer.json"))?;
        self.params.save(&dir.join("model.safetensors"))?;
        let meta = TaggerMeta {
            encoder_name: self.encoder_name.clone(),
            tags: Tag::ALL.to_vec(),
        };
        fs::write(dir.join("tagger.json"), serde_json::to_string_pretty(&meta)?)?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let wrap = |e: Error| e.in_file(dir);
        let config: EncoderConfig =
            serde_json::from_str(&fs::read_to_string(dir.join("config.json")).map_err(|e| wrap(e.into()))?)?;
        let meta: TaggerMeta =
            serde_json::from_str(&fs::read_to_string(dir.join("tagger.json")).map_err(|e| wrap(e.into()))?)?;
        if meta.tags != Tag::ALL {
            return Err(Error::Config(format!("unexpected tag order {:?}", meta.tags)));
        }
        let tokenizer = SubwordTokenizer::from_dir(dir)?;
        let model = TaggerModel::new(config, tokenizer, 0, meta.encoder_name)?;
        let tensors = candle_core::safetensors::load(dir.join("model.safetensors"), &model.device)?;
        model.params.restore(&tensors.into_iter().collect())?;
        Ok(model)
    }

    pub fn plan(&self, sentence: &TaggedSentence) -> Result<WindowPlan> {
        let pieces = self.tokenizer.sentence_pieces(sentence.tokens())?;
        plan_windows(&pieces, self.tokenizer.special(), self.max_input_len())
    }

    /// Runs a padded batch; returns (hidden `[b, len, h]`, logits `[b, len, 3]`).
    pub(crate) fn forward_windows(
        &self,
        windows: &[&TokenizationAlignment],
        drop: Option<&mut DropoutRng<'_>>,
    ) -> Result<(Tensor, Tensor)> {
        let len = windows.iter().map(|w| w.len()).max().unwrap_or(0);
        let pad = self.tokenizer.special().pad;
        let mut ids = Vec::with_capacity(windows.len() * len);
        let mut mask = Vec::with_capacity(windows.len() * len);
        for w in windows {
            ids.extend_from_slice(&w.piece_ids);
            mask.extend(std::iter::repeat(1f32).take(w.len()));
            ids.extend(std::iter::repeat(pad).take(len - w.len()));
            mask.extend(std::iter::repeat(0f32).take(len - w.len()));
        }
        let ids = Tensor::from_vec(ids, (windows.len(), len), &self.device)?;
        let mask = Tensor::from_vec(mask, (windows.len(), len), &self.device)?;
        let hidden = self.encoder.forward(&ids, &mask, self.precision.dtype(), drop)?;
        let logits = self.head.forward(&hidden)?.to_dtype(DType::F32)?;
        Ok((hidden.to_dtype(DType::F32)?, logits))
    }

    /// Mean cross-entropy over labelled pieces of a batch.
    pub(crate) fn loss(
        &self,
        batch: &[(&TokenizationAlignment, &[PieceLabel])],
        drop: Option<&mut DropoutRng<'_>>,
    ) -> Result<Tensor> {
        let windows: Vec<&TokenizationAlignment> = batch.iter().map(|(w, _)| *w).collect();
        let (_, logits) = self.forward_windows(&windows, drop)?;
        let (b, len, c) = logits.dims3()?;
        let mut positions = Vec::new();
        let mut targets = Vec::new();
        for (i, (_, labels)) in batch.iter().enumerate() {
            for (p, l) in labels.iter().enumerate() {
                if let Some(tag) = l {
                    positions.push((i * len + p) as u32);
                    targets.push(tag.index() as u32);
                }
            }
        }
        let flat = logits.reshape((b * len, c))?;
        let picked = flat.index_select(&Tensor::new(positions.as_slice(), &self.device)?, 0)?;
        let targets = Tensor::new(targets.as_slice(), &self.device)?;
        Ok(candle_nn::loss::cross_entropy(&picked, &targets)?)
    }

    /// Runs every window of every sentence and hands each token's
    /// first-piece position to `take`.
    fn per_token<T>(
        &self,
        sentences: &[TaggedSentence],
        mut take: impl FnMut(&Tensor, &Tensor, usize, usize) -> Result<T>,
    ) -> Result<Vec<Vec<T>>> {
        let plans: Vec<WindowPlan> = sentences.iter().map(|s| self.plan(s)).collect::<Result<_>>()?;
        let all: Vec<(usize, usize)> = plans
            .iter()
            .enumerate()
            .flat_map(|(s, p)| (0..p.windows.len()).map(move |w| (s, w)))
            .collect();
        // outputs[s][w] = (hidden, logits) rows for that window
        let mut outputs: Vec<Vec<Option<(Tensor, Tensor)>>> =
            plans.iter().map(|p| vec![None; p.windows.len()]).collect();
        for chunk in all.chunks(INFER_BATCH) {
            let windows: Vec<&TokenizationAlignment> =
                chunk.iter().map(|&(s, w)| &plans[s].windows[w]).collect();
            let (hidden, logits) = self.forward_windows(&windows, None)?;
            for (i, &(s, w)) in chunk.iter().enumerate() {
                outputs[s][w] = Some((hidden.get(i)?, logits.get(i)?));
            }
        }
        plans
            .iter()
            .zip(&outputs)
            .map(|(plan, outs)| {
                plan.owner
                    .iter()
                    .map(|&(w, k)| {
                        let (h, l) = outs[w].as_ref().expect("window evaluated");
                        let pos = plan.windows[w].token_ranges[k].start;
                        take(h, l, w, pos)
                    })
                    .collect()
            })
            .collect()
    }

    /// Tag per original token: argmax of the head at its first piece.
    pub fn predict(&self, sentences: &[TaggedSentence]) -> Result<Vec<Vec<Tag>>> {
        self.per_token(sentences, |_, logits, _, pos| {
            let row: Vec<f32> = logits.get(pos)?.to_vec1()?;
            let mut best = 0;
            for k in 1..Tag::COUNT {
                if row[k] > row[best] {
                    best = k;
                }
            }
            Ok(Tag::ALL[best])
        })
    }

    /// Final-layer hidden state at each token's first piece.
    pub fn extract_token_embeddings(&self, sentences: &[TaggedSentence]) -> Result<Vec<Vec<Vec<f32>>>> {
        self.per_token(sentences, |hidden, _, _, pos| Ok(hidden.get(pos)?.to_vec1::<f32>()?))
    }

    /// Training windows with their piece labels.
    pub fn training_examples(&self, sentences: &[TaggedSentence]) -> Result<Vec<(TokenizationAlignment, Vec<PieceLabel>)>> {
        let mut out = Vec::new();
        for s in sentences {
            for w in self.plan(s)?.windows {
                let labels = align_labels(s, &w)?;
                out.push((w, labels));
            }
        }
        Ok(out)
    }

    /// Raw head scores per token, for diagnostics.
    pub fn logits(&self, sentence: &TaggedSentence) -> Result<Vec<[f32; Tag::COUNT]>> {
        let rows = self.per_token(std::slice::from_ref(sentence), |_, l, _, pos| {
            let v: Vec<f32> = l.get(pos)?.to_vec1()?;
            Ok([v[0], v[1], v[2]])
        })?;
        Ok(rows.into_iter().next().unwrap_or_default())
    }
}

impl TokenEmbedder for TaggerModel {
    fn token_embeddings(&self, sentences: &[TaggedSentence]) -> Result<Vec<Vec<Vec<f32>>>> {
        self.extract_token_embeddings(sentences)
    }
}
