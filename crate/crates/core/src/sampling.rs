//! Seeded few-sample subsets of a training split.
//!
//! Every draw uses ChaCha8 seeded from a `u64` with a fixed stream per
//! purpose, and the index selection is a partial Fisher-Yates shuffle with
//! rejection-sampled bounded integers. Nothing depends on `rand`'s
//! version-specific sampling helpers, so a given (input order, size, seed)
//! produces the same subset on every platform.

use std::collections::{BTreeMap, HashSet};

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::{serialize_conll, Category, Split, TaggedSentence};
use crate::error::{Error, Result};

pub const DEFAULT_SEED: u64 = 42;
pub const GENERATOR: &str = "chacha8/partial-fisher-yates/v1";
pub const VALIDATION_FRACTION: f64 = 0.10;

const STREAM_TRAIN: u64 = 0;
const STREAM_VALID: u64 = 1;
const STREAM_CARVE: u64 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", content = "value", rename_all = "lowercase")]
pub enum SampleSize {
    Proportion(f64),
    Count(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplingSpec {
    pub size: SampleSize,
    pub seed: u64,
}

impl SamplingSpec {
    pub fn proportion(p: f64, seed: u64) -> Self {
        SamplingSpec {
            size: SampleSize::Proportion(p),
            seed,
        }
    }

    pub fn count(k: usize, seed: u64) -> Self {
        SamplingSpec {
            size: SampleSize::Count(k),
            seed,
        }
    }

    /// Number of sentences drawn from a population of `n`.
    pub fn resolve(&self, n: usize) -> Result<usize> {
        match self.size {
            SampleSize::Proportion(p) => proportion_size(n, p),
            SampleSize::Count(k) => {
                if k == 0 || k > n {
                    Err(Error::domain(format!(
                        "cannot sample {k} sentences from a population of {n}"
                    )))
                } else {
                    Ok(k)
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub spec: SamplingSpec,
    pub source: Vec<(Category, Split)>,
    pub generator: String,
    /// SHA-256 of the source list rendered as CoNLL.
    pub source_sha256: String,
    pub train_indices: Vec<usize>,
    pub valid_indices: Vec<usize>,
}

/// A sampled training set and its validation set, drawn from one source list.
#[derive(Debug, Clone, PartialEq)]
pub struct FewSampleSplit {
    pub train: Vec<TaggedSentence>,
    pub valid: Vec<TaggedSentence>,
    pub provenance: Provenance,
}

fn rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}

/// Uniform integer in `0..bound` by rejection on the top of the `u64` range.
fn below(rng: &mut ChaCha8Rng, bound: usize) -> usize {
    debug_assert!(bound > 0);
    let bound = bound as u64;
    let zone = u64::MAX - (u64::MAX % bound) - 1;
    loop {
        let v = rng.next_u64();
        if v <= zone {
            return (v % bound) as usize;
        }
    }
}

/// `k` distinct positions of `population`, sorted ascending.
fn choose(population: &[usize], k: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut pool = population.to_vec();
    for i in 0..k {
        let j = i + below(rng, pool.len() - i);
        pool.swap(i, j);
    }
    pool.truncate(k);
    pool.sort_unstable();
    pool
}

pub fn round_half_up(x: f64) -> usize {
    // tolerance absorbs products like 0.15 * 10 landing just below .5
    (x + 0.5 + 1e-9).floor() as usize
}

fn proportion_size(n: usize, p: f64) -> Result<usize> {
    if !(p > 0.0 && p <= 1.0) {
        return Err(Error::domain(format!("proportion {p} outside (0, 1]")));
    }
    let k = round_half_up(p * n as f64).min(n);
    if k == 0 {
        return Err(Error::domain(format!(
            "proportion {p} of {n} sentences rounds to an empty sample"
        )));
    }
    Ok(k)
}

fn pick(sentences: &[TaggedSentence], idx: &[usize]) -> Vec<TaggedSentence> {
    idx.iter().map(|&i| sentences[i].clone()).collect()
}

/// Indices of a uniform subset of size `round_half_up(p * n)`.
pub fn sample_proportion_indices(n: usize, p: f64, seed: u64) -> Result<Vec<usize>> {
    let k = proportion_size(n, p)?;
    let all: Vec<usize> = (0..n).collect();
    Ok(choose(&all, k, &mut rng(seed, STREAM_TRAIN)))
}

pub fn sample_count_indices(n: usize, k: usize, seed: u64) -> Result<Vec<usize>> {
    SamplingSpec::count(k, seed).resolve(n)?;
    let all: Vec<usize> = (0..n).collect();
    Ok(choose(&all, k, &mut rng(seed, STREAM_TRAIN)))
}

/// Uniform subset of `round_half_up(p * n)` sentences in source order.
pub fn sample_proportion(
    sentences: &[TaggedSentence],
    p: f64,
    seed: u64,
) -> Result<Vec<TaggedSentence>> {
    if sentences.is_empty() {
        return Err(Error::domain("cannot sample from an empty list"));
    }
    Ok(pick(sentences, &sample_proportion_indices(sentences.len(), p, seed)?))
}

/// Uniform subset of exactly `k` sentences in source order.
pub fn sample_count(sentences: &[TaggedSentence], k: usize, seed: u64) -> Result<Vec<TaggedSentence>> {
    Ok(pick(sentences, &sample_count_indices(sentences.len(), k, seed)?))
}

/// [`sample_count`] with the category named in the error.
pub fn sample_count_for(
    category: Category,
    sentences: &[TaggedSentence],
    k: usize,
    seed: u64,
) -> Result<Vec<TaggedSentence>> {
    sample_count(sentences, k, seed).map_err(|e| Error::domain(format!("{category}: {e}")))
}

/// Concatenates the per-category subsets in category-name order.
pub fn build_aggregate(subsets: &BTreeMap<Category, Vec<TaggedSentence>>) -> Result<Vec<TaggedSentence>> {
    if subsets.contains_key(&Category::Memc) {
        return Err(Error::domain(
            "memc is the fine-tuning source and cannot be part of a transfer aggregate",
        ));
    }
    let mut keys: Vec<&Category> = subsets.keys().collect();
    keys.sort_by_key(|c| c.name());
    Ok(keys.into_iter().flat_map(|c| subsets[c].iter().cloned()).collect())
}

/// Splits `train` into (remaining train, validation) with
/// `round_half_up(fraction * n)` validation sentences. Both halves keep
/// source order.
pub fn carve_validation(
    train: &[TaggedSentence],
    fraction: f64,
    seed: u64,
) -> Result<(Vec<TaggedSentence>, Vec<TaggedSentence>)> {
    let (rest, valid) = carve_validation_indices(train.len(), fraction, seed)?;
    Ok((pick(train, &rest), pick(train, &valid)))
}

pub fn carve_validation_indices(
    n: usize,
    fraction: f64,
    seed: u64,
) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::domain(format!("validation fraction {fraction} outside (0, 1)")));
    }
    if n < 10 {
        return Err(Error::domain(format!(
            "need at least 10 training sentences to carve a validation split, got {n}"
        )));
    }
    let k = round_half_up(fraction * n as f64);
    let all: Vec<usize> = (0..n).collect();
    let valid = choose(&all, k, &mut rng(seed, STREAM_CARVE));
    let taken: HashSet<usize> = valid.iter().copied().collect();
    let rest = all.into_iter().filter(|i| !taken.contains(i)).collect();
    Ok((rest, valid))
}

/// Validation size for a sampled training set: as large as the training set,
/// capped at `floor(0.10 * full_train)`.
pub fn fewsample_validation_size(full_train: usize, train_subset: usize) -> usize {
    let cap = (VALIDATION_FRACTION * full_train as f64 + 1e-9).floor() as usize;
    train_subset.min(cap)
}

/// Draws validation indices from the part of `full_train` not used by
/// `train_indices`.
pub fn build_fewsample_validation(
    full_train_len: usize,
    train_indices: &[usize],
    seed: u64,
) -> Result<Vec<usize>> {
    let used: HashSet<usize> = train_indices.iter().copied().collect();
    if used.iter().any(|&i| i >= full_train_len) {
        return Err(Error::domain("training subset is not drawn from the full training list"));
    }
    let size = fewsample_validation_size(full_train_len, used.len());
    let remaining: Vec<usize> = (0..full_train_len).filter(|i| !used.contains(i)).collect();
    if remaining.len() < size {
        return Err(Error::domain(format!(
            "validation set of {size} needs more than the {} remaining sentences",
            remaining.len()
        )));
    }
    Ok(choose(&remaining, size, &mut rng(seed, STREAM_VALID)))
}

/// SHA-256 hex digest of a sentence list in CoNLL form.
pub fn content_hash(sentences: &[TaggedSentence]) -> String {
    hex::encode(Sha256::digest(serialize_conll(sentences).as_bytes()))
}

/// Samples a training subset of `full_train` by `spec` and pairs it with a
/// disjoint validation subset.
pub fn build_fewsample_split(
    full_train: &[TaggedSentence],
    spec: SamplingSpec,
    source: Vec<(Category, Split)>,
) -> Result<FewSampleSplit> {
    if full_train.is_empty() {
        return Err(Error::domain("cannot sample from an empty list"));
    }
    let train_indices = match spec.size {
        SampleSize::Proportion(p) => sample_proportion_indices(full_train.len(), p, spec.seed)?,
        SampleSize::Count(k) => sample_count_indices(full_train.len(), k, spec.seed)?,
    };
    let valid_indices = build_fewsample_validation(full_train.len(), &train_indices, spec.seed)?;
    Ok(FewSampleSplit {
        train: pick(full_train, &train_indices),
        valid: pick(full_train, &valid_indices),
        provenance: Provenance {
            spec,
            source,
            generator: GENERATOR.to_string(),
            source_sha256: content_hash(full_train),
            train_indices,
            valid_indices,
        },
    })
}
