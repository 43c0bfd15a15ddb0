use super::support::support_entries;
use super::{
    compute_emissions, estimate_transitions, nn_tag, viterbi_decode, SupportSet, TransitionModel,
};
use crate::corpus::{Tag, TaggedSentence};
use crate::error::{Error, Result};

/// Anything that maps sentences to one vector per original token.
pub trait TokenEmbedder {
    fn token_embeddings(&self, sentences: &[TaggedSentence]) -> Result<Vec<Vec<Vec<f32>>>>;
}

impl<T: TokenEmbedder + ?Sized> TokenEmbedder for &T {
    fn token_embeddings(&self, sentences: &[TaggedSentence]) -> Result<Vec<Vec<Vec<f32>>>> {
        (**self).token_embeddings(sentences)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DecodeMode {
    #[default]
    Viterbi,
    /// Plain nearest-neighbour tags, no transition model.
    NearestNeighbor,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StructShotOptions {
    pub mode: DecodeMode,
    pub temperature: f64,
    /// Reject support sets that lack some tag. When false, a missing tag only
    /// receives smoothing mass.
    pub require_coverage: bool,
}

impl Default for StructShotOptions {
    fn default() -> Self {
        StructShotOptions {
            mode: DecodeMode::Viterbi,
            temperature: 1.0,
            require_coverage: true,
        }
    }
}

pub fn structshot_tag<E: TokenEmbedder>(
    embedder: &E,
    support: &[TaggedSentence],
    test: &[TaggedSentence],
    transition_corpus: &[TaggedSentence],
) -> Result<Vec<Vec<Tag>>> {
    structshot_tag_with(embedder, support, test, transition_corpus, StructShotOptions::default())
}

/// Embeds support and test sentences, then tags each test sentence against
/// the support store.
pub fn structshot_tag_with<E: TokenEmbedder>(
    embedder: &E,
    support: &[TaggedSentence],
    test: &[TaggedSentence],
    transition_corpus: &[TaggedSentence],
    opts: StructShotOptions,
) -> Result<Vec<Vec<Tag>>> {
    if test.is_empty() {
        return Ok(Vec::new());
    }
    let support_emb = embedder.token_embeddings(support)?;
    let set = SupportSet::from_entries(support_entries(support, &support_emb)?, opts.require_coverage)?;
    let transitions = match opts.mode {
        DecodeMode::Viterbi => {
            let seqs: Vec<&[Tag]> = transition_corpus.iter().map(|s| s.tags()).collect();
            Some(estimate_transitions(&seqs)?)
        }
        DecodeMode::NearestNeighbor => None,
    };
    let test_emb = embedder.token_embeddings(test)?;
    if test_emb.len() != test.len() {
        return Err(Error::domain("embedder returned the wrong number of sentences"));
    }
    decode_embedded(&set, &test_emb, transitions.as_ref(), opts)
}

/// Tags already-embedded test sentences. `transitions` is required for
/// [`DecodeMode::Viterbi`].
pub fn decode_embedded(
    support: &SupportSet,
    test_embeddings: &[Vec<Vec<f32>>],
    transitions: Option<&TransitionModel>,
    opts: StructShotOptions,
) -> Result<Vec<Vec<Tag>>> {
    test_embeddings
        .iter()
        .map(|tokens| match opts.mode {
            DecodeMode::NearestNeighbor => tokens
                .iter()
                .map(|q| nn_tag(q, support).map(|(t, _)| t))
                .collect(),
            DecodeMode::Viterbi => {
                let t = transitions
                    .ok_or_else(|| Error::domain("Viterbi decoding needs a transition model"))?;
                let emissions = compute_emissions(tokens, support, opts.temperature)?;
                viterbi_decode(&emissions, t)
            }
        })
        .collect()
}
