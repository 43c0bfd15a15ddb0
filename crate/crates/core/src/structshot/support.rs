use serde::{Deserialize, Serialize};

use crate::corpus::{Tag, TaggedSentence};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupportEntry {
    /// L2-normalised embedding.
    pub embedding: Vec<f32>,
    pub tag: Tag,
    pub sentence_id: String,
    pub token_index: usize,
}

/// Labelled token embeddings. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct SupportSet {
    dim: usize,
    entries: Vec<SupportEntry>,
}

pub(crate) fn normalize(v: &[f32]) -> Vec<f32> {
    let norm = v.iter().map(|&x| (x as f64) * (x as f64)).sum::<f64>().sqrt();
    if norm == 0.0 {
        return v.to_vec();
    }
    v.iter().map(|&x| (x as f64 / norm) as f32).collect()
}

/// Squared Euclidean distance, accumulated in `f64`.
pub fn squared_distance(a: &[f32], b: &[f32]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| {
            let d = x as f64 - y as f64;
            d * d
        })
        .sum()
}

impl SupportSet {
    /// Builds a store from raw (unnormalised) entries. With
    /// `require_coverage`, every tag must appear at least once.
    pub fn from_entries(entries: Vec<SupportEntry>, require_coverage: bool) -> Result<Self> {
        let dim = entries
            .first()
            .map(|e| e.embedding.len())
            .ok_or_else(|| Error::domain("support set is empty"))?;
        if dim == 0 {
            return Err(Error::domain("support embeddings have dimension 0"));
        }
        let mut out = Vec::with_capacity(entries.len());
        for mut e in entries {
            if e.embedding.len() != dim {
                return Err(Error::domain(format!(
                    "support embedding of dimension {} in a set of dimension {dim}",
                    e.embedding.len()
                )));
            }
            e.embedding = normalize(&e.embedding);
            out.push(e);
        }
        let set = SupportSet { dim, entries: out };
        if require_coverage {
            if let Some(tag) = set.missing_tags().first() {
                return Err(Error::domain(format!("support set has no {tag} token")));
            }
        }
        Ok(set)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn entries(&self) -> &[SupportEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn missing_tags(&self) -> Vec<Tag> {
        Tag::ALL
            .into_iter()
            .filter(|t| !self.entries.iter().any(|e| e.tag == *t))
            .collect()
    }

    pub(crate) fn check_query(&self, query: &[f32]) -> Result<()> {
        if query.len() != self.dim {
            return Err(Error::domain(format!(
                "query of dimension {} against a support set of dimension {}",
                query.len(),
                self.dim
            )));
        }
        Ok(())
    }

    /// Minimum squared distance from a normalised query to each tag's
    /// entries; `None` for tags without entries.
    pub(crate) fn min_distance_per_tag(&self, normalized_query: &[f32]) -> [Option<f64>; Tag::COUNT] {
        let mut best = [None; Tag::COUNT];
        for e in &self.entries {
            let d = squared_distance(normalized_query, &e.embedding);
            let slot = &mut best[e.tag.index()];
            if slot.map_or(true, |b| d < b) {
                *slot = Some(d);
            }
        }
        best
    }
}

/// One entry per token of `sentences`, labelled with its gold tag.
///
/// `embeddings[i][j]` is the vector of token `j` of sentence `i`.
pub fn build_support_set(
    sentences: &[TaggedSentence],
    embeddings: &[Vec<Vec<f32>>],
) -> Result<SupportSet> {
    SupportSet::from_entries(support_entries(sentences, embeddings)?, true)
}

pub fn support_entries(
    sentences: &[TaggedSentence],
    embeddings: &[Vec<Vec<f32>>],
) -> Result<Vec<SupportEntry>> {
    if sentences.len() != embeddings.len() {
        return Err(Error::domain(format!(
            "{} support sentences but {} embedding sequences",
            sentences.len(),
            embeddings.len()
        )));
    }
    let mut entries = Vec::new();
    for (i, (s, emb)) in sentences.iter().zip(embeddings).enumerate() {
        if s.len() != emb.len() {
            return Err(Error::domain(format!(
                "support sentence {i} has {} tokens but {} embeddings",
                s.len(),
                emb.len()
            )));
        }
        let id = sentence_id(s, i);
        for (j, (tag, v)) in s.tags().iter().zip(emb).enumerate() {
            entries.push(SupportEntry {
                embedding: v.clone(),
                tag: *tag,
                sentence_id: id.clone(),
                token_index: j,
            });
        }
    }
    Ok(entries)
}

pub fn sentence_id(s: &TaggedSentence, index: usize) -> String {
    s.source_id()
        .map(str::to_string)
        .unwrap_or_else(|| format!("s{index}"))
}

/// Tag of the nearest support entry and its squared distance. Ties go to
/// the lowest entry index.
pub fn nn_tag(query: &[f32], support: &SupportSet) -> Result<(Tag, f64)> {
    support.check_query(query)?;
    let q = normalize(query);
    let mut best: Option<(Tag, f64)> = None;
    for e in &support.entries {
        let d = squared_distance(&q, &e.embedding);
        if best.map_or(true, |(_, b)| d < b) {
            best = Some((e.tag, d));
        }
    }
    best.ok_or_else(|| Error::domain("support set is empty"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use Tag::*;

    fn entry(v: &[f32], tag: Tag) -> SupportEntry {
        SupportEntry {
            embedding: v.to_vec(),
            tag,
            sentence_id: "s0".into(),
            token_index: 0,
        }
    }

    #[test]
    fn one_entry_per_token() {
        let s = TaggedSentence::from_pairs([("Adobe", SN), ("Reader", SN), ("9.1", SV), ("x", O)])
            .unwrap();
        let emb = vec![vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![1.0, 1.0], vec![2.0, 0.5]]];
        let set = build_support_set(&[s.clone()], &emb).unwrap();
        assert_eq!(set.len(), 4);
        assert_eq!(set.dim(), 2);
        let n = &set.entries()[2].embedding;
        assert!((n[0] - std::f32::consts::FRAC_1_SQRT_2).abs() < 1e-6);
    }

    #[test]
    fn coverage_is_required() {
        let s = TaggedSentence::from_pairs([("Adobe", SN), ("x", O)]).unwrap();
        let err = build_support_set(&[s], &[vec![vec![1.0], vec![2.0]]]).unwrap_err();
        assert!(err.to_string().contains("SV"), "{err}");
    }

    #[test]
    fn dimension_and_shape_errors() {
        assert!(SupportSet::from_entries(vec![entry(&[1.0], O), entry(&[1.0, 2.0], SN)], false).is_err());
        let set = SupportSet::from_entries(vec![entry(&[1.0, 0.0], O)], false).unwrap();
        assert!(nn_tag(&[1.0], &set).is_err());
        let s = TaggedSentence::from_pairs([("x", O)]).unwrap();
        assert!(build_support_set(&[s], &[vec![]]).is_err());
    }

    #[test]
    fn nearest_entry_wins() {
        let set = SupportSet::from_entries(
            vec![entry(&[1.0, 0.0], SN), entry(&[0.0, 1.0], SV), entry(&[1.0, 0.0], O)],
            false,
        )
        .unwrap();
        let (tag, d) = nn_tag(&[3.0, 0.0], &set).unwrap();
        assert_eq!(tag, SN); // tie with the O entry, lower index wins
        assert_eq!(d, 0.0);
        assert_eq!(nn_tag(&[0.1, 0.9], &set).unwrap().0, SV);
    }
}
