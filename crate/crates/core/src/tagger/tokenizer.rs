use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use tokenizers::models::bpe::BPE;
use tokenizers::models::wordpiece::WordPiece;
use tokenizers::pre_tokenizers::bert::BertPreTokenizer;
use tokenizers::pre_tokenizers::whitespace::WhitespaceSplit;
use tokenizers::{ModelWrapper, Tokenizer};

use crate::corpus::TaggedSentence;
use crate::error::{Error, Result};

/// Ids of the pieces framing and padding a sequence.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SpecialIds {
    pub cls: u32,
    pub sep: u32,
    pub pad: u32,
    pub unk: u32,
}

/// Subword tokenizer applied one original token at a time, so every token
/// maps to its own contiguous run of pieces.
#[derive(Clone)]
pub struct SubwordTokenizer {
    inner: Tokenizer,
    special: SpecialIds,
    /// Prepended to each word before encoding (a space for byte-level BPE,
    /// which marks word starts with it).
    word_prefix: &'static str,
}

impl std::fmt::Debug for SubwordTokenizer {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SubwordTokenizer")
            .field("vocab_size", &self.vocab_size())
            .field("special", &self.special)
            .finish()
    }
}

const SPECIAL_CANDIDATES: [[&str; 4]; 2] = [
    ["[CLS]", "[SEP]", "[PAD]", "[UNK]"],
    ["<s>", "</s>", "<pad>", "<unk>"],
];

impl SubwordTokenizer {
    pub fn from_tokenizer(inner: Tokenizer) -> Result<Self> {
        let special = SPECIAL_CANDIDATES
            .iter()
            .find_map(|names| {
                let ids: Vec<u32> = names.iter().filter_map(|n| inner.token_to_id(n)).collect();
                (ids.len() == 4).then(|| SpecialIds {
                    cls: ids[0],
                    sep: ids[1],
                    pad: ids[2],
                    unk: ids[3],
                })
            })
            .ok_or_else(|| Error::Tokenizer("vocabulary lacks CLS/SEP/PAD/UNK pieces".into()))?;
        let word_prefix = match inner.get_model() {
            ModelWrapper::BPE(_) => " ",
            _ => "",
        };
        Ok(SubwordTokenizer {
            inner,
            special,
            word_prefix,
        })
    }

    /// Loads `tokenizer.json`, or builds a cased WordPiece tokenizer from
    /// `vocab.txt`, found in `dir`.
    pub fn from_dir(dir: &Path) -> Result<Self> {
        let json = dir.join("tokenizer.json");
        if json.is_file() {
            return Self::from_tokenizer(Tokenizer::from_file(&json)?);
        }
        let vocab = dir.join("vocab.txt");
        if vocab.is_file() {
            let wp = WordPiece::from_file(&vocab.to_string_lossy())
                .unk_token("[UNK]".into())
                .build()?;
            let mut t = Tokenizer::new(wp);
            t.with_pre_tokenizer(Some(BertPreTokenizer));
            return Self::from_tokenizer(t);
        }
        Err(Error::Config(format!(
            "{} has neither tokenizer.json nor vocab.txt",
            dir.display()
        )))
    }

    /// Cased WordPiece vocabulary learnt from a corpus: special pieces, every
    /// character (word-initial and `##` continuation), then whole words by
    /// descending frequency until `max_vocab` is reached.
    pub fn build_wordpiece<'a>(
        sentences: impl IntoIterator<Item = &'a TaggedSentence>,
        max_vocab: usize,
    ) -> Result<Self> {
        let mut words: BTreeMap<&str, usize> = BTreeMap::new();
        for s in sentences {
            for t in s.tokens() {
                *words.entry(t.as_str()).or_default() += 1;
            }
        }
        let mut vocab: Vec<String> = SPECIAL_CANDIDATES[0].iter().map(|s| s.to_string()).collect();
        let mut chars: Vec<char> = words.keys().flat_map(|w| w.chars()).collect();
        chars.sort_unstable();
        chars.dedup();
        for c in &chars {
            vocab.push(c.to_string());
        }
        for c in &chars {
            vocab.push(format!("##{c}"));
        }
        let mut by_freq: Vec<(&str, usize)> = words.into_iter().filter(|(w, _)| w.chars().count() > 1).collect();
        by_freq.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
        for (w, _) in by_freq {
            if vocab.len() >= max_vocab {
                break;
            }
            vocab.push(w.to_string());
        }
        Self::from_vocab(&vocab)
    }

    /// WordPiece tokenizer over an explicit vocabulary (ids in list order).
    /// The list must contain `[CLS]`, `[SEP]`, `[PAD]` and `[UNK]`.
    pub fn from_vocab(vocab: &[String]) -> Result<Self> {
        let map: HashMap<String, u32> = vocab
            .iter()
            .enumerate()
            .map(|(i, w)| (w.clone(), i as u32))
            .collect();
        if map.len() != vocab.len() {
            return Err(Error::Tokenizer("vocabulary has duplicate entries".into()));
        }
        let wp = WordPiece::builder()
            .vocab(map.into_iter().collect::<ahash::AHashMap<_, _>>())
            .unk_token("[UNK]".into())
            .continuing_subword_prefix("##".into())
            .max_input_chars_per_word(100)
            .build()?;
        let mut t = Tokenizer::new(wp);
        t.with_pre_tokenizer(Some(WhitespaceSplit));
        Self::from_tokenizer(t)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.inner.save(path, false)?;
        Ok(())
    }

    pub fn special(&self) -> SpecialIds {
        self.special
    }

    pub fn vocab_size(&self) -> usize {
        self.inner.get_vocab_size(true)
    }

    pub fn is_bpe(&self) -> bool {
        matches!(self.inner.get_model(), ModelWrapper::BPE(BPE { .. }))
    }

    /// Pieces of one original token; never empty (falls back to UNK).
    pub fn word_pieces(&self, word: &str) -> Result<Vec<u32>> {
        let input = format!("{}{word}", self.word_prefix);
        let enc = self.inner.encode(input.as_str(), false)?;
        let ids = enc.get_ids();
        if ids.is_empty() {
            Ok(vec![self.special.unk])
        } else {
            Ok(ids.to_vec())
        }
    }

    pub fn piece_strings(&self, word: &str) -> Result<Vec<String>> {
        let input = format!("{}{word}", self.word_prefix);
        Ok(self.inner.encode(input.as_str(), false)?.get_tokens().to_vec())
    }

    /// Pieces for every token of a sentence.
    pub fn sentence_pieces(&self, tokens: &[String]) -> Result<Vec<Vec<u32>>> {
        tokens.iter().map(|t| self.word_pieces(t)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Tag;

    fn vocab(words: &[&str]) -> Vec<String> {
        let mut v: Vec<String> = SPECIAL_CANDIDATES[0].iter().map(|s| s.to_string()).collect();
        v.extend(words.iter().map(|w| w.to_string()));
        v
    }

    #[test]
    fn splits_into_known_pieces() {
        let t = SubwordTokenizer::from_vocab(&vocab(&["Net", "##Link", "kernel"])).unwrap();
        assert_eq!(t.piece_strings("NetLink").unwrap(), ["Net", "##Link"]);
        assert_eq!(t.word_pieces("kernel").unwrap(), [6]);
        assert_eq!(t.word_pieces("zzz").unwrap(), [t.special().unk]);
        assert_eq!(
            t.special(),
            SpecialIds {
                cls: 0,
                sep: 1,
                pad: 2,
                unk: 3
            }
        );
    }

    #[test]
    fn learnt_vocabulary_covers_training_tokens() {
        let s = TaggedSentence::from_pairs([("Apache", Tag::SN), ("2.4.1", Tag::SV), ("in", Tag::O)])
            .unwrap();
        let t = SubwordTokenizer::build_wordpiece([&s], 1000).unwrap();
        for w in ["Apache", "2.4.1", "in"] {
            assert_eq!(t.word_pieces(w).unwrap().len(), 1, "{w}");
        }
        // unseen word decomposes into characters
        assert_eq!(t.piece_strings("ache").unwrap(), ["a", "##c", "##h", "##e"]);
        // casing preserved
        assert_ne!(t.word_pieces("apache").unwrap(), t.word_pieces("Apache").unwrap());
    }

    #[test]
    fn save_and_reload() {
        let dir = tempfile::tempdir().unwrap();
        let t = SubwordTokenizer::from_vocab(&vocab(&["Net", "##Link"])).unwrap();
        t.save(&dir.path().join("tokenizer.json")).unwrap();
        let back = SubwordTokenizer::from_dir(dir.path()).unwrap();
        assert_eq!(back.word_pieces("NetLink").unwrap(), t.word_pieces("NetLink").unwrap());
        assert!(SubwordTokenizer::from_dir(Path::new("/nonexistent")).is_err());
    }
}
