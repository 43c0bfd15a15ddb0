//! Tagged sentences, the vulnerability-report category layout, and corpus I/O.
//!
//! The tag set is flat: `SN` (software name), `SV` (software version) and
//! `O`. There are no boundary markers, so an entity is a maximal run of
//! identical non-`O` tags (see [`extract_spans`]).

mod conll;
mod loader;
pub(crate) mod spans;
mod stats;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use conll::{parse_conll, parse_conll_with, serialize_conll, Delimiter};
pub use loader::load_viem_dataset;
pub use spans::{extract_spans, Span};
pub use stats::{
    compute_statistics, pooled_nononly_proportion, render_stats_csv, render_stats_text,
    stats_table, CorpusStats, PoolRule, StatsRow,
};

/// Tag assigned to a single token. The discriminant order (`SN`, `SV`, `O`)
/// is the tag index used by every score table and tie-break in the crate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Tag {
    SN,
    SV,
    O,
}

impl Tag {
    pub const ALL: [Tag; 3] = [Tag::SN, Tag::SV, Tag::O];
    pub const ENTITIES: [Tag; 2] = [Tag::SN, Tag::SV];
    pub const COUNT: usize = 3;

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Tag> {
        Tag::ALL.get(i).copied()
    }

    pub fn is_entity(self) -> bool {
        self != Tag::O
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Tag::SN => "SN",
            Tag::SV => "SV",
            Tag::O => "O",
        }
    }
}

impl fmt::Display for Tag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Tag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "SN" => Ok(Tag::SN),
            "SV" => Ok(Tag::SV),
            "O" => Ok(Tag::O),
            other => Err(Error::UnknownTag {
                line: 0,
                tag: other.to_string(),
            }),
        }
    }
}

/// A tokenized sentence with one tag per token.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TaggedSentence {
    tokens: Vec<String>,
    tags: Vec<Tag>,
    source_id: Option<String>,
}

impl TaggedSentence {
    /// Builds a sentence, checking that it is non-empty, that tokens and tags
    /// line up, and that no token is empty or contains whitespace.
    pub fn new(tokens: Vec<String>, tags: Vec<Tag>) -> Result<Self> {
        if tokens.is_empty() {
            return Err(Error::domain("sentence has no tokens"));
        }
        if tokens.len() != tags.len() {
            return Err(Error::domain(format!(
                "{} tokens but {} tags",
                tokens.len(),
                tags.len()
            )));
        }
        for (i, tok) in tokens.iter().enumerate() {
            if tok.is_empty() || tok.chars().any(char::is_whitespace) {
                return Err(Error::domain(format!(
                    "token {i} ({tok:?}) is empty or contains whitespace"
                )));
            }
        }
        Ok(TaggedSentence {
            tokens,
            tags,
            source_id: None,
        })
    }

    /// Convenience constructor from string slices.
    pub fn from_pairs<'a>(pairs: impl IntoIterator<Item = (&'a str, Tag)>) -> Result<Self> {
        let (tokens, tags): (Vec<String>, Vec<Tag>) =
            pairs.into_iter().map(|(t, g)| (t.to_string(), g)).unzip();
        Self::new(tokens, tags)
    }

    pub fn with_source_id(mut self, id: impl Into<String>) -> Self {
        self.source_id = Some(id.into());
        self
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn tags(&self) -> &[Tag] {
        &self.tags
    }

    pub fn source_id(&self) -> Option<&str> {
        self.source_id.as_deref()
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn has_entity(&self) -> bool {
        self.tags.iter().any(|t| t.is_entity())
    }

    /// Same tokens with a different tag sequence.
    pub fn retagged(&self, tags: Vec<Tag>) -> Result<Self> {
        let mut s = Self::new(self.tokens.clone(), tags)?;
        s.source_id = self.source_id.clone();
        Ok(s)
    }
}

/// The thirteen vulnerability categories of the corpus.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Category {
    Memc,
    Bypass,
    Csrf,
    Dirtra,
    Dos,
    Execution,
    Fileinc,
    Gainpre,
    Httprs,
    Infor,
    Overflow,
    Sqli,
    Xss,
}

impl Category {
    pub const ALL: [Category; 13] = [
        Category::Memc,
        Category::Bypass,
        Category::Csrf,
        Category::Dirtra,
        Category::Dos,
        Category::Execution,
        Category::Fileinc,
        Category::Gainpre,
        Category::Httprs,
        Category::Infor,
        Category::Overflow,
        Category::Sqli,
        Category::Xss,
    ];

    /// The twelve categories used as transfer targets (everything but `memc`),
    /// in name order.
    pub const TRANSFER_TARGETS: [Category; 12] = [
        Category::Bypass,
        Category::Csrf,
        Category::Dirtra,
        Category::Dos,
        Category::Execution,
        Category::Fileinc,
        Category::Gainpre,
        Category::Httprs,
        Category::Infor,
        Category::Overflow,
        Category::Sqli,
        Category::Xss,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Category::Memc => "memc",
            Category::Bypass => "bypass",
            Category::Csrf => "csrf",
            Category::Dirtra => "dirtra",
            Category::Dos => "dos",
            Category::Execution => "execution",
            Category::Fileinc => "fileinc",
            Category::Gainpre => "gainpre",
            Category::Httprs => "httprs",
            Category::Infor => "infor",
            Category::Overflow => "overflow",
            Category::Sqli => "sqli",
            Category::Xss => "xss",
        }
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Category {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Category::ALL
            .iter()
            .copied()
            .find(|c| c.name() == s)
            .ok_or_else(|| Error::domain(format!("unknown category {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Valid,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Valid, Split::Test];

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Valid => "valid",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Split::ALL
            .iter()
            .copied()
            .find(|c| c.name() == s)
            .ok_or_else(|| Error::domain(format!("unknown split {s:?}")))
    }
}

/// All loaded (category, split) lists. Sentence order within a list is file order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Corpus {
    entries: BTreeMap<(Category, Split), Vec<TaggedSentence>>,
}

impl Corpus {
    pub fn new() -> Self {
        Self::default()
    }

    /// Inserts a split. A key may only be inserted once.
    pub fn insert(
        &mut self,
        category: Category,
        split: Split,
        sentences: Vec<TaggedSentence>,
    ) -> Result<()> {
        if self.entries.contains_key(&(category, split)) {
            return Err(Error::domain(format!("duplicate split {category}/{split}")));
        }
        self.entries.insert((category, split), sentences);
        Ok(())
    }

    pub fn get(&self, category: Category, split: Split) -> Option<&[TaggedSentence]> {
        self.entries.get(&(category, split)).map(Vec::as_slice)
    }

    /// Like [`Corpus::get`] but an absent split is an error.
    pub fn require(&self, category: Category, split: Split) -> Result<&[TaggedSentence]> {
        self.get(category, split)
            .ok_or_else(|| Error::domain(format!("corpus has no {category}/{split} split")))
    }

    pub fn contains(&self, category: Category, split: Split) -> bool {
        self.entries.contains_key(&(category, split))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = ((Category, Split), &[TaggedSentence])> {
        self.entries.iter().map(|(k, v)| (*k, v.as_slice()))
    }
}
