use serde::{Deserialize, Serialize};

use super::{Tag, TaggedSentence};

/// Half-open token range `[start, end)` covered by one entity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Span {
    pub start: usize,
    pub end: usize,
    pub tag: Tag,
}

impl Span {
    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end == self.start
    }
}

/// Maximal runs of identical non-`O` tags, in order.
pub fn extract_spans(sentence: &TaggedSentence) -> Vec<Span> {
    spans_of(sentence.tags())
}

pub(crate) fn spans_of(tags: &[Tag]) -> Vec<Span> {
    let mut spans = Vec::new();
    let mut i = 0;
    while i < tags.len() {
        let tag = tags[i];
        let start = i;
        while i < tags.len() && tags[i] == tag {
            i += 1;
        }
        if tag.is_entity() {
            spans.push(Span { start, end: i, tag });
        }
    }
    spans
}
