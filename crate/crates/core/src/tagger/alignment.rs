//! Mapping between original tokens and subword pieces, including the
//! sliding windows used for sentences longer than the encoder budget.

use std::ops::Range;

use super::tokenizer::SpecialIds;
use crate::corpus::{Tag, TaggedSentence};
use crate::error::{Error, Result};

/// Label of one piece: the token's tag on its first piece, `None` (ignored
/// by loss and evaluation) everywhere else.
pub type PieceLabel = Option<Tag>;

/// One encoder input: `[CLS] pieces... [SEP]` for a contiguous run of tokens.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenizationAlignment {
    pub piece_ids: Vec<u32>,
    /// Piece positions (within `piece_ids`) of each covered token.
    pub token_ranges: Vec<Range<usize>>,
    pub special_positions: Vec<usize>,
    /// Index in the sentence of the first covered token.
    pub first_token: usize,
    /// Token count of the whole sentence the window was cut from.
    pub sentence_len: usize,
}

impl TokenizationAlignment {
    pub fn len(&self) -> usize {
        self.piece_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.piece_ids.is_empty()
    }

    pub fn covered_tokens(&self) -> Range<usize> {
        self.first_token..self.first_token + self.token_ranges.len()
    }
}

/// All windows of a sentence plus, for each token, the window that predicts
/// it: `owner[t] = (window, index within window)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WindowPlan {
    pub windows: Vec<TokenizationAlignment>,
    pub owner: Vec<(usize, usize)>,
}

/// Cuts a sentence (given as per-token piece ids) into windows of at most
/// `max_len` pieces including the two specials.
///
/// Windows start and end on whole tokens and advance by about half the
/// budget. A token longer than the whole budget keeps only its leading
/// pieces. Each token is owned by the window where its first piece sits
/// farthest from either edge (earliest window on ties).
pub fn plan_windows(pieces: &[Vec<u32>], special: SpecialIds, max_len: usize) -> Result<WindowPlan> {
    if max_len < 3 {
        return Err(Error::domain(format!("encoder length budget {max_len} is below 3")));
    }
    if pieces.iter().any(Vec::is_empty) {
        return Err(Error::domain("every token needs at least one piece"));
    }
    let budget = max_len - 2;
    let n = pieces.len();
    let lens: Vec<usize> = pieces.iter().map(|p| p.len().min(budget)).collect();
    let mut offsets = Vec::with_capacity(n + 1);
    offsets.push(0);
    for l in &lens {
        offsets.push(offsets.last().unwrap() + l);
    }

    let mut spans: Vec<(usize, usize)> = Vec::new();
    let mut start = 0;
    loop {
        let mut end = start;
        while end < n && offsets[end + 1] - offsets[start] <= budget {
            end += 1;
        }
        spans.push((start, end));
        if end >= n {
            break;
        }
        let stride = (budget / 2).max(1);
        start = (start + 1..=end)
            .find(|&i| offsets[i] - offsets[start] >= stride)
            .unwrap_or(end);
    }

    let windows: Vec<TokenizationAlignment> = spans
        .iter()
        .map(|&(s, e)| {
            let mut ids = vec![special.cls];
            let mut ranges = Vec::with_capacity(e - s);
            for t in s..e {
                let from = ids.len();
                ids.extend_from_slice(&pieces[t][..lens[t]]);
                ranges.push(from..ids.len());
            }
            ids.push(special.sep);
            let last = ids.len() - 1;
            TokenizationAlignment {
                piece_ids: ids,
                token_ranges: ranges,
                special_positions: vec![0, last],
                first_token: s,
                sentence_len: n,
            }
        })
        .collect();

    let mut owner = vec![(usize::MAX, 0); n];
    let mut best_centrality = vec![0usize; n];
    for (w, win) in windows.iter().enumerate() {
        let inner = win.len() - 2;
        for (k, range) in win.token_ranges.iter().enumerate() {
            let t = win.first_token + k;
            let p = range.start - 1;
            let centrality = p.min(inner - 1 - p);
            if owner[t].0 == usize::MAX || centrality > best_centrality[t] {
                owner[t] = (w, k);
                best_centrality[t] = centrality;
            }
        }
    }
    Ok(WindowPlan { windows, owner })
}

/// Per-piece labels for one window of `sentence`.
pub fn align_labels(
    sentence: &TaggedSentence,
    alignment: &TokenizationAlignment,
) -> Result<Vec<PieceLabel>> {
    if alignment.sentence_len != sentence.len()
        || alignment.covered_tokens().end > sentence.len()
    {
        return Err(Error::domain(format!(
            "alignment covers tokens {:?} of a {}-token sentence, but the sentence has {} tokens",
            alignment.covered_tokens(),
            alignment.sentence_len,
            sentence.len()
        )));
    }
    let mut labels = vec![None; alignment.len()];
    for (k, range) in alignment.token_ranges.iter().enumerate() {
        labels[range.start] = Some(sentence.tags()[alignment.first_token + k]);
    }
    Ok(labels)
}
