use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{Category, Corpus, Split, Tag, TaggedSentence};
use crate::error::{Error, Result};

/// Imbalance statistics of a list of sentences.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub n_sentences: usize,
    /// Fraction of sentences with at least one `SN` or `SV` token.
    pub sentence_entity_prop: f64,
    pub token_prop_sn: f64,
    pub token_prop_sv: f64,
    /// Fraction of sentences tagged entirely `O`.
    pub nononly_prop: f64,
}

pub fn compute_statistics(sentences: &[TaggedSentence]) -> Result<CorpusStats> {
    if sentences.is_empty() {
        return Err(Error::domain("statistics of an empty sentence list"));
    }
    let mut with_entity = 0usize;
    let mut tokens = 0usize;
    let mut sn = 0usize;
    let mut sv = 0usize;
    for s in sentences {
        if s.has_entity() {
            with_entity += 1;
        }
        tokens += s.len();
        for t in s.tags() {
            match t {
                Tag::SN => sn += 1,
                Tag::SV => sv += 1,
                Tag::O => {}
            }
        }
    }
    let n = sentences.len();
    Ok(CorpusStats {
        n_sentences: n,
        sentence_entity_prop: with_entity as f64 / n as f64,
        token_prop_sn: sn as f64 / tokens as f64,
        token_prop_sv: sv as f64 / tokens as f64,
        nononly_prop: (n - with_entity) as f64 / n as f64,
    })
}

/// Which splits are pooled when computing a corpus-wide non-entity-only
/// proportion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PoolRule {
    /// Train splits only.
    Train,
    /// Train and valid splits of every category.
    TrainValid,
    /// Train splits, plus the valid split of `memc` (the only category that
    /// ships an official one).
    #[default]
    TrainOfficialValid,
}

impl PoolRule {
    fn includes(self, category: Category, split: Split) -> bool {
        match (self, split) {
            (_, Split::Train) => true,
            (PoolRule::TrainValid, Split::Valid) => true,
            (PoolRule::TrainOfficialValid, Split::Valid) => category == Category::Memc,
            _ => false,
        }
    }
}

/// Non-entity-only proportion over the pooled splits of `categories`.
pub fn pooled_nononly_proportion(
    corpus: &Corpus,
    categories: &[Category],
    rule: PoolRule,
) -> Result<f64> {
    let mut n = 0usize;
    let mut nononly = 0usize;
    for ((category, split), sentences) in corpus.iter() {
        if categories.contains(&category) && rule.includes(category, split) {
            n += sentences.len();
            nononly += sentences.iter().filter(|s| !s.has_entity()).count();
        }
    }
    if n == 0 {
        return Err(Error::domain("no sentences in the pooled splits"));
    }
    Ok(nononly as f64 / n as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsRow {
    pub category: Category,
    pub split: Split,
    pub stats: CorpusStats,
}

/// One row per non-empty (category, split) in corpus order.
pub fn stats_table(corpus: &Corpus) -> Result<Vec<StatsRow>> {
    corpus
        .iter()
        .filter(|(_, s)| !s.is_empty())
        .map(|((category, split), sentences)| {
            Ok(StatsRow {
                category,
                split,
                stats: compute_statistics(sentences)?,
            })
        })
        .collect()
}

const HEADER: [&str; 6] = [
    "category",
    "split",
    "n",
    "sentence_entity_prop",
    "token_prop_sn",
    "token_prop_sv",
];

fn row_cells(row: &StatsRow) -> [String; 6] {
    [
        row.category.to_string(),
        row.split.to_string(),
        row.stats.n_sentences.to_string(),
        format!("{:.4}", row.stats.sentence_entity_prop),
        format!("{:.4}", row.stats.token_prop_sn),
        format!("{:.4}", row.stats.token_prop_sv),
    ]
}

pub fn render_stats_csv(rows: &[StatsRow]) -> String {
    let mut out = HEADER.join(",");
    out.push('\n');
    for row in rows {
        out.push_str(&row_cells(row).join(","));
        out.push('\n');
    }
    out
}

pub fn render_stats_text(rows: &[StatsRow]) -> String {
    let cells: Vec<[String; 6]> = rows.iter().map(row_cells).collect();
    let mut widths = HEADER.map(str::len);
    for r in &cells {
        for (w, c) in widths.iter_mut().zip(r) {
            *w = (*w).max(c.len());
        }
    }
    let mut out = String::new();
    let line = |out: &mut String, r: &[&str]| {
        for (i, (c, w)) in r.iter().zip(widths).enumerate() {
            if i > 0 {
                out.push_str("  ");
            }
            if i < 2 {
                let _ = write!(out, "{c:<w$}");
            } else {
                let _ = write!(out, "{c:>w$}");
            }
        }
        out.push('\n');
    };
    line(&mut out, &HEADER);
    for r in &cells {
        line(&mut out, &r.each_ref().map(String::as_str));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use Tag::*;

    fn sent(tags: &[Tag]) -> TaggedSentence {
        TaggedSentence::new((0..tags.len()).map(|i| format!("w{i}")).collect(), tags.to_vec())
            .unwrap()
    }

    #[test]
    fn empty_list_is_an_error() {
        assert!(compute_statistics(&[]).is_err());
    }

    #[test]
    fn all_o_sentence() {
        let s = compute_statistics(&[sent(&[O, O, O])]).unwrap();
        assert_eq!(s.nononly_prop, 1.0);
        assert_eq!(s.sentence_entity_prop, 0.0);
        assert_eq!(s.token_prop_sn, 0.0);
        assert_eq!(s.token_prop_sv, 0.0);
    }

    #[test]
    fn mixed_counts() {
        let s = compute_statistics(&[sent(&[SN, SN, SV, O]), sent(&[O, O, O, O])]).unwrap();
        assert_eq!(s.n_sentences, 2);
        assert_eq!(s.sentence_entity_prop, 0.5);
        assert_eq!(s.token_prop_sn, 2.0 / 8.0);
        assert_eq!(s.token_prop_sv, 1.0 / 8.0);
    }

    #[test]
    fn pooling_rules() {
        let mut c = Corpus::new();
        c.insert(Category::Memc, Split::Train, vec![sent(&[SN]), sent(&[O])]).unwrap();
        c.insert(Category::Memc, Split::Valid, vec![sent(&[O]), sent(&[O])]).unwrap();
        c.insert(Category::Xss, Split::Train, vec![sent(&[O])]).unwrap();
        c.insert(Category::Xss, Split::Valid, vec![sent(&[SV])]).unwrap();
        c.insert(Category::Xss, Split::Test, vec![sent(&[O]); 10]).unwrap();
        let all = Category::ALL;
        assert_eq!(pooled_nononly_proportion(&c, &all, PoolRule::Train).unwrap(), 2.0 / 3.0);
        assert_eq!(pooled_nononly_proportion(&c, &all, PoolRule::TrainValid).unwrap(), 4.0 / 6.0);
        assert_eq!(
            pooled_nononly_proportion(&c, &all, PoolRule::TrainOfficialValid).unwrap(),
            4.0 / 5.0
        );
        assert_eq!(
            pooled_nononly_proportion(&c, &[Category::Xss], PoolRule::TrainOfficialValid).unwrap(),
            1.0
        );
        assert!(pooled_nononly_proportion(&c, &[Category::Dos], PoolRule::Train).is_err());
    }

    #[test]
    fn renderings_share_columns() {
        let mut c = Corpus::new();
        c.insert(Category::Memc, Split::Train, vec![sent(&[SN, O]), sent(&[O])]).unwrap();
        let rows = stats_table(&c).unwrap();
        assert_eq!(
            render_stats_csv(&rows),
            "category,split,n,sentence_entity_prop,token_prop_sn,token_prop_sv\n\
             memc,train,2,0.5000,0.3333,0.0000\n"
        );
        let text = render_stats_text(&rows);
        assert!(text.lines().next().unwrap().starts_with("category  split"));
        assert!(text.contains("0.3333"));
    }

    proptest! {
        #[test]
        fn invariants_and_permutation(
            raw in prop::collection::vec(prop::collection::vec(0usize..3, 1..10), 1..30),
            rot in 0usize..30,
        ) {
            let mut sentences: Vec<TaggedSentence> = raw
                .iter()
                .map(|t| sent(&t.iter().map(|&i| Tag::from_index(i).unwrap()).collect::<Vec<_>>()))
                .collect();
            let a = compute_statistics(&sentences).unwrap();
            prop_assert!((a.sentence_entity_prop + a.nononly_prop - 1.0).abs() < 1e-12);
            prop_assert!(a.token_prop_sn + a.token_prop_sv <= 1.0 + 1e-12);
            let k = rot % sentences.len();
            sentences.rotate_left(k);
            sentences.reverse();
            let b = compute_statistics(&sentences).unwrap();
            prop_assert_eq!(a, b);
        }
    }
}
