mod common;

use std::collections::BTreeSet;

use common::*;
use proptest::prelude::*;
use vuln_ner::corpus::{Tag, TaggedSentence};
use vuln_ner::structshot::{
    compute_emissions, estimate_transitions, nn_tag, structshot_tag, structshot_tag_with, DecodeMode,
    StructShotOptions, SupportEntry, SupportSet, TokenEmbedder,
};

/// One orthonormal vector per token occurrence.
pub struct Distinct;

impl TokenEmbedder for Distinct {
    fn token_embeddings(&self, s: &[TaggedSentence]) -> vuln_ner::Result<Vec<Vec<Vec<f32>>>> {
        let total: usize = s.iter().map(|x| x.len()).sum();
        let mut k = 0;
        Ok(s.iter()
            .map(|x| {
                (0..x.len())
                    .map(|_| {
                        let mut v = vec![0.0; total];
                        v[k] = 1.0;
                        k += 1;
                        v
                    })
                    .collect()
            })
            .collect())
    }
}

fn covering_corpus(seed: u64, words: &[&str]) -> Vec<TaggedSentence> {
    let mut r = rng(seed);
    loop {
        let n = 2 + below(&mut r, 6);
        let c: Vec<TaggedSentence> = (0..n).map(|_| random_tagged(&mut r, 8, words)).collect();
        let tags: BTreeSet<Tag> = c.iter().flat_map(|s| s.tags().iter().copied()).collect();
        if tags.len() == 3 {
            return c;
        }
    }
}

#[test]
fn identity_support_with_separated_embeddings() {
    for seed in 0..50 {
        let c = covering_corpus(seed, &["a", "b", "c", "d"]);
        let got = structshot_tag(&Distinct, &c, &c, &c).unwrap();
        for (s, g) in c.iter().zip(&got) {
            assert_eq!(s.tags(), g.as_slice(), "seed {seed}");
        }
    }
}

#[test]
fn pipeline_with_encoder_preserves_lengths() {
    let train = synthetic_corpus(12, 5);
    let model = small_encoder().instantiate(&train, 42).unwrap();
    let test = synthetic_corpus(5, 6);
    let out = structshot_tag(&model, &train, &test, &train).unwrap();
    assert_eq!(out.len(), 5);
    for (s, p) in test.iter().zip(&out) {
        assert_eq!(s.len(), p.len());
    }
    assert!(structshot_tag(&model, &train, &[], &train).unwrap().is_empty());
    let nn = StructShotOptions {
        mode: DecodeMode::NearestNeighbor,
        ..Default::default()
    };
    assert_eq!(structshot_tag_with(&model, &train, &test, &train, nn).unwrap().len(), 5);
}

#[test]
fn support_without_sv_is_rejected() {
    let s = TaggedSentence::from_pairs([("nginx", Tag::SN), ("bug", Tag::O)]).unwrap();
    let err = structshot_tag(&Distinct, &[s.clone()], &[s.clone()], &[s]).unwrap_err();
    assert!(err.to_string().contains("SV"));
}

fn entry(v: Vec<f32>, tag: Tag, i: usize) -> SupportEntry {
    SupportEntry {
        embedding: v,
        tag,
        sentence_id: format!("s{i}"),
        token_index: 0,
    }
}

fn vecs(dim: usize, n: usize) -> impl Strategy<Value = Vec<Vec<f32>>> {
    prop::collection::vec(prop::collection::vec(-1.0f32..1.0, dim), n)
        .prop_filter("non-zero", |vs| vs.iter().all(|v| v.iter().any(|x| x.abs() > 1e-3)))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn permuting_support_keeps_predictions(vs in vecs(4, 9), q in vecs(4, 5), rot in 1usize..8) {
        let entries: Vec<SupportEntry> = vs.iter().enumerate().map(|(i, v)| entry(v.clone(), Tag::ALL[i % 3], i)).collect();
        let a = SupportSet::from_entries(entries.clone(), true).unwrap();
        let mut shuffled = entries;
        shuffled.rotate_left(rot);
        let b = SupportSet::from_entries(shuffled, true).unwrap();
        for x in &q {
            let (ta, da) = nn_tag(x, &a).unwrap();
            let (tb, db) = nn_tag(x, &b).unwrap();
            prop_assert_eq!(da, db);
            // a tie between different tags is the only allowed difference
            let tied = a.entries().iter().filter(|e| e.tag != ta).any(|e| {
                vuln_ner::structshot::squared_distance(&e.embedding, &normalize(x)) == da
            });
            prop_assert!(ta == tb || tied);
        }
        let ea = compute_emissions(&q, &a, 1.0).unwrap();
        let eb = compute_emissions(&q, &b, 1.0).unwrap();
        prop_assert_eq!(ea, eb);
    }

    #[test]
    fn adding_entries_never_increases_min_distance(vs in vecs(3, 7), q in vecs(3, 1)) {
        let entries: Vec<SupportEntry> = vs.iter().enumerate().map(|(i, v)| entry(v.clone(), Tag::ALL[i % 3], i)).collect();
        let small = SupportSet::from_entries(entries[..3].to_vec(), false).unwrap();
        let big = SupportSet::from_entries(entries, false).unwrap();
        prop_assert!(nn_tag(&q[0], &big).unwrap().1 <= nn_tag(&q[0], &small).unwrap().1);
        let es = compute_emissions(&q, &small, 1.0).unwrap();
        prop_assert_eq!(es.len(), 1);
    }

    #[test]
    fn emission_rows_are_distributions(vs in vecs(5, 6), q in vecs(5, 4)) {
        let entries: Vec<SupportEntry> = vs.iter().enumerate().map(|(i, v)| entry(v.clone(), Tag::ALL[i % 3], i)).collect();
        let s = SupportSet::from_entries(entries, true).unwrap();
        let e = compute_emissions(&q, &s, 1.0).unwrap();
        for row in &e.rows {
            prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            prop_assert!(row.iter().all(|p| *p > 0.0));
        }
    }
}

fn normalize(v: &[f32]) -> Vec<f32> {
    let n = v.iter().map(|x| (*x as f64).powi(2)).sum::<f64>().sqrt();
    v.iter().map(|x| (*x as f64 / n) as f32).collect()
}

#[test]
fn transitions_from_all_o_corpus() {
    let t = estimate_transitions(&[vec![Tag::O; 5], vec![Tag::O; 3]]).unwrap();
    let o = Tag::O.index();
    assert!(t.transition[o][o] > t.transition[o][Tag::SN.index()]);
}
