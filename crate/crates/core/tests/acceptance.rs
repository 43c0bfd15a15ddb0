//! Desk-scale acceptance checks. Runs as a plain binary so that every
//! criterion prints exactly one `[PASS]` / `[FAIL]` line, in order.
//!
//! `VIEM_ROOT=<dir>` additionally checks the statistics of a real dataset
//! release.

mod common;

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use common::*;
use rand_chacha::ChaCha8Rng;
use rand_core::RngCore;
use vuln_ner::corpus::{
    load_viem_dataset, pooled_nononly_proportion, render_stats_csv, stats_table, Category, Corpus, Delimiter,
    PoolRule, Split, Tag, TaggedSentence,
};
use vuln_ner::evaluation::{token_prf, weighted_f1, EvalReport, TagMetrics};
use vuln_ner::harness::{render_probe_csv, run_adversarial_probe, ProbeOptions};
use vuln_ner::sampling::{build_aggregate, content_hash, sample_count, sample_count_indices, sample_proportion, sample_proportion_indices};
use vuln_ner::structshot::{
    estimate_transitions, nn_tag, sequence_log_score, structshot_tag, viterbi_decode, EmissionTable, SupportEntry,
    SupportSet, TokenEmbedder, TransitionModel,
};
use vuln_ner::tagger::{evaluate_model, fine_tune, TaggerModel, TrainingConfig};

// Detailed per-split statistics of the published release:
// (category, split, n, sentence entity proportion, SN token proportion, SV token proportion).
const RELEASE_STATS: [(&str, &str, usize, f64, f64, f64); 39] = [
    ("memc", "train", 5758, 0.5639, 0.0613, 0.0819),
    ("memc", "valid", 1159, 0.3287, 0.0368, 0.0807),
    ("memc", "test", 1001, 0.4555, 0.0559, 0.0787),
    ("bypass", "train", 652, 0.2239, 0.0314, 0.0431),
    ("bypass", "valid", 162, 0.2469, 0.0367, 0.0423),
    ("bypass", "test", 610, 0.2902, 0.0456, 0.0531),
    ("csrf", "train", 521, 0.2399, 0.0207, 0.0347),
    ("csrf", "valid", 130, 0.2846, 0.0251, 0.0397),
    ("csrf", "test", 415, 0.3181, 0.0321, 0.0464),
    ("dirtra", "train", 619, 0.2359, 0.0172, 0.0219),
    ("dirtra", "valid", 155, 0.1871, 0.0180, 0.0316),
    ("dirtra", "test", 646, 0.2879, 0.0197, 0.0220),
    ("dos", "train", 396, 0.2273, 0.0212, 0.0405),
    ("dos", "valid", 99, 0.2020, 0.0234, 0.0419),
    ("dos", "test", 484, 0.2624, 0.0189, 0.0331),
    ("execution", "train", 413, 0.2639, 0.0228, 0.0358),
    ("execution", "valid", 103, 0.2718, 0.0314, 0.0302),
    ("execution", "test", 639, 0.2598, 0.0273, 0.0357),
    ("fileinc", "train", 546, 0.2857, 0.0175, 0.0185),
    ("fileinc", "valid", 137, 0.3869, 0.0259, 0.0222),
    ("fileinc", "test", 683, 0.3133, 0.0206, 0.0215),
    ("gainpre", "train", 323, 0.2229, 0.0243, 0.0430),
    ("gainpre", "valid", 80, 0.3250, 0.0357, 0.0723),
    ("gainpre", "test", 577, 0.2114, 0.0191, 0.0311),
    ("httprs", "train", 550, 0.1891, 0.0127, 0.0217),
    ("httprs", "valid", 137, 0.1241, 0.0077, 0.0124),
    ("httprs", "test", 411, 0.2360, 0.0175, 0.0304),
    ("infor", "train", 305, 0.2459, 0.0326, 0.0354),
    ("infor", "valid", 76, 0.3158, 0.0187, 0.0282),
    ("infor", "test", 509, 0.2358, 0.0227, 0.0348),
    ("overflow", "train", 396, 0.2475, 0.0217, 0.0326),
    ("overflow", "valid", 98, 0.2143, 0.0185, 0.0230),
    ("overflow", "test", 454, 0.2819, 0.0216, 0.0343),
    ("sqli", "train", 538, 0.2565, 0.0145, 0.0141),
    ("sqli", "valid", 134, 0.2836, 0.0194, 0.0151),
    ("sqli", "test", 685, 0.2423, 0.0171, 0.0181),
    ("xss", "train", 357, 0.2829, 0.0203, 0.0289),
    ("xss", "valid", 89, 0.3708, 0.0276, 0.0386),
    ("xss", "test", 562, 0.2046, 0.0219, 0.0363),
];

// memc counts and the averages over the other twelve
// categories (train, valid, test).
const MEMC_COUNTS: [usize; 3] = [5758, 1159, 1001];
const OTHER_AVG_N: [f64; 3] = [468.00, 116.67, 556.25];
const OTHER_AVG_PROPS: [[f64; 3]; 3] = [
    [0.2435, 0.0214, 0.0308],
    [0.2677, 0.0240, 0.0331],
    [0.2620, 0.0237, 0.0331],
];
// Non-entity-only sentence proportions: all categories, and without memc.
const NONONLY_ALL: f64 = 0.6034;
const NONONLY_WITHOUT_MEMC: f64 = 0.7544;

const PROP_TOL: f64 = 1e-4;
const NONONLY_TOL: f64 = 0.005;

struct Outcome {
    pass: bool,
    detail: String,
}

impl Outcome {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Outcome {
            pass,
            detail: detail.into(),
        }
    }
}

fn check(failures: &mut Vec<String>, failed: bool, msg: impl FnOnce() -> String) {
    if failed {
        failures.push(msg());
    }
}

fn summarize(failures: Vec<String>, ok: impl Into<String>) -> Outcome {
    if failures.is_empty() {
        Outcome::new(true, ok)
    } else {
        let more = if failures.len() > 3 { format!(" (+{} more)", failures.len() - 3) } else { String::new() };
        Outcome::new(false, format!("{}{more}", failures[..failures.len().min(3)].join("; ")))
    }
}

fn report(n: usize, name: &str, o: &Outcome, elapsed: Duration) -> bool {
    let mark = if o.pass { "PASS" } else { "FAIL" };
    println!("[{mark}] {n}. {name}: {} ({:.2}s)", o.detail, elapsed.as_secs_f64());
    o.pass
}

fn note(text: &str) {
    println!("       note: {text}");
}

// ---------------------------------------------------------------- 1

/// Entity sentence count and SN/SV token counts that reproduce the row's
/// proportions to four decimals.
fn fixture_counts(n: usize, ps: f64, psn: f64, psv: f64) -> (usize, usize, usize, usize) {
    let k = (ps * n as f64).round() as usize;
    let tokens = (30 * n).max(10_000);
    let sn = (psn * tokens as f64).round() as usize;
    let sv = (psv * tokens as f64).round() as usize;
    assert!(sn + sv >= k, "fixture cannot place {k} entity sentences");
    (k, tokens, sn, sv)
}

/// Sentences whose statistics match one table row.
fn fixture_split(n: usize, ps: f64, psn: f64, psv: f64) -> String {
    let (k, tokens, sn, sv) = fixture_counts(n, ps, psn, psv);
    let mut tags: Vec<Vec<Tag>> = vec![Vec::new(); n];
    // entity tokens go round-robin over the first k sentences
    for i in 0..sn + sv {
        tags[i % k].push(if i < sn { Tag::SN } else { Tag::SV });
    }
    // then O tokens round-robin over all sentences, starting with the
    // non-entity ones so that none stays empty
    for i in 0..tokens - sn - sv {
        tags[(k + i) % n].push(Tag::O);
    }
    let mut out = String::new();
    for s in &tags {
        for t in s {
            let w = match t {
                Tag::SN => "Prod",
                Tag::SV => "1.0",
                Tag::O => "w",
            };
            out += &format!("{w}\t{t}\n");
        }
        out.push('\n');
    }
    out
}

fn write_fixture(root: &Path) {
    for (cat, split, n, ps, psn, psv) in RELEASE_STATS {
        let dir = root.join(cat);
        std::fs::create_dir_all(&dir).unwrap();
        std::fs::write(dir.join(format!("{split}.txt")), fixture_split(n, ps, psn, psv)).unwrap();
    }
}

fn release_row(cat: &str, split: &str) -> Option<(usize, f64, f64, f64)> {
    RELEASE_STATS
        .iter()
        .find(|r| r.0 == cat && r.1 == split)
        .map(|r| (r.2, r.3, r.4, r.5))
}

/// Compares a loaded corpus with the published statistics. Rows absent
/// from the corpus are skipped; `strict_all` requires all 39.
fn compare_statistics(corpus: &Corpus, strict_all: bool) -> Vec<String> {
    let mut f = Vec::new();
    let rows = match stats_table(corpus) {
        Ok(r) => r,
        Err(e) => return vec![e.to_string()],
    };
    if strict_all {
        check(&mut f, rows.len() != 39, || format!("{} rows, expected 39", rows.len()));
    }
    let csv = render_stats_csv(&rows);
    for (row, line) in rows.iter().zip(csv.lines().skip(1)) {
        let (cat, split) = (row.category.name(), row.split.name());
        let Some((n, ps, psn, psv)) = release_row(cat, split) else {
            f.push(format!("unexpected row {cat}/{split}"));
            continue;
        };
        let s = &row.stats;
        check(&mut f, s.n_sentences != n, || format!("{cat}/{split}: n {} != {n}", s.n_sentences));
        for (what, got, want) in [
            ("sentence", s.sentence_entity_prop, ps),
            ("SN", s.token_prop_sn, psn),
            ("SV", s.token_prop_sv, psv),
        ] {
            check(&mut f, (got - want).abs() > PROP_TOL, || {
                format!("{cat}/{split} {what}: {got:.6} vs {want}")
            });
        }
        if strict_all {
            let want = format!("{cat},{split},{n},{ps:.4},{psn:.4},{psv:.4}");
            check(&mut f, line != want, || format!("rendered {line:?} != {want:?}"));
        }
    }
    for (split, want) in Split::ALL.iter().zip(MEMC_COUNTS) {
        if let Some(s) = corpus.get(Category::Memc, *split) {
            check(&mut f, s.len() != want, || format!("memc/{split}: {} != {want}", s.len()));
        }
    }
    f
}

fn check_nononly(corpus: &Corpus, f: &mut Vec<String>) -> (f64, f64) {
    let all = pooled_nononly_proportion(corpus, &Category::ALL, PoolRule::TrainOfficialValid).unwrap();
    let wo = pooled_nononly_proportion(corpus, &Category::TRANSFER_TARGETS, PoolRule::TrainOfficialValid).unwrap();
    check(f, (all - NONONLY_ALL).abs() > NONONLY_TOL, || format!("non-entity-only (all) {all:.4}"));
    check(f, (wo - NONONLY_WITHOUT_MEMC).abs() > NONONLY_TOL, || {
        format!("non-entity-only (w/o memc) {wo:.4}")
    });
    (all, wo)
}

fn criterion_1() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    write_fixture(dir.path());
    let start = Instant::now();
    let corpus = load_viem_dataset(dir.path(), Delimiter::Tab).unwrap();
    let mut f = compare_statistics(&corpus, true);
    let rows = stats_table(&corpus).unwrap();
    let secs = start.elapsed().as_secs_f64();

    for (i, split) in Split::ALL.iter().enumerate() {
        let others: Vec<_> = rows.iter().filter(|r| r.split == *split && r.category != Category::Memc).collect();
        let k = others.len() as f64;
        let avg_n = others.iter().map(|r| r.stats.n_sentences as f64).sum::<f64>() / k;
        check(&mut f, (avg_n - OTHER_AVG_N[i]).abs() > 0.005, || format!("{split} average n {avg_n:.2}"));
        let avg = |g: fn(&vuln_ner::corpus::CorpusStats) -> f64| others.iter().map(|r| g(&r.stats)).sum::<f64>() / k;
        let got = [avg(|s| s.sentence_entity_prop), avg(|s| s.token_prop_sn), avg(|s| s.token_prop_sv)];
        for (g, w) in got.iter().zip(OTHER_AVG_PROPS[i]) {
            check(&mut f, (g - w).abs() > PROP_TOL, || format!("{split} average proportion {g:.5} vs {w}"));
        }
    }
    let (all, wo) = check_nononly(&corpus, &mut f);
    check(&mut f, secs >= 30.0, || format!("load + stats took {secs:.1}s"));
    let out = summarize(
        f,
        format!(
            "39 rows match counts and 4-decimal proportions; memc 5758/1159/1001; non-entity-only {all:.4} / {wo:.4} vs {NONONLY_ALL} / {NONONLY_WITHOUT_MEMC}; stats in {secs:.2}s"
        ),
    );
    note("fixture corpus built to the published per-split statistics; the release itself is not bundled");
    match std::env::var_os("VIEM_ROOT") {
        Some(root) => {
            let start = Instant::now();
            match load_viem_dataset(Path::new(&root), Delimiter::Tab) {
                Ok(c) => {
                    let mut f = compare_statistics(&c, false);
                    let (a, w) = check_nononly(&c, &mut f);
                    let secs = start.elapsed().as_secs_f64();
                    check(&mut f, secs >= 30.0, || format!("took {secs:.1}s"));
                    let r = summarize(f, format!("{} splits match; non-entity-only {a:.4} / {w:.4}", c.len()));
                    let mark = if r.pass { "PASS" } else { "FAIL" };
                    println!("[{mark}] 1r. statistics of VIEM_ROOT release: {} ({secs:.2}s)", r.detail);
                    if !r.pass {
                        return Outcome::new(false, format!("release check failed: {}", r.detail));
                    }
                }
                Err(e) => return Outcome::new(false, format!("cannot load VIEM_ROOT: {e}")),
            }
        }
        None => note("VIEM_ROOT not set; release statistics not checked"),
    }
    out
}

// ---------------------------------------------------------------- 2

const FROZEN_10PCT_HEAD: [usize; 8] = [0, 1, 5, 11, 12, 15, 34, 48];
const FROZEN_20_5: [usize; 5] = [1, 4, 17, 18, 19];

fn memc_like(n: usize) -> Vec<TaggedSentence> {
    (0..n)
        .map(|i| {
            let w = format!("w{i}");
            TaggedSentence::from_pairs([(w.as_str(), Tag::O), ("Prod", Tag::SN)])
                .unwrap()
                .with_source_id(format!("memc-{i}"))
        })
        .collect()
}

fn criterion_2() -> Outcome {
    let mut f = Vec::new();
    let memc = memc_like(5758);
    let s1 = sample_proportion(&memc, 0.01, 42).unwrap();
    let s10 = sample_proportion(&memc, 0.10, 42).unwrap();
    check(&mut f, s1.len() != 58, || format!("1% gives {}", s1.len()));
    check(&mut f, s10.len() != 576, || format!("10% gives {}", s10.len()));

    let again = sample_proportion(&memc, 0.10, 42).unwrap();
    check(&mut f, content_hash(&s10) != content_hash(&again), || "two runs differ".into());
    let idx = sample_proportion_indices(5758, 0.10, 42).unwrap();
    check(&mut f, idx[..8] != FROZEN_10PCT_HEAD, || format!("10% indices start {:?}", &idx[..8]));
    let small = sample_count_indices(20, 5, 42).unwrap();
    check(&mut f, small != FROZEN_20_5, || format!("count indices {small:?}"));

    let mut subsets = BTreeMap::new();
    for cat in Category::TRANSFER_TARGETS {
        let pool: Vec<TaggedSentence> = memc_like(300);
        subsets.insert(cat, sample_count(&pool, 64, 42).unwrap());
    }
    let agg = build_aggregate(&subsets).unwrap();
    check(&mut f, agg.len() != 768, || format!("aggregate has {}", agg.len()));
    summarize(
        f,
        format!(
            "1% -> 58, 10% -> 576; seed-42 subset identical across runs and equal to the frozen indices; 12x64 aggregate = {}",
            agg.len()
        ),
    )
}

// ---------------------------------------------------------------- 3

fn random_tags(r: &mut ChaCha8Rng, len: usize, bias: usize) -> Vec<Tag> {
    (0..len)
        .map(|_| {
            // bias > 0 makes O more common, as in real data
            let x = below(r, 3 + bias);
            Tag::ALL[x.min(2)]
        })
        .collect()
}

fn oracle_metrics(c: &[[usize; 3]; 3], t: usize) -> TagMetrics {
    let tp = c[t][t];
    let fp = (0..3).map(|g| c[g][t]).sum::<usize>() - tp;
    let fn_ = c[t].iter().sum::<usize>() - tp;
    let p = if tp + fp == 0 { 0.0 } else { tp as f64 / (tp + fp) as f64 };
    let r = if tp + fn_ == 0 { 0.0 } else { tp as f64 / (tp + fn_) as f64 };
    let f1 = if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) };
    TagMetrics {
        precision: p,
        recall: r,
        f1,
        support: tp + fn_,
        tp,
        fp,
        fn_,
        precision_undefined: tp + fp == 0,
    }
}

fn criterion_3() -> Outcome {
    let mut f = Vec::new();
    let mut r = rng(3);
    for case in 0..1000 {
        let n = 1 + below(&mut r, 6);
        let bias = below(&mut r, 8);
        let mut gold = Vec::new();
        let mut pred = Vec::new();
        let mut c = [[0usize; 3]; 3];
        for _ in 0..n {
            let len = 1 + below(&mut r, 12);
            let g = random_tags(&mut r, len, bias);
            // predictions copy gold with some noise
            let p: Vec<Tag> = g
                .iter()
                .map(|&t| if below(&mut r, 3) == 0 { Tag::ALL[below(&mut r, 3)] } else { t })
                .collect();
            for (a, b) in g.iter().zip(&p) {
                c[a.index()][b.index()] += 1;
            }
            gold.push(g);
            pred.push(p);
        }
        let got = token_prf(&gold, &pred).unwrap();
        let want_sn = oracle_metrics(&c, 0);
        let want_sv = oracle_metrics(&c, 1);
        let tokens: usize = c.iter().flatten().sum();
        check(&mut f, got.sn != want_sn || got.sv != want_sv || got.n_tokens != tokens, || {
            format!("case {case}: {got:?}")
        });
    }
    for case in 0..100 {
        let mut rep = EvalReport::default();
        let s1 = below(&mut r, 50);
        let s2 = below(&mut r, 50) + usize::from(s1 == 0);
        rep.sn.support = s1;
        rep.sv.support = s2;
        rep.sn.f1 = unit(&mut r);
        rep.sv.f1 = unit(&mut r);
        let w = s1 as f64 / (s1 + s2) as f64;
        let hand = w * rep.sn.f1 + (1.0 - w) * rep.sv.f1;
        let got = weighted_f1(&rep).unwrap();
        check(&mut f, (got - hand).abs() > 1e-12, || format!("report {case}: {got} vs {hand}"));
    }
    summarize(f, "token_prf equals the confusion-matrix oracle on 1000 cases; weighted_f1 within 1e-12 on 100 reports")
}

fn unit(r: &mut ChaCha8Rng) -> f64 {
    (r.next_u64() >> 11) as f64 / (1u64 << 53) as f64
}

// ---------------------------------------------------------------- 4

fn random_distribution(r: &mut ChaCha8Rng, coarse: bool) -> [f64; 3] {
    // coarse values repeat often, which produces exact ties
    let mut v = [0.0; 3];
    for x in &mut v {
        *x = if coarse { (1 + below(r, 3)) as f64 } else { 0.01 + unit(r) };
    }
    let s: f64 = v.iter().sum();
    v.map(|x| x / s)
}

fn brute_force(e: &[[f64; 3]], start: &[f64; 3], trans: &[[f64; 3]; 3], end: &[f64; 3]) -> (Vec<usize>, f64) {
    let len = e.len();
    let total = 3usize.pow(len as u32);
    let mut scored = Vec::with_capacity(total);
    for code in 0..total {
        // most significant digit first, so codes enumerate lexicographically
        let seq: Vec<usize> = (0..len).rev().map(|i| code / 3usize.pow(i as u32) % 3).collect();
        let mut s = start[seq[0]].ln() + e[0][seq[0]].ln();
        for t in 1..len {
            s += trans[seq[t - 1]][seq[t]].ln() + e[t][seq[t]].ln();
        }
        s += end[seq[len - 1]].ln();
        scored.push((seq, s));
    }
    let best = scored.iter().map(|x| x.1).fold(f64::NEG_INFINITY, f64::max);
    scored.into_iter().find(|x| x.1 >= best - 1e-10).unwrap()
}

fn criterion_4() -> Outcome {
    let mut f = Vec::new();
    let mut r = rng(4);
    for case in 0..200 {
        let coarse = case % 2 == 0;
        let len = 1 + below(&mut r, 6);
        let e: Vec<[f64; 3]> = (0..len).map(|_| random_distribution(&mut r, coarse)).collect();
        let start = random_distribution(&mut r, coarse);
        let trans = [0; 3].map(|_| random_distribution(&mut r, coarse));
        let end = random_distribution(&mut r, coarse);
        let (want, want_score) = brute_force(&e, &start, &trans, &end);
        let model = TransitionModel::new(start, trans, end).unwrap();
        let table = EmissionTable::new(e).unwrap();
        let got = viterbi_decode(&table, &model).unwrap();
        let got_idx: Vec<usize> = got.iter().map(|t| t.index()).collect();
        let got_score = sequence_log_score(&got, &table, &model).unwrap();
        check(&mut f, got_idx != want, || format!("instance {case}: {got_idx:?} vs {want:?}"));
        check(&mut f, (got_score - want_score).abs() > 1e-9, || {
            format!("instance {case}: score {got_score} vs {want_score}")
        });
    }
    summarize(f, "decoded sequence and log-score equal exhaustive search on 200 instances (len <= 6), ties lexicographic")
}

// ---------------------------------------------------------------- 5

fn l2_normalize(v: &[f32]) -> Vec<f32> {
    let norm = v.iter().map(|&x| (x as f64).powi(2)).sum::<f64>().sqrt();
    v.iter().map(|&x| (x as f64 / norm) as f32).collect()
}

fn criterion_5() -> Outcome {
    let mut f = Vec::new();
    let mut r = rng(5);
    for case in 0..500 {
        let dim = 1 + below(&mut r, 6);
        let n = 1 + below(&mut r, 20);
        let coarse = case % 2 == 0;
        let draw = |r: &mut ChaCha8Rng| -> Vec<f32> {
            loop {
                let v: Vec<f32> = (0..dim)
                    .map(|_| if coarse { below(r, 5) as f32 - 2.0 } else { unit(r) as f32 * 2.0 - 1.0 })
                    .collect();
                if v.iter().any(|&x| x != 0.0) {
                    return v;
                }
            }
        };
        let raw: Vec<(Vec<f32>, Tag)> = (0..n).map(|_| (draw(&mut r), Tag::ALL[below(&mut r, 3)])).collect();
        let q = draw(&mut r);
        let entries = raw
            .iter()
            .enumerate()
            .map(|(i, (v, t))| SupportEntry {
                embedding: v.clone(),
                tag: *t,
                sentence_id: format!("s{i}"),
                token_index: 0,
            })
            .collect();
        let set = SupportSet::from_entries(entries, false).unwrap();
        let qn = l2_normalize(&q);
        let mut want: Option<(Tag, f64)> = None;
        for (v, t) in &raw {
            let vn = l2_normalize(v);
            let d: f64 = qn.iter().zip(&vn).map(|(&a, &b)| (a as f64 - b as f64).powi(2)).sum();
            if want.map_or(true, |(_, b)| d < b) {
                want = Some((*t, d));
            }
        }
        let got = nn_tag(&q, &set).unwrap();
        check(&mut f, Some(got) != want, || format!("instance {case}: {got:?} vs {want:?}"));
    }
    summarize(f, "nn_tag equals a linear scan on 500 instances")
}

// ---------------------------------------------------------------- 6

/// One orthonormal vector per token occurrence.
struct Orthonormal;

impl TokenEmbedder for Orthonormal {
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

fn random_word(r: &mut ChaCha8Rng) -> String {
    let len = 3 + below(r, 6);
    (0..len).map(|_| (b'a' + below(r, 26) as u8) as char).collect()
}

/// Random words with random tags, every tag present.
fn random_corpus(seed: u64) -> Vec<TaggedSentence> {
    let mut r = rng(1000 + seed);
    loop {
        let n = 2 + below(&mut r, 6);
        let c: Vec<TaggedSentence> = (0..n)
            .map(|i| {
                let len = 1 + below(&mut r, 8);
                let words: Vec<String> = (0..len).map(|_| random_word(&mut r)).collect();
                let tags = random_tags(&mut r, len, 0);
                TaggedSentence::new(words, tags).unwrap().with_source_id(format!("r{seed}-{i}"))
            })
            .collect();
        let tags: BTreeSet<Tag> = c.iter().flat_map(|s| s.tags().iter().copied()).collect();
        if tags.len() == 3 {
            return c;
        }
    }
}

fn reproduces<E: TokenEmbedder>(embedder: &E, c: &[TaggedSentence]) -> bool {
    let got = structshot_tag(embedder, c, c, c).unwrap();
    c.iter().zip(&got).all(|(s, g)| s.tags() == g.as_slice())
}

fn support_tuning() -> TrainingConfig {
    TrainingConfig {
        learning_rate: 5e-3,
        epochs: 40,
        checkpoints_per_run: 5,
        ..Default::default()
    }
}

fn criterion_6() -> Outcome {
    let corpora: Vec<Vec<TaggedSentence>> = (0..50).map(random_corpus).collect();
    let mut exact = 0;
    let mut failed = Vec::new();
    for (i, c) in corpora.iter().enumerate() {
        // the encoder has been trained on the support sentences, as in the
        // transferred setting where the support set is the transfer sample
        let model = fine_tune(&small_encoder(), c, c, &support_tuning()).unwrap().model;
        if reproduces(&model, c) {
            exact += 1;
        } else {
            failed.push(i);
        }
    }
    let pass = exact == corpora.len();
    let out = Outcome::new(
        pass,
        format!("encoder tuned on the support corpus reproduces support tags on {exact}/50 corpora{}", if pass { String::new() } else { format!(", failing {failed:?}") }),
    );

    let ortho = corpora.iter().filter(|c| reproduces(&Orthonormal, c)).count();
    note(&format!("orthonormal per-token embedder: {ortho}/50"));
    let untrained = small_encoder().instantiate(&corpora.concat(), 42).unwrap();
    let n_untrained = corpora.iter().filter(|c| reproduces(&untrained, c)).count();
    let syn = synthetic_corpus(50, 1);
    let ft_only = fine_tune(&small_encoder(), &syn, &syn, &overfit_config(20)).unwrap().model;
    let n_ft = corpora.iter().filter(|c| reproduces(&ft_only, c)).count();
    note(&format!(
        "untrained encoder: {n_untrained}/50; encoder tuned only on the synthetic corpus: {n_ft}/50 (identity needs embeddings that keep distinct tokens far apart; see README)"
    ));
    out
}

// ---------------------------------------------------------------- 7

fn criterion_7() -> Outcome {
    let mut f = Vec::new();
    let data = synthetic_corpus(50, 1);
    let out = fine_tune(&small_encoder(), &data, &data, &overfit_config(20)).unwrap();
    let f1 = weighted_f1(&evaluate_model(&out.model, &data).unwrap()).unwrap();
    check(&mut f, f1 < 0.99, || format!("train weighted F1 {f1:.4}"));
    let mut counts = Vec::new();
    for epochs in [3, 5] {
        counts.push(fine_tune(&small_encoder(), &data, &data, &overfit_config(epochs)).unwrap().all.len());
    }
    check(&mut f, counts[0] != counts[1], || format!("checkpoint counts {counts:?}"));
    summarize(f, format!("train weighted F1 {f1:.4} after 20 epochs; checkpoints for 3 and 5 epochs: {counts:?}"))
}

// ---------------------------------------------------------------- 8

fn probe_setup() -> (TaggerModel, Vec<TaggedSentence>, Vec<TaggedSentence>, TransitionModel) {
    let train = synthetic_corpus(50, 1);
    let test = synthetic_corpus(4, 77);
    // a lightly tuned encoder; longer tuning collapses all O tokens together
    let model = fine_tune(&small_encoder(), &train, &train, &overfit_config(3)).unwrap().model;
    // the adversary is the whole test set as one sentence, names tagged O
    let mut words = Vec::new();
    let mut tags = Vec::new();
    for t in &test {
        words.extend(t.tokens().iter().cloned());
        tags.extend(t.tags().iter().map(|&x| if x == Tag::SN { Tag::O } else { x }));
    }
    let adversary = TaggedSentence::new(words, tags).unwrap().with_source_id("adversary");
    let mut pool: Vec<TaggedSentence> = train[..6].to_vec();
    pool.push(adversary);
    pool.extend(train[6..9].iter().cloned());
    let seqs: Vec<&[Tag]> = train.iter().map(|s| s.tags()).collect();
    let transitions = estimate_transitions(&seqs).unwrap();
    (model, pool, test, transitions)
}

fn criterion_8() -> Outcome {
    let mut f = Vec::new();
    let (model, pool, test, transitions) = probe_setup();
    let a = run_adversarial_probe(&pool, &test, &model, &transitions, ProbeOptions::default()).unwrap();
    let b = run_adversarial_probe(&pool, &test, &model, &transitions, ProbeOptions::default()).unwrap();
    check(&mut f, a != b || render_probe_csv(&a) != render_probe_csv(&b), || "trajectories differ".into());
    let at = pool.iter().position(|s| s.source_id() == Some("adversary")).unwrap();
    let before = a[at - 1].report.sn.f1;
    let drop = -a[at].delta_sn_f1.unwrap();
    check(&mut f, !(drop > 0.20) || !a[at].flagged, || format!("SN F1 drop at the adversary step {drop:.3}"));
    check(&mut f, a[..at].iter().any(|s| s.flagged), || "a clean step was flagged".into());
    summarize(
        f,
        format!("{} steps identical across two runs; SN F1 {before:.3} before the adversary, drop {drop:.3} when it is inserted", a.len()),
    )
}

fn main() -> ExitCode {
    type Criterion = (&'static str, fn() -> Outcome, Duration);
    let criteria: [Criterion; 8] = [
        ("dataset statistics", criterion_1, Duration::from_secs(30)),
        ("sampling laws", criterion_2, Duration::from_secs(5)),
        ("metric oracles", criterion_3, Duration::MAX),
        ("Viterbi oracle", criterion_4, Duration::MAX),
        ("nearest-neighbour oracle", criterion_5, Duration::MAX),
        ("identity support", criterion_6, Duration::MAX),
        ("overfit sanity", criterion_7, Duration::from_secs(300)),
        ("probe determinism and adversary", criterion_8, Duration::MAX),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut all = true;
    for (i, (name, run, limit)) in criteria.iter().enumerate() {
        let label = format!("{}", i + 1);
        if !filter.is_empty() && !filter.iter().any(|x| *x == label) {
            continue;
        }
        let start = Instant::now();
        let mut o = run();
        let elapsed = start.elapsed();
        if elapsed >= *limit {
            o = Outcome::new(false, format!("{} (over the {}s budget)", o.detail, limit.as_secs()));
        }
        all &= report(i + 1, name, &o, elapsed);
    }
    if all {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
