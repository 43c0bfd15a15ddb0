#![allow(dead_code)]

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use vuln_ner::corpus::{Tag, TaggedSentence};
use vuln_ner::tagger::{EncoderHandle, RandomEncoderSpec, TrainingConfig};

pub const PRODUCTS: [&str; 10] = [
    "NetLink", "Apache", "nginx", "OpenSSL", "Joomla", "WordPress", "Drupal", "phpBB", "Tomcat", "Samba",
];

const LEFT: [&str; 5] = ["A", "flaw", "in", "the", "module"];
const RIGHT: [&str; 6] = ["allows", "remote", "attackers", "to", "execute", "code"];

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn below(rng: &mut ChaCha8Rng, n: usize) -> usize {
    (rng.next_u64() % n as u64) as usize
}

/// `n` sentences with exactly one SN and one SV token each, embedded in
/// varying amounts of O context.
pub fn synthetic_corpus(n: usize, seed: u64) -> Vec<TaggedSentence> {
    let mut r = rng(seed);
    (0..n)
        .map(|i| {
            let mut pairs: Vec<(String, Tag)> = Vec::new();
            for w in &LEFT[below(&mut r, 3)..] {
                pairs.push((w.to_string(), Tag::O));
            }
            pairs.push((PRODUCTS[i % PRODUCTS.len()].to_string(), Tag::SN));
            pairs.push((format!("{}.{}.{}", 1 + below(&mut r, 4), below(&mut r, 10), below(&mut r, 20)), Tag::SV));
            for w in &RIGHT[..2 + below(&mut r, 5)] {
                pairs.push((w.to_string(), Tag::O));
            }
            TaggedSentence::from_pairs(pairs.iter().map(|(w, t)| (w.as_str(), *t)))
                .unwrap()
                .with_source_id(format!("syn-{i}"))
        })
        .collect()
}

pub fn small_encoder() -> EncoderHandle {
    EncoderHandle::Random(RandomEncoderSpec {
        hidden: 32,
        layers: 1,
        heads: 2,
        max_len: 64,
        max_vocab: 2000,
    })
}

pub fn overfit_config(epochs: usize) -> TrainingConfig {
    TrainingConfig {
        learning_rate: 5e-3,
        epochs,
        checkpoints_per_run: 5,
        ..Default::default()
    }
}

/// Random tags over a small token alphabet.
pub fn random_tagged(r: &mut ChaCha8Rng, max_len: usize, words: &[&str]) -> TaggedSentence {
    let len = 1 + below(r, max_len);
    let pairs: Vec<(&str, Tag)> = (0..len)
        .map(|_| (words[below(r, words.len())], Tag::ALL[below(r, 3)]))
        .collect();
    TaggedSentence::from_pairs(pairs).unwrap()
}
