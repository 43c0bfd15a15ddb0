use serde::{Deserialize, Serialize};

use crate::corpus::{Tag, TaggedSentence};
use crate::error::{Error, Result};
use crate::evaluation::{token_prf, EvalReport};
use crate::structshot::{
    decode_embedded, support_entries, DecodeMode, StructShotOptions, SupportSet, TokenEmbedder, TransitionModel,
};

pub const DEFAULT_DROP_THRESHOLD: f64 = 0.20;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbeOptions {
    /// Flag a step whose SN F1 falls by more than this.
    pub drop_threshold: f64,
    pub temperature: f64,
}

impl Default for ProbeOptions {
    fn default() -> Self {
        ProbeOptions {
            drop_threshold: DEFAULT_DROP_THRESHOLD,
            temperature: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeStep {
    /// Support size: the first `k` pool sentences.
    pub k: usize,
    pub added: String,
    pub report: EvalReport,
    /// Change from the previous step; `None` at `k = 1`.
    pub delta_sn_f1: Option<f64>,
    pub delta_sv_f1: Option<f64>,
    pub flagged: bool,
}

/// Grows the support set one pool sentence at a time and scores the test
/// set after each addition. Support sets may lack a tag; that tag then only
/// gets smoothing mass.
pub fn run_adversarial_probe<E: TokenEmbedder>(
    pool: &[TaggedSentence],
    test: &[TaggedSentence],
    embedder: &E,
    transitions: &TransitionModel,
    opts: ProbeOptions,
) -> Result<Vec<ProbeStep>> {
    if pool.is_empty() {
        return Err(Error::domain("empty support pool"));
    }
    if test.is_empty() {
        return Err(Error::domain("empty test set"));
    }
    let pool_emb = embedder.token_embeddings(pool)?;
    let test_emb = embedder.token_embeddings(test)?;
    let entries = support_entries(pool, &pool_emb)?;
    let gold: Vec<Vec<Tag>> = test.iter().map(|s| s.tags().to_vec()).collect();
    let decode = StructShotOptions {
        mode: DecodeMode::Viterbi,
        temperature: opts.temperature,
        require_coverage: false,
    };

    let mut steps: Vec<ProbeStep> = Vec::with_capacity(pool.len());
    let mut used = 0;
    for k in 1..=pool.len() {
        used += pool[k - 1].len();
        let support = SupportSet::from_entries(entries[..used].to_vec(), false)?;
        let pred = decode_embedded(&support, &test_emb, Some(transitions), decode)?;
        let report = token_prf(&gold, &pred)?;
        let prev = steps.last().map(|s| s.report);
        let delta_sn_f1 = prev.map(|p| report.sn.f1 - p.sn.f1);
        let delta_sv_f1 = prev.map(|p| report.sv.f1 - p.sv.f1);
        let flagged = delta_sn_f1.is_some_and(|d| -d > opts.drop_threshold);
        steps.push(ProbeStep {
            k,
            added: crate::structshot::sentence_id(&pool[k - 1], k - 1),
            report,
            delta_sn_f1,
            delta_sv_f1,
            flagged,
        });
    }
    Ok(steps)
}

pub fn render_probe_csv(steps: &[ProbeStep]) -> String {
    let mut out = String::from("k,added,sn_precision,sn_recall,sn_f1,sv_precision,sv_recall,sv_f1,delta_sn_f1,delta_sv_f1,flagged\n");
    let opt = |v: Option<f64>| v.map(|x| format!("{x:.4}")).unwrap_or_default();
    for s in steps {
        let r = &s.report;
        out += &format!(
            "{},{},{:.4},{:.4},{:.4},{:.4},{:.4},{:.4},{},{},{}\n",
            s.k,
            s.added,
            r.sn.precision,
            r.sn.recall,
            r.sn.f1,
            r.sv.precision,
            r.sv.recall,
            r.sv.f1,
            opt(s.delta_sn_f1),
            opt(s.delta_sv_f1),
            s.flagged
        );
    }
    out
}
