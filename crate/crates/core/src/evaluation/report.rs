use serde::{Deserialize, Serialize};

use crate::corpus::{spans::spans_of, Span, Tag};
use crate::error::{Error, Result};

/// Which units are counted: original tokens or exact-match entity spans.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Level {
    #[default]
    Token,
    Span,
}

impl Level {
    pub fn as_str(self) -> &'static str {
        match self {
            Level::Token => "token",
            Level::Span => "span",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct TagMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Number of gold units carrying the tag.
    pub support: usize,
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    /// Set when nothing was predicted with this tag, so precision was taken as 0.
    pub precision_undefined: bool,
}

impl TagMetrics {
    pub fn from_counts(tp: usize, fp: usize, fn_: usize) -> Self {
        let precision_undefined = tp + fp == 0;
        let precision = if precision_undefined {
            0.0
        } else {
            tp as f64 / (tp + fp) as f64
        };
        let recall = if tp + fn_ == 0 {
            0.0
        } else {
            tp as f64 / (tp + fn_) as f64
        };
        TagMetrics {
            precision,
            recall,
            f1: harmonic(precision, recall),
            support: tp + fn_,
            tp,
            fp,
            fn_,
            precision_undefined,
        }
    }
}

fn harmonic(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

/// Metrics for `SN` and `SV`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct EvalReport {
    pub level: Level,
    pub sn: TagMetrics,
    pub sv: TagMetrics,
    /// Number of evaluated tokens (summed when averaging).
    pub n_tokens: usize,
}

impl EvalReport {
    pub fn tag(&self, tag: Tag) -> Option<&TagMetrics> {
        match tag {
            Tag::SN => Some(&self.sn),
            Tag::SV => Some(&self.sv),
            Tag::O => None,
        }
    }

    pub fn weighted_f1(&self) -> Result<f64> {
        weighted_f1(self)
    }
}

/// Support-weighted mean of the `SN` and `SV` F1 scores.
pub fn weighted_f1(report: &EvalReport) -> Result<f64> {
    let n_sn = report.sn.support as f64;
    let n_sv = report.sv.support as f64;
    if n_sn + n_sv == 0.0 {
        return Err(Error::domain("weighted F1 is undefined without gold SN or SV"));
    }
    Ok((n_sn * report.sn.f1 + n_sv * report.sv.f1) / (n_sn + n_sv))
}

fn check_shapes(gold: &[Vec<Tag>], pred: &[Vec<Tag>]) -> Result<()> {
    if gold.len() != pred.len() {
        return Err(Error::domain(format!(
            "{} gold sentences but {} predicted",
            gold.len(),
            pred.len()
        )));
    }
    for (i, (g, p)) in gold.iter().zip(pred).enumerate() {
        if g.len() != p.len() {
            return Err(Error::domain(format!(
                "sentence {i}: gold has {} tags, prediction has {}",
                g.len(),
                p.len()
            )));
        }
    }
    Ok(())
}

/// Token-level per-tag scores.
pub fn token_prf(gold: &[Vec<Tag>], pred: &[Vec<Tag>]) -> Result<EvalReport> {
    check_shapes(gold, pred)?;
    // counts[t] = (tp, fp, fn)
    let mut counts = [(0usize, 0usize, 0usize); 2];
    let mut n_tokens = 0;
    for (g, p) in gold.iter().zip(pred) {
        n_tokens += g.len();
        for (&gt, &pt) in g.iter().zip(p) {
            for (k, tag) in Tag::ENTITIES.iter().enumerate() {
                match (gt == *tag, pt == *tag) {
                    (true, true) => counts[k].0 += 1,
                    (false, true) => counts[k].1 += 1,
                    (true, false) => counts[k].2 += 1,
                    (false, false) => {}
                }
            }
        }
    }
    Ok(EvalReport {
        level: Level::Token,
        sn: TagMetrics::from_counts(counts[0].0, counts[0].1, counts[0].2),
        sv: TagMetrics::from_counts(counts[1].0, counts[1].1, counts[1].2),
        n_tokens,
    })
}

/// Exact-match span scores over maximal same-tag runs.
pub fn span_prf(gold: &[Vec<Tag>], pred: &[Vec<Tag>]) -> Result<EvalReport> {
    check_shapes(gold, pred)?;
    let mut counts = [(0usize, 0usize, 0usize); 2];
    let mut n_tokens = 0;
    for (g, p) in gold.iter().zip(pred) {
        n_tokens += g.len();
        let gs = spans_of(g);
        let ps = spans_of(p);
        for (k, tag) in Tag::ENTITIES.iter().enumerate() {
            let gt: Vec<&Span> = gs.iter().filter(|s| s.tag == *tag).collect();
            let pt: Vec<&Span> = ps.iter().filter(|s| s.tag == *tag).collect();
            let tp = pt.iter().filter(|s| gt.contains(s)).count();
            counts[k].0 += tp;
            counts[k].1 += pt.len() - tp;
            counts[k].2 += gt.len() - tp;
        }
    }
    Ok(EvalReport {
        level: Level::Span,
        sn: TagMetrics::from_counts(counts[0].0, counts[0].1, counts[0].2),
        sv: TagMetrics::from_counts(counts[1].0, counts[1].1, counts[1].2),
        n_tokens,
    })
}

/// Unweighted mean of every metric across reports; counts are summed.
pub fn average_reports(reports: &[EvalReport]) -> Result<EvalReport> {
    let first = reports
        .first()
        .ok_or_else(|| Error::domain("cannot average an empty list of reports"))?;
    if reports.iter().any(|r| r.level != first.level) {
        return Err(Error::domain("cannot average token- and span-level reports together"));
    }
    let n = reports.len() as f64;
    let avg = |get: fn(&EvalReport) -> &TagMetrics| {
        let ms: Vec<&TagMetrics> = reports.iter().map(get).collect();
        TagMetrics {
            precision: ms.iter().map(|m| m.precision).sum::<f64>() / n,
            recall: ms.iter().map(|m| m.recall).sum::<f64>() / n,
            f1: ms.iter().map(|m| m.f1).sum::<f64>() / n,
            support: ms.iter().map(|m| m.support).sum(),
            tp: ms.iter().map(|m| m.tp).sum(),
            fp: ms.iter().map(|m| m.fp).sum(),
            fn_: ms.iter().map(|m| m.fn_).sum(),
            precision_undefined: ms.iter().any(|m| m.precision_undefined),
        }
    };
    Ok(EvalReport {
        level: first.level,
        sn: avg(|r| &r.sn),
        sv: avg(|r| &r.sv),
        n_tokens: reports.iter().map(|r| r.n_tokens).sum(),
    })
}
