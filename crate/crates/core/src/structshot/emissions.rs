use serde::{Deserialize, Serialize};

use super::support::normalize;
use super::{check_distribution, SupportSet};
use crate::corpus::Tag;
use crate::error::{Error, Result};

pub const SMOOTHING_EPS: f64 = 1e-6;

/// Per-token tag distributions, indexed by [`Tag::index`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmissionTable {
    pub rows: Vec<[f64; Tag::COUNT]>,
}

impl EmissionTable {
    pub fn new(rows: Vec<[f64; Tag::COUNT]>) -> Result<Self> {
        for (i, r) in rows.iter().enumerate() {
            check_distribution(r, &format!("emission row {i}"))?;
        }
        Ok(EmissionTable { rows })
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Per-row argmax, lowest tag index on ties.
    pub fn argmax(&self) -> Vec<Tag> {
        self.rows
            .iter()
            .map(|r| {
                let mut best = 0;
                for k in 1..Tag::COUNT {
                    if r[k] > r[best] {
                        best = k;
                    }
                }
                Tag::ALL[best]
            })
            .collect()
    }
}

/// Softmax over the negated per-tag minimum distances, then ε-smoothed.
///
/// A tag missing from the support set gets zero mass before smoothing.
pub fn compute_emissions(
    test: &[Vec<f32>],
    support: &SupportSet,
    temperature: f64,
) -> Result<EmissionTable> {
    if !(temperature > 0.0) {
        return Err(Error::domain(format!("softmax temperature {temperature} must be positive")));
    }
    let mut rows = Vec::with_capacity(test.len());
    for q in test {
        support.check_query(q)?;
        let dist = support.min_distance_per_tag(&normalize(q));
        let scores = dist.map(|d| d.map(|d| -d / temperature));
        let max = scores
            .iter()
            .flatten()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max);
        let mut row = [0.0; Tag::COUNT];
        for (p, s) in row.iter_mut().zip(scores) {
            *p = s.map_or(0.0, |s| (s - max).exp());
        }
        let z: f64 = row.iter().sum();
        for p in &mut row {
            *p = (*p / z + SMOOTHING_EPS) / (1.0 + Tag::COUNT as f64 * SMOOTHING_EPS);
        }
        rows.push(row);
    }
    Ok(EmissionTable { rows })
}
