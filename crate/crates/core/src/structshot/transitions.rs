use serde::{Deserialize, Serialize};

use super::check_distribution;
use crate::corpus::Tag;
use crate::error::{Error, Result};

const N: usize = Tag::COUNT;

/// First-tag, tag-to-tag and last-tag distributions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionModel {
    pub start: [f64; N],
    pub transition: [[f64; N]; N],
    pub end: [f64; N],
}

impl TransitionModel {
    pub fn new(start: [f64; N], transition: [[f64; N]; N], end: [f64; N]) -> Result<Self> {
        let m = TransitionModel {
            start,
            transition,
            end,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn uniform() -> Self {
        let u = 1.0 / N as f64;
        TransitionModel {
            start: [u; N],
            transition: [[u; N]; N],
            end: [u; N],
        }
    }

    pub fn validate(&self) -> Result<()> {
        check_distribution(&self.start, "start distribution")?;
        check_distribution(&self.end, "end distribution")?;
        for (i, row) in self.transition.iter().enumerate() {
            check_distribution(row, &format!("transition row {}", Tag::ALL[i]))?;
        }
        Ok(())
    }
}

fn normalize_counts(c: [usize; N]) -> [f64; N] {
    let total: usize = c.iter().sum::<usize>() + N;
    c.map(|x| (x + 1) as f64 / total as f64)
}

/// Maximum-likelihood estimates with add-one smoothing.
pub fn estimate_transitions<S: AsRef<[Tag]>>(sequences: &[S]) -> Result<TransitionModel> {
    let mut start = [0usize; N];
    let mut end = [0usize; N];
    let mut trans = [[0usize; N]; N];
    let mut seen = 0;
    for s in sequences {
        let s = s.as_ref();
        let (Some(first), Some(last)) = (s.first(), s.last()) else {
            continue;
        };
        seen += 1;
        start[first.index()] += 1;
        end[last.index()] += 1;
        for w in s.windows(2) {
            trans[w[0].index()][w[1].index()] += 1;
        }
    }
    if seen == 0 {
        return Err(Error::domain("cannot estimate transitions from an empty corpus"));
    }
    Ok(TransitionModel {
        start: normalize_counts(start),
        transition: trans.map(normalize_counts),
        end: normalize_counts(end),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_chacha::ChaCha8Rng;
    use rand_core::{RngCore, SeedableRng};
    use Tag::*;

    #[test]
    fn single_sequence_hand_count() {
        let m = estimate_transitions(&[vec![O, SN]]).unwrap();
        // start: O seen once -> 2/4, others 1/4
        assert_eq!(m.start, [0.25, 0.25, 0.5]);
        assert_eq!(m.end, [0.5, 0.25, 0.25]);
        let o_row = m.transition[O.index()];
        assert_eq!(o_row, [0.5, 0.25, 0.25]);
        // unseen rows stay uniform
        assert_eq!(m.transition[SV.index()], [1.0 / 3.0; 3]);
        m.validate().unwrap();
    }

    #[test]
    fn empty_corpus_is_an_error() {
        assert!(estimate_transitions::<Vec<Tag>>(&[]).is_err());
        assert!(estimate_transitions(&[Vec::<Tag>::new()]).is_err());
    }

    #[test]
    fn all_o_prefers_o() {
        let m = estimate_transitions(&[vec![O; 5], vec![O; 3]]).unwrap();
        let row = m.transition[O.index()];
        assert!(row[O.index()] > row[SN.index()] && row[O.index()] > row[SV.index()]);
    }

    #[test]
    fn uniform_tags_give_uniform_transitions() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let seqs: Vec<Vec<Tag>> = (0..2000)
            .map(|_| (0..20).map(|_| Tag::ALL[(rng.next_u32() % 3) as usize]).collect())
            .collect();
        let m = estimate_transitions(&seqs).unwrap();
        for row in m.transition {
            for p in row {
                assert!((p - 1.0 / 3.0).abs() < 0.02, "{p}");
            }
        }
    }
}
