use super::{EmissionTable, TransitionModel};
use crate::corpus::Tag;
use crate::error::{Error, Result};

const N: usize = Tag::COUNT;

struct LogModel {
    start: [f64; N],
    trans: [[f64; N]; N],
    end: [f64; N],
}

fn ln_checked(p: f64, what: &str) -> Result<f64> {
    if !(p > 0.0) || !p.is_finite() {
        return Err(Error::domain(format!("{what} has probability {p}; smooth before decoding")));
    }
    Ok(p.ln())
}

fn log_model(t: &TransitionModel) -> Result<LogModel> {
    let mut m = LogModel {
        start: [0.0; N],
        trans: [[0.0; N]; N],
        end: [0.0; N],
    };
    for i in 0..N {
        m.start[i] = ln_checked(t.start[i], "start")?;
        m.end[i] = ln_checked(t.end[i], "end")?;
        for j in 0..N {
            m.trans[i][j] = ln_checked(t.transition[i][j], "transition")?;
        }
    }
    Ok(m)
}

fn log_emissions(e: &EmissionTable) -> Result<Vec<[f64; N]>> {
    e.rows
        .iter()
        .map(|r| {
            let mut out = [0.0; N];
            for k in 0..N {
                out[k] = ln_checked(r[k], "emission")?;
            }
            Ok(out)
        })
        .collect()
}

/// Log-score of a tag sequence: start, emissions, transitions and end,
/// summed left to right.
pub fn sequence_log_score(
    tags: &[Tag],
    emissions: &EmissionTable,
    transitions: &TransitionModel,
) -> Result<f64> {
    if tags.len() != emissions.len() || tags.is_empty() {
        return Err(Error::domain("tag sequence and emission table lengths differ"));
    }
    let m = log_model(transitions)?;
    let e = log_emissions(emissions)?;
    let mut score = m.start[tags[0].index()];
    for (t, tag) in tags.iter().enumerate() {
        if t > 0 {
            score += m.trans[tags[t - 1].index()][tag.index()];
        }
        score += e[t][tag.index()];
    }
    Ok(score + m.end[tags[tags.len() - 1].index()])
}

/// Highest-scoring tag sequence. Among equal scores the lexicographically
/// smallest sequence of tag indices is returned. Scores closer than
/// [`TIE_TOLERANCE`] count as equal, so that ties survive rounding in
/// different summation orders.
///
/// Scores are computed right to left (best completion from each state),
/// then the path is read off left to right taking the lowest tag index
/// whenever several continuations reach the optimum. That yields the
/// lexicographic minimum directly.
pub const TIE_TOLERANCE: f64 = 1e-10;

pub fn viterbi_decode(emissions: &EmissionTable, transitions: &TransitionModel) -> Result<Vec<Tag>> {
    let m = log_model(transitions)?;
    let e = log_emissions(emissions)?;
    let len = e.len();
    if len == 0 {
        return Ok(Vec::new());
    }
    // suffix[t][y]: best score of positions t..len given tag y at t,
    // including the emission at t and the end term.
    let mut suffix = vec![[0.0; N]; len];
    for y in 0..N {
        suffix[len - 1][y] = e[len - 1][y] + m.end[y];
    }
    for t in (0..len - 1).rev() {
        for y in 0..N {
            let best = (0..N)
                .map(|z| m.trans[y][z] + suffix[t + 1][z])
                .fold(f64::NEG_INFINITY, f64::max);
            suffix[t][y] = e[t][y] + best;
        }
    }
    let argmax_lowest = |scores: [f64; N]| {
        let mut best = 0;
        for k in 1..N {
            if scores[k] > scores[best] + TIE_TOLERANCE {
                best = k;
            }
        }
        best
    };
    let mut path = Vec::with_capacity(len);
    let mut prev = argmax_lowest(std::array::from_fn(|y| m.start[y] + suffix[0][y]));
    path.push(Tag::ALL[prev]);
    for row in suffix.iter().skip(1) {
        prev = argmax_lowest(std::array::from_fn(|z| m.trans[prev][z] + row[z]));
        path.push(Tag::ALL[prev]);
    }
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use Tag::*;

    fn table(rows: &[[f64; 3]]) -> EmissionTable {
        EmissionTable::new(rows.to_vec()).unwrap()
    }

    #[test]
    fn empty_sequence() {
        let e = EmissionTable { rows: vec![] };
        assert!(viterbi_decode(&e, &TransitionModel::uniform()).unwrap().is_empty());
    }

    #[test]
    fn single_token_is_start_emission_end_argmax() {
        let t = TransitionModel::new([0.2, 0.2, 0.6], [[1.0 / 3.0; 3]; 3], [0.5, 0.25, 0.25]).unwrap();
        let e = table(&[[0.3, 0.3, 0.4]]);
        // SN: .2*.3*.5=.03, SV: .2*.3*.25=.015, O: .6*.4*.25=.06
        assert_eq!(viterbi_decode(&e, &t).unwrap(), [O]);
    }

    #[test]
    fn uniform_transitions_decouple() {
        let e = table(&[[0.7, 0.2, 0.1], [0.1, 0.1, 0.8], [0.2, 0.5, 0.3]]);
        assert_eq!(viterbi_decode(&e, &TransitionModel::uniform()).unwrap(), [SN, O, SV]);
    }

    #[test]
    fn ties_resolve_to_lowest_indices() {
        let e = table(&[[1.0 / 3.0; 3]; 4]);
        assert_eq!(viterbi_decode(&e, &TransitionModel::uniform()).unwrap(), [SN; 4]);
    }

    #[test]
    fn zero_probability_is_rejected() {
        let e = EmissionTable { rows: vec![[0.5, 0.5, 0.0]] };
        assert!(viterbi_decode(&e, &TransitionModel::uniform()).is_err());
        let mut t = TransitionModel::uniform();
        t.transition[0] = [1.0, 0.0, 0.0];
        assert!(viterbi_decode(&table(&[[0.2, 0.3, 0.5]]), &t).is_err());
    }

    #[test]
    fn transitions_can_override_emissions() {
        // SV never follows O, and the O->O link is strong
        let t = TransitionModel::new(
            [0.01, 0.01, 0.98],
            [[0.98, 0.01, 0.01], [0.01, 0.98, 0.01], [0.01, 0.01, 0.98]],
            [1.0 / 3.0; 3],
        )
        .unwrap();
        let e = table(&[[0.1, 0.1, 0.8], [0.1, 0.45, 0.45 ]]);
        let decoded = viterbi_decode(&e, &t).unwrap();
        assert_eq!(decoded, [O, O]);
        let s = sequence_log_score(&decoded, &e, &t).unwrap();
        assert!(s > sequence_log_score(&[O, SV], &e, &t).unwrap());
    }
}
