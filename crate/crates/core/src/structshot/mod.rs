//! Nearest-neighbour tagging over a labelled token-embedding store, with
//! Viterbi decoding under estimated tag transitions.

mod embfile;
mod emissions;
mod pipeline;
mod support;
mod transitions;
mod viterbi;

pub use embfile::{
    read_embeddings, read_embeddings_binary, read_embeddings_text, write_embeddings_binary,
    write_embeddings_text, EmbeddingRow, BINARY_MAGIC,
};
pub use emissions::{compute_emissions, EmissionTable, SMOOTHING_EPS};
pub use pipeline::{
    decode_embedded, structshot_tag, structshot_tag_with, DecodeMode, StructShotOptions,
    TokenEmbedder,
};
pub use support::{
    build_support_set, nn_tag, sentence_id, squared_distance, support_entries, SupportEntry, SupportSet,
};
pub use transitions::{estimate_transitions, TransitionModel};
pub use viterbi::{sequence_log_score, viterbi_decode, TIE_TOLERANCE};

/// Checks that a probability vector is strictly positive and sums to one.
pub(crate) fn check_distribution(p: &[f64], what: &str) -> crate::Result<()> {
    let sum: f64 = p.iter().sum();
    if p.iter().any(|&x| !(x > 0.0) || !x.is_finite()) {
        return Err(crate::Error::Domain(format!(
            "{what} has a zero or non-finite probability: {p:?}"
        )));
    }
    if (sum - 1.0).abs() > 1e-9 {
        return Err(crate::Error::Domain(format!("{what} sums to {sum}, not 1")));
    }
    Ok(())
}
