use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use crate::corpus::TaggedSentence;
use crate::error::{Error, Result};
use crate::structshot::{sentence_id, write_embeddings_binary, write_embeddings_text, EmbeddingRow, TokenEmbedder};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EmbeddingFormat {
    #[default]
    Text,
    Binary,
}

/// One row per token, labelled with its gold tag.
pub fn embedding_rows<E: TokenEmbedder>(embedder: &E, sentences: &[TaggedSentence]) -> Result<Vec<EmbeddingRow>> {
    let emb = embedder.token_embeddings(sentences)?;
    if emb.len() != sentences.len() {
        return Err(Error::domain("embedder returned the wrong number of sentences"));
    }
    let mut rows = Vec::new();
    for (i, (s, vs)) in sentences.iter().zip(emb).enumerate() {
        if vs.len() != s.len() {
            return Err(Error::domain(format!("sentence {i}: {} vectors for {} tokens", vs.len(), s.len())));
        }
        let id = sentence_id(s, i);
        for (j, (tag, vector)) in s.tags().iter().zip(vs).enumerate() {
            rows.push(EmbeddingRow {
                sentence_id: id.clone(),
                token_index: j,
                tag: *tag,
                vector,
            });
        }
    }
    Ok(rows)
}

/// Writes the embeddings of `sentences`; returns the row count.
pub fn export_embeddings<E: TokenEmbedder>(
    embedder: &E,
    sentences: &[TaggedSentence],
    path: &Path,
    format: EmbeddingFormat,
) -> Result<usize> {
    let rows = embedding_rows(embedder, sentences)?;
    let file = File::create(path).map_err(|e| Error::from(e).in_file(path))?;
    let w = BufWriter::new(file);
    match format {
        EmbeddingFormat::Text => write_embeddings_text(w, &rows),
        EmbeddingFormat::Binary => write_embeddings_binary(w, &rows),
    }
    .map_err(|e| e.in_file(path))?;
    Ok(rows.len())
}
