//! Token-embedding exchange files.
//!
//! Text form:
//!
//! ```text
//! <count> <dim>
//! <sentence id>\t<token index>\t<tag>\t<v_1> <v_2> ... <v_dim>
//! ```
//!
//! Values are written with Rust's shortest round-trip `f32` formatting.
//!
//! Binary form (all integers little-endian):
//!
//! | bytes     | content                                   |
//! |-----------|-------------------------------------------|
//! | 8         | magic `VNEREMB1`                          |
//! | 8         | `u64` row count                           |
//! | 4         | `u32` dimension                           |
//! | per row:  |                                           |
//! | 4         | `u32` byte length `L` of the sentence id  |
//! | L         | sentence id, UTF-8                        |
//! | 4         | `u32` token index                         |
//! | 1         | tag index (0 = SN, 1 = SV, 2 = O)         |
//! | 4 × dim   | `f32` values                              |

use std::io::{BufRead, Read, Write};

use crate::corpus::Tag;
use crate::error::{Error, Result};

pub const BINARY_MAGIC: &[u8; 8] = b"VNEREMB1";

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingRow {
    pub sentence_id: String,
    pub token_index: usize,
    pub tag: Tag,
    pub vector: Vec<f32>,
}

fn common_dim(rows: &[EmbeddingRow]) -> Result<usize> {
    let dim = rows.first().map_or(0, |r| r.vector.len());
    if let Some(r) = rows.iter().find(|r| r.vector.len() != dim) {
        return Err(Error::domain(format!(
            "row {}:{} has dimension {}, expected {dim}",
            r.sentence_id,
            r.token_index,
            r.vector.len()
        )));
    }
    Ok(dim)
}

fn check_id(id: &str) -> Result<()> {
    if id.is_empty() || id.chars().any(|c| c == '\t' || c == '\n' || c == '\r') {
        return Err(Error::domain(format!("sentence id {id:?} cannot be written")));
    }
    Ok(())
}

pub fn write_embeddings_text<W: Write>(mut w: W, rows: &[EmbeddingRow]) -> Result<()> {
    let dim = common_dim(rows)?;
    writeln!(w, "{} {dim}", rows.len())?;
    for r in rows {
        check_id(&r.sentence_id)?;
        write!(w, "{}\t{}\t{}\t", r.sentence_id, r.token_index, r.tag)?;
        for (i, v) in r.vector.iter().enumerate() {
            if i > 0 {
                w.write_all(b" ")?;
            }
            write!(w, "{v}")?;
        }
        w.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_embeddings_text<R: BufRead>(r: R) -> Result<Vec<EmbeddingRow>> {
    let mut lines = r.lines().enumerate();
    let (count, dim) = match lines.next() {
        Some((_, line)) => {
            let line = line?;
            let mut it = line.split_whitespace().map(str::parse::<usize>);
            match (it.next(), it.next(), it.next()) {
                (Some(Ok(c)), Some(Ok(d)), None) => (c, d),
                _ => {
                    return Err(Error::Parse {
                        line: 1,
                        message: format!("bad header {line:?}"),
                    })
                }
            }
        }
        None => {
            return Err(Error::Parse {
                line: 1,
                message: "missing header".into(),
            })
        }
    };
    let mut rows = Vec::with_capacity(count);
    for (i, line) in lines {
        let line = line?;
        if line.is_empty() {
            continue;
        }
        let bad = |message: String| Error::Parse {
            line: i + 1,
            message,
        };
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 4 {
            return Err(bad(format!("expected 4 columns, found {}", cols.len())));
        }
        let token_index = cols[1]
            .parse()
            .map_err(|_| bad(format!("bad token index {:?}", cols[1])))?;
        let tag = cols[2].parse::<Tag>().map_err(|_| Error::UnknownTag {
            line: i + 1,
            tag: cols[2].to_string(),
        })?;
        let vector = cols[3]
            .split(' ')
            .map(|v| v.parse::<f32>().map_err(|_| bad(format!("bad value {v:?}"))))
            .collect::<Result<Vec<_>>>()?;
        if vector.len() != dim {
            return Err(bad(format!("{} values, header says {dim}", vector.len())));
        }
        rows.push(EmbeddingRow {
            sentence_id: cols[0].to_string(),
            token_index,
            tag,
            vector,
        });
    }
    if rows.len() != count {
        return Err(Error::domain(format!("header announces {count} rows, found {}", rows.len())));
    }
    Ok(rows)
}

pub fn write_embeddings_binary<W: Write>(mut w: W, rows: &[EmbeddingRow]) -> Result<()> {
    let dim = common_dim(rows)?;
    w.write_all(BINARY_MAGIC)?;
    w.write_all(&(rows.len() as u64).to_le_bytes())?;
    w.write_all(&u32::try_from(dim).map_err(|_| Error::domain("dimension too large"))?.to_le_bytes())?;
    for r in rows {
        let id = r.sentence_id.as_bytes();
        w.write_all(&(id.len() as u32).to_le_bytes())?;
        w.write_all(id)?;
        w.write_all(&(r.token_index as u32).to_le_bytes())?;
        w.write_all(&[r.tag.index() as u8])?;
        for v in &r.vector {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

fn read_array<const K: usize, R: Read>(r: &mut R) -> Result<[u8; K]> {
    let mut buf = [0u8; K];
    r.read_exact(&mut buf)?;
    Ok(buf)
}

pub fn read_embeddings_binary<R: Read>(mut r: R) -> Result<Vec<EmbeddingRow>> {
    if &read_array::<8, _>(&mut r)? != BINARY_MAGIC {
        return Err(Error::domain("not a binary embedding file (bad magic)"));
    }
    let count = u64::from_le_bytes(read_array(&mut r)?) as usize;
    let dim = u32::from_le_bytes(read_array(&mut r)?) as usize;
    let mut rows = Vec::with_capacity(count.min(1 << 20));
    for _ in 0..count {
        let len = u32::from_le_bytes(read_array(&mut r)?) as usize;
        let mut id = vec![0u8; len];
        r.read_exact(&mut id)?;
        let sentence_id =
            String::from_utf8(id).map_err(|_| Error::domain("sentence id is not UTF-8"))?;
        let token_index = u32::from_le_bytes(read_array(&mut r)?) as usize;
        let [tag] = read_array::<1, _>(&mut r)?;
        let tag = Tag::from_index(tag as usize)
            .ok_or_else(|| Error::domain(format!("bad tag index {tag}")))?;
        let mut vector = Vec::with_capacity(dim);
        for _ in 0..dim {
            vector.push(f32::from_le_bytes(read_array(&mut r)?));
        }
        rows.push(EmbeddingRow {
            sentence_id,
            token_index,
            tag,
            vector,
        });
    }
    Ok(rows)
}

/// Reads either rendering, telling them apart by the binary magic.
pub fn read_embeddings(bytes: &[u8]) -> Result<Vec<EmbeddingRow>> {
    if bytes.starts_with(BINARY_MAGIC) {
        read_embeddings_binary(bytes)
    } else {
        read_embeddings_text(bytes)
    }
}
