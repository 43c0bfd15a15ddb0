use std::fs;
use std::path::{Path, PathBuf};

use super::{parse_conll_with, Category, Corpus, Delimiter, Split};
use crate::error::{Error, Result};

const EXTENSIONS: [&str; 5] = ["txt", "conll", "tsv", "bio", ""];

/// Loads every (category, split) file found under `root`.
///
/// Two layouts are recognised: `root/<category>/<split>.<ext>` and
/// `root/<category>_<split>.<ext>`, with `<ext>` one of `txt`, `conll`,
/// `tsv`, `bio` or nothing. Absent pairs are simply left out.
pub fn load_viem_dataset(root: &Path, delimiter: Delimiter) -> Result<Corpus> {
    let meta = fs::metadata(root).map_err(|e| Error::from(e).in_file(root))?;
    if !meta.is_dir() {
        return Err(Error::domain(format!("{} is not a directory", root.display())));
    }
    let mut corpus = Corpus::new();
    for category in Category::ALL {
        for split in Split::ALL {
            let Some(path) = find_file(root, category, split) else {
                continue;
            };
            let text = fs::read_to_string(&path).map_err(|e| Error::from(e).in_file(&path))?;
            let sentences = parse_conll_with(&text, delimiter).map_err(|e| e.in_file(&path))?;
            corpus.insert(category, split, sentences)?;
        }
    }
    Ok(corpus)
}

fn find_file(root: &Path, category: Category, split: Split) -> Option<PathBuf> {
    let nested = root.join(category.name());
    let flat_stem = format!("{}_{}", category.name(), split.name());
    for ext in EXTENSIONS {
        let with_ext = |stem: &str| {
            if ext.is_empty() {
                stem.to_string()
            } else {
                format!("{stem}.{ext}")
            }
        };
        let candidates = [nested.join(with_ext(split.name())), root.join(with_ext(&flat_stem))];
        if let Some(p) = candidates.into_iter().find(|p| p.is_file()) {
            return Some(p);
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Tag;

    #[test]
    fn missing_root_is_io_error() {
        let err = load_viem_dataset(Path::new("/nonexistent/viem"), Delimiter::Tab).unwrap_err();
        match err {
            Error::File { source, .. } => assert!(matches!(*source, Error::Io(_))),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn partial_layout_and_flat_names() {
        let dir = tempfile::tempdir().unwrap();
        let memc = dir.path().join("memc");
        fs::create_dir(&memc).unwrap();
        fs::write(memc.join("train.txt"), "a\tSN\n\nb\tO\n").unwrap();
        fs::write(memc.join("valid.txt"), "c\tSV\n").unwrap();
        fs::write(memc.join("test.txt"), "d\tO\n").unwrap();
        let corpus = load_viem_dataset(dir.path(), Delimiter::Tab).unwrap();
        assert_eq!(corpus.len(), 3);
        assert_eq!(corpus.get(Category::Memc, Split::Train).unwrap().len(), 2);

        fs::write(dir.path().join("xss_train.conll"), "e\tSN\n").unwrap();
        let corpus = load_viem_dataset(dir.path(), Delimiter::Tab).unwrap();
        assert_eq!(corpus.len(), 4);
        assert_eq!(corpus.get(Category::Xss, Split::Train).unwrap()[0].tags(), [Tag::SN]);
    }

    #[test]
    fn parse_errors_name_the_file() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("dos_test.txt"), "a\tX\n").unwrap();
        let err = load_viem_dataset(dir.path(), Delimiter::Tab).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("dos_test.txt"), "{msg}");
        assert!(msg.contains("unknown tag"), "{msg}");
    }
}
