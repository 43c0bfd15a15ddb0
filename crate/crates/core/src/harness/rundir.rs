//! Resumable cells: a finished cell holds `result.json` and a `DONE` marker.

use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Error, Result};

pub const DONE_MARKER: &str = "DONE";
pub const RESULT_FILE: &str = "result.json";

pub fn is_done(dir: &Path) -> bool {
    dir.join(DONE_MARKER).is_file()
}

/// Returns the stored result of a finished cell, or runs it. Successful
/// results are written before the marker; failures leave no marker, so a
/// rerun retries them. `force` ignores existing markers.
pub fn cached_or_run<T, F>(dir: Option<&Path>, force: bool, run: F) -> Result<T>
where
    T: Serialize + DeserializeOwned,
    F: FnOnce() -> Result<T>,
{
    let Some(dir) = dir else {
        return run();
    };
    if !force && is_done(dir) {
        let path = dir.join(RESULT_FILE);
        let text = fs::read_to_string(&path).map_err(|e| Error::from(e).in_file(&path))?;
        log::info!("skipping finished cell {}", dir.display());
        return serde_json::from_str(&text).map_err(|e| Error::from(e).in_file(&path));
    }
    let _ = fs::remove_file(dir.join(DONE_MARKER));
    let value = run()?;
    fs::create_dir_all(dir)?;
    fs::write(dir.join(RESULT_FILE), serde_json::to_string_pretty(&value)? + "\n")?;
    fs::write(dir.join(DONE_MARKER), b"")?;
    Ok(value)
}
