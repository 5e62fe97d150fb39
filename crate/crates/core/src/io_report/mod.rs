//! CSV ingestion, result tables and SVG figures.

mod dataset_csv;
mod figure;
mod results;

pub use dataset_csv::{read_dataset, write_dataset, DataFormat};
pub use figure::{emit_figure, render_figure};
pub use results::{
    format_sig, read_results, results_table, summary_table, write_results, ResultRow,
    RESULT_COLUMNS,
};

use std::path::Path;

use crate::error::{Error, Result};

/// Writes through a sibling temporary file and renames it into place, so a
/// failed write never leaves a truncated file at `path`.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let name = path
        .file_name()
        .ok_or_else(|| Error::io(path, std::io::ErrorKind::InvalidInput.into()))?;
    let mut tmp_name = std::ffi::OsString::from(".");
    tmp_name.push(name);
    tmp_name.push(format!(".{}.tmp", std::process::id()));
    let tmp = path.with_file_name(tmp_name);
    let result = std::fs::write(&tmp, contents).and_then(|()| std::fs::rename(&tmp, path));
    result.map_err(|e| {
        let _ = std::fs::remove_file(&tmp);
        Error::io(path, e)
    })
}
