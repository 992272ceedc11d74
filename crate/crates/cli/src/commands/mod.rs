pub mod classify;
pub mod dataset;
pub mod discover;
pub mod eval;
pub mod prompt;
pub mod report;

use std::path::{Path, PathBuf};

use promoguard::corpus::DatasetSplit;

use crate::config::Config;
use crate::exit::{input_error, CliResult};

/// A dataset given either by its config name or as a directory.
pub fn resolve_dataset(config: Option<&Config>, name: &str) -> CliResult<(PathBuf, DatasetSplit)> {
    let dir = match config {
        Some(c) if c.datasets.contains_key(name) => c.dataset_dir(name)?,
        _ => PathBuf::from(name),
    };
    if !dir.is_dir() {
        return Err(input_error(format!(
            "dataset {name:?} is neither a configured dataset nor a directory"
        )));
    }
    let split = DatasetSplit::load_dir(&dir)?;
    Ok((dir, split))
}

pub fn write_text(path: &Path, body: &str) -> CliResult<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(path, body)
        .map_err(|e| crate::exit::pipeline_error(format!("cannot write {}: {e}", path.display())))
}

pub fn read_text(path: &Path) -> CliResult<String> {
    std::fs::read_to_string(path)
        .map_err(|e| input_error(format!("cannot read {}: {e}", path.display())))
}
