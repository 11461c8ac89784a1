use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use tcn_core::data::{data_dir_from_env, load_idx_dir, make_blobs, Dataset, DATA_DIR_ENV};

use crate::config::{DataConfig, DataSource};
use crate::error::{CliError, CliResult};

pub fn ensure_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir)
        .map_err(|e| CliError::usage(format!("cannot create output directory {}: {e}", dir.display())))
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::runtime(e.to_string()))?;
    text.push('\n');
    write_text(path, &text)
}

pub fn write_text(path: &Path, text: &str) -> CliResult<()> {
    fs::write(path, text).map_err(|e| CliError::runtime(format!("cannot write {}: {e}", path.display())))
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> CliResult<T> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::usage(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::usage(format!("invalid {}: {e}", path.display())))
}

fn idx_dir(cfg: &DataConfig) -> CliResult<PathBuf> {
    if let Some(d) = &cfg.idx_dir {
        return Ok(d.clone());
    }
    data_dir_from_env().ok_or_else(|| {
        CliError::usage(format!(
            "IDX data requested but no idx_dir is configured and {DATA_DIR_ENV} does not name a directory with the four IDX files"
        ))
    })
}

/// Train and test splits described by `cfg`.
pub fn load_dataset(cfg: &DataConfig) -> CliResult<(Dataset, Dataset)> {
    let (train, test) = match cfg.source {
        DataSource::Blobs => make_blobs(&cfg.blobs)?,
        DataSource::Idx => {
            let dir = idx_dir(cfg)?;
            load_idx_dir(&dir)
                .map_err(|e| CliError::usage(format!("cannot load IDX data from {}: {e}", dir.display())))?
        }
    };
    let train = cfg.max_train.map_or(train.clone(), |n| train.head(n));
    let test = cfg.max_test.map_or(test.clone(), |n| test.head(n));
    if train.is_empty() || test.is_empty() {
        return Err(CliError::usage("dataset split is empty"));
    }
    Ok((train, test))
}
