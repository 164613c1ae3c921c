use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use thiserror::Error;

use super::{parse_app, AppPair, ParseError};
use crate::catalog::SensitiveCatalog;

pub const BENIGN_FILE: &str = "benign.app";
pub const MALIGN_FILE: &str = "malign.app";

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("cannot read dataset directory {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("pair `{pair_id}` is missing {file}")]
    MissingHalf { pair_id: String, file: &'static str },
    #[error("pair `{pair_id}`, {file}: {source}")]
    Parse { pair_id: String, file: &'static str, source: ParseError },
    #[error("pair `{pair_id}`: benign and malign versions share the app id `{app_id}`")]
    SameAppId { pair_id: String, app_id: String },
}

impl DatasetError {
    pub fn pair_id(&self) -> Option<&str> {
        match self {
            DatasetError::Io { .. } => None,
            DatasetError::MissingHalf { pair_id, .. }
            | DatasetError::Parse { pair_id, .. }
            | DatasetError::SameAppId { pair_id, .. } => Some(pair_id),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct SkippedPair {
    pub pair_id: String,
    pub reason: String,
}

#[derive(Debug)]
pub struct DatasetScan {
    pub pairs: Vec<AppPair>,
    pub skipped: Vec<SkippedPair>,
}

fn pair_dirs(root: &Path) -> Result<Vec<(String, PathBuf)>, DatasetError> {
    let io_err = |source| DatasetError::Io { path: root.to_path_buf(), source };
    let mut dirs = Vec::new();
    for entry in fs::read_dir(root).map_err(io_err)? {
        let entry = entry.map_err(io_err)?;
        if entry.file_type().map_err(io_err)?.is_dir() {
            dirs.push((entry.file_name().to_string_lossy().into_owned(), entry.path()));
        }
    }
    dirs.sort();
    Ok(dirs)
}

fn load_pair(pair_id: &str, dir: &Path, catalog: Option<&SensitiveCatalog>) -> Result<AppPair, DatasetError> {
    let read = |file: &'static str| -> Result<_, DatasetError> {
        let path = dir.join(file);
        let text = match fs::read_to_string(&path) {
            Ok(t) => t,
            Err(e) if e.kind() == io::ErrorKind::NotFound => {
                return Err(DatasetError::MissingHalf { pair_id: pair_id.to_owned(), file })
            }
            Err(source) => return Err(DatasetError::Io { path, source }),
        };
        parse_app(&text, catalog).map_err(|source| DatasetError::Parse { pair_id: pair_id.to_owned(), file, source })
    };
    let benign = read(BENIGN_FILE)?;
    let malign = read(MALIGN_FILE)?;
    if benign.id == malign.id {
        return Err(DatasetError::SameAppId { pair_id: pair_id.to_owned(), app_id: benign.id });
    }
    Ok(AppPair { pair_id: pair_id.to_owned(), benign, malign })
}

/// Load every `<pair_id>/{benign,malign}.app` under `root`, sorted by pair id.
/// The first broken pair aborts the load.
pub fn parse_pair_dataset(root: &Path, catalog: Option<&SensitiveCatalog>) -> Result<Vec<AppPair>, DatasetError> {
    let dirs = pair_dirs(root)?;
    if dirs.is_empty() {
        log::warn!("dataset {} contains no pairs", root.display());
    }
    let pairs = dirs
        .iter()
        .map(|(id, dir)| load_pair(id, dir, catalog))
        .collect::<Result<Vec<_>, _>>()?;
    log::info!("loaded {} pairs from {}", pairs.len(), root.display());
    Ok(pairs)
}

/// Like [`parse_pair_dataset`], but pairs that fail to load are skipped and
/// reported instead of aborting the whole dataset.
pub fn scan_pair_dataset(root: &Path, catalog: Option<&SensitiveCatalog>) -> Result<DatasetScan, DatasetError> {
    let dirs = pair_dirs(root)?;
    if dirs.is_empty() {
        log::warn!("dataset {} contains no pairs", root.display());
    }
    let mut scan = DatasetScan { pairs: Vec::new(), skipped: Vec::new() };
    for (id, dir) in &dirs {
        match load_pair(id, dir, catalog) {
            Ok(p) => scan.pairs.push(p),
            Err(e) => {
                log::warn!("skipping pair {id}: {e}");
                scan.skipped.push(SkippedPair { pair_id: id.clone(), reason: e.to_string() });
            }
        }
    }
    Ok(scan)
}
