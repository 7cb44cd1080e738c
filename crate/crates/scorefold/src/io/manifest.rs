//! Dataset manifests: CSV files with one row per target declaring the
//! PDB path, chain, optional prediction tensor, and split tag.

use std::path::{Path, PathBuf};

use crate::io::IoError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Valid,
    Test,
}

impl std::str::FromStr for Split {
    type Err = String;
    fn from_str(s: &str) -> Result<Split, String> {
        match s {
            "train" => Ok(Split::Train),
            "valid" => Ok(Split::Valid),
            "test" => Ok(Split::Test),
            other => Err(format!("unknown split tag '{other}'")),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ManifestEntry {
    pub id: String,
    pub pdb: PathBuf,
    pub chain: char,
    pub predictions: Option<PathBuf>,
    pub split: Split,
}

/// Load and validate a manifest. Columns: id,pdb,chain,predictions,split
/// (predictions may be empty). Paths are resolved relative to the
/// manifest's directory; ids must be unique and referenced files must
/// exist.
pub fn load_manifest(path: &Path) -> Result<Vec<ManifestEntry>, IoError> {
    let base = path.parent().unwrap_or(Path::new("."));
    let mut reader = csv::Reader::from_path(path).map_err(|e| IoError::Csv(e.to_string()))?;
    let headers = reader
        .headers()
        .map_err(|e| IoError::Csv(e.to_string()))?
        .clone();
    let expected = ["id", "pdb", "chain", "predictions", "split"];
    if headers.iter().collect::<Vec<_>>() != expected {
        return Err(IoError::Manifest(format!(
            "header must be {expected:?}, got {headers:?}"
        )));
    }

    let resolve = |raw: &str| -> PathBuf {
        let p = Path::new(raw);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            base.join(p)
        }
    };

    let mut entries = Vec::new();
    let mut seen = std::collections::HashSet::new();
    for (idx, record) in reader.records().enumerate() {
        let record = record.map_err(|e| IoError::Csv(e.to_string()))?;
        let row = idx + 2;
        let get = |i: usize| record.get(i).unwrap_or("").trim().to_string();
        let id = get(0);
        if id.is_empty() {
            return Err(IoError::Manifest(format!("row {row}: empty id")));
        }
        if !seen.insert(id.clone()) {
            return Err(IoError::Manifest(format!("row {row}: duplicate id '{id}'")));
        }
        let pdb = resolve(&get(1));
        if !pdb.is_file() {
            return Err(IoError::Manifest(format!(
                "row {row}: pdb file {} does not exist",
                pdb.display()
            )));
        }
        let chain_field = get(2);
        let mut chars = chain_field.chars();
        let chain = match (chars.next(), chars.next()) {
            (Some(c), None) => c,
            _ => {
                return Err(IoError::Manifest(format!(
                    "row {row}: chain must be a single character, got '{chain_field}'"
                )))
            }
        };
        let predictions_field = get(3);
        let predictions = if predictions_field.is_empty() {
            None
        } else {
            let p = resolve(&predictions_field);
            if !p.is_file() {
                return Err(IoError::Manifest(format!(
                    "row {row}: predictions file {} does not exist",
                    p.display()
                )));
            }
            Some(p)
        };
        let split: Split = get(4)
            .parse()
            .map_err(|e: String| IoError::Manifest(format!("row {row}: {e}")))?;
        entries.push(ManifestEntry {
            id,
            pdb,
            chain,
            predictions,
            split,
        });
    }
    if entries.is_empty() {
        return Err(IoError::Manifest("manifest has no entries".into()));
    }
    Ok(entries)
}
