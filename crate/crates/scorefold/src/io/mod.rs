//! File formats: PDB Cα traces, the binary tensor container, dataset
//! manifests, CSV reports, and the tensor-backed prediction / checkpoint
//! / histogram files built on top of the container.

pub mod csvio;
pub mod manifest;
pub mod pdb;
pub mod tensor;

use std::path::{Path, PathBuf};

use scorefold_core::conditioning::{PairFeatureMap, PredictionMaps, PRED_CHANNELS};
use scorefold_core::sampler::DihedralHistogram;
use scorefold_core::score::{parameter_count, NetConfig, PairwiseScoreNet};

pub use csvio::{emit_csv, format_float, read_csv, Field};
pub use manifest::{load_manifest, ManifestEntry, Split};
pub use pdb::{format_ca_pdb, parse_pdb_ca, write_ca_pdb, ParsedChain};
pub use tensor::{decode_tensor, encode_tensor, read_tensor, write_tensor, Tensor, TensorFile};

#[derive(Debug, thiserror::Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    File {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("tensor format error: {0}")]
    TensorFormat(String),
    #[error("PDB parse error at line {line}: {what}")]
    PdbParse { line: usize, what: &'static str },
    #[error("no Cα atoms found for chain {chain}")]
    EmptyStructure { chain: char },
    #[error("invalid structure: {0}")]
    InvalidStructure(String),
    #[error("CSV error: {0}")]
    Csv(String),
    #[error("manifest error: {0}")]
    Manifest(String),
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
}

/// Load an L×L×100 prediction tensor as conditioning channels.
pub fn load_predictions(path: &Path) -> Result<PredictionMaps, IoError> {
    let file = read_tensor(path)?;
    let dims = file.tensor.dims().to_vec();
    if dims.len() != 3 || dims[2] != PRED_CHANNELS || dims[0] != dims[1] {
        return Err(IoError::TensorFormat(format!(
            "prediction tensor must be L×L×{PRED_CHANNELS}, got {dims:?}"
        )));
    }
    let data = file
        .tensor
        .as_f32()
        .ok_or_else(|| IoError::TensorFormat("prediction tensor must be float32".into()))?;
    let map = PairFeatureMap::from_data(dims[0], PRED_CHANNELS, data.to_vec())
        .map_err(|e| IoError::TensorFormat(e.to_string()))?;
    PredictionMaps::new(map).map_err(|e| IoError::TensorFormat(e.to_string()))
}

/// Save a prediction map (mostly for fixtures and tests).
pub fn save_predictions(path: &Path, predictions: &PredictionMaps) -> Result<(), IoError> {
    let len = predictions.len();
    let file = TensorFile::new(Tensor::F32 {
        dims: vec![len, len, PRED_CHANNELS],
        data: predictions.map().data().to_vec(),
    })
    .with_meta("kind", "predictions");
    write_tensor(path, &file)
}

const CHECKPOINT_VERSION: &str = "1";

/// Save a trained net: one float64 tensor holding the schedule sigmas
/// followed by the parameters, with the architecture in metadata.
pub fn save_checkpoint(path: &Path, net: &PairwiseScoreNet) -> Result<(), IoError> {
    let mut data = Vec::with_capacity(net.levels() + net.param_count());
    data.extend_from_slice(net.sigmas());
    data.extend_from_slice(net.params());
    let file = TensorFile::new(Tensor::F64 {
        dims: vec![data.len()],
        data,
    })
    .with_meta("kind", "score_net_checkpoint")
    .with_meta("version", CHECKPOINT_VERSION)
    .with_meta("model", "pairwise_axial")
    .with_meta("channels", net.config().channels)
    .with_meta("width", net.config().width)
    .with_meta("blocks", net.config().blocks)
    .with_meta("levels", net.levels())
    .with_meta("dist_scale", scorefold_core::score::DIST_SCALE);
    write_tensor(path, &file)
}

/// Load a net checkpoint, validating the manifest fields.
pub fn load_checkpoint(path: &Path) -> Result<PairwiseScoreNet, IoError> {
    let file = read_tensor(path)?;
    let meta_usize = |key: &str| -> Result<usize, IoError> {
        file.meta(key)
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| IoError::Checkpoint(format!("missing or invalid '{key}' field")))
    };
    if file.meta("kind") != Some("score_net_checkpoint") {
        return Err(IoError::Checkpoint("not a score net checkpoint".into()));
    }
    if file.meta("version") != Some(CHECKPOINT_VERSION) {
        return Err(IoError::Checkpoint(format!(
            "unsupported checkpoint version {:?}",
            file.meta("version")
        )));
    }
    let config = NetConfig {
        channels: meta_usize("channels")?,
        width: meta_usize("width")?,
        blocks: meta_usize("blocks")?,
    };
    let levels = meta_usize("levels")?;
    let data = file
        .tensor
        .as_f64()
        .ok_or_else(|| IoError::Checkpoint("checkpoint payload must be float64".into()))?;
    let expected = levels + parameter_count(&config, levels);
    if data.len() != expected {
        return Err(IoError::Checkpoint(format!(
            "payload holds {} values, architecture implies {expected}",
            data.len()
        )));
    }
    let sigmas = data[..levels].to_vec();
    let params = data[levels..].to_vec();
    PairwiseScoreNet::from_parts(config, sigmas, params)
        .map_err(|e| IoError::Checkpoint(e.to_string()))
}

/// Save a dihedral reference histogram.
pub fn save_histogram(path: &Path, histogram: &DihedralHistogram) -> Result<(), IoError> {
    let file = TensorFile::new(Tensor::F64 {
        dims: vec![histogram.bins()],
        data: histogram.frequencies().to_vec(),
    })
    .with_meta("kind", "dihedral_histogram")
    .with_meta("bins", histogram.bins());
    write_tensor(path, &file)
}

/// Load a dihedral reference histogram.
pub fn load_histogram(path: &Path) -> Result<DihedralHistogram, IoError> {
    let file = read_tensor(path)?;
    if file.meta("kind") != Some("dihedral_histogram") {
        return Err(IoError::TensorFormat("not a histogram file".into()));
    }
    let data = file
        .tensor
        .as_f64()
        .ok_or_else(|| IoError::TensorFormat("histogram payload must be float64".into()))?;
    DihedralHistogram::from_frequencies(data.to_vec())
        .map_err(|e| IoError::TensorFormat(e.to_string()))
}
