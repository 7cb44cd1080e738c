//! Protein-specific conditional input maps for the score model: pairwise
//! one-hot sequence encoding, sinusoidal positional encoding, and ingested
//! inter-residue distance/orientation prediction channels.

use alloc::string::String;
use alloc::vec::Vec;

use crate::geometry::AminoAcid;
use crate::{Error, Result};

/// Width of the per-residue one-hot block; pairs carry two of them.
pub const ONE_HOT_CHANNELS: usize = 40;
/// Default positional-encoding width.
pub const DEFAULT_POSENC_WIDTH: usize = 48;
/// Maximal sequence length assumed by the positional encoding.
pub const POSENC_LENGTH_SCALE: f64 = 1000.0;

/// Prediction channel block widths: distance, ω, γ, φ bins.
pub const PRED_DIST_BINS: usize = 37;
pub const PRED_OMEGA_BINS: usize = 25;
pub const PRED_GAMMA_BINS: usize = 25;
pub const PRED_PHI_BINS: usize = 13;
/// Total prediction channels.
pub const PRED_CHANNELS: usize = PRED_DIST_BINS + PRED_OMEGA_BINS + PRED_GAMMA_BINS + PRED_PHI_BINS;

/// Tolerance for per-cell bin-probability normalization.
const NORMALIZATION_TOL: f64 = 1e-3;

/// Dense L×L×C feature map, row-major over (i, j, channel).
#[derive(Debug, Clone, PartialEq)]
pub struct PairFeatureMap {
    len: usize,
    channels: usize,
    data: Vec<f32>,
}

impl PairFeatureMap {
    pub fn zeros(len: usize, channels: usize) -> PairFeatureMap {
        PairFeatureMap {
            len,
            channels,
            data: vec![0.0; len * len * channels],
        }
    }

    pub fn from_data(len: usize, channels: usize, data: Vec<f32>) -> Result<PairFeatureMap> {
        if data.len() != len * len * channels {
            return Err(Error::ShapeMismatch {
                expected: len * len * channels,
                got: data.len(),
            });
        }
        Ok(PairFeatureMap {
            len,
            channels,
            data,
        })
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn cell(&self, i: usize, j: usize) -> &[f32] {
        let base = (i * self.len + j) * self.channels;
        &self.data[base..base + self.channels]
    }

    fn cell_mut(&mut self, i: usize, j: usize) -> &mut [f32] {
        let base = (i * self.len + j) * self.channels;
        &mut self.data[base..base + self.channels]
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    /// Sub-map over a contiguous residue window.
    pub fn window(&self, start: usize, len: usize) -> Result<PairFeatureMap> {
        if start + len > self.len {
            return Err(Error::InvalidInput(format!(
                "window {start}+{len} exceeds map length {}",
                self.len
            )));
        }
        let mut out = PairFeatureMap::zeros(len, self.channels);
        for i in 0..len {
            for j in 0..len {
                let src = self.cell(start + i, start + j).to_vec();
                out.cell_mut(i, j).copy_from_slice(&src);
            }
        }
        Ok(out)
    }
}

/// One named channel group inside the stacked conditioning input.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChannelGroup {
    pub name: String,
    pub offset: usize,
    pub width: usize,
    /// Whether cell (i, j) equals cell (j, i) over this group.
    pub symmetric: bool,
}

/// Layout of the stacked conditioning channels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChannelManifest {
    pub groups: Vec<ChannelGroup>,
}

impl ChannelManifest {
    pub fn total_channels(&self) -> usize {
        self.groups.iter().map(|g| g.width).sum()
    }
}

/// Pairwise one-hot encoding: channels [0, 20) repeat the row residue's
/// one-hot down each column, channels [20, 40) repeat the column
/// residue's; cell (i, j) is concat(onehot(s_i), onehot(s_j)). Unknown
/// residues encode as all-zero blocks.
pub fn one_hot_pairwise(sequence: &[AminoAcid]) -> Result<PairFeatureMap> {
    if sequence.is_empty() {
        return Err(Error::InvalidInput("empty sequence".into()));
    }
    let n = sequence.len();
    let mut map = PairFeatureMap::zeros(n, ONE_HOT_CHANNELS);
    for i in 0..n {
        for j in 0..n {
            let cell = map.cell_mut(i, j);
            if let Some(a) = sequence[i].index() {
                cell[a] = 1.0;
            }
            if let Some(b) = sequence[j].index() {
                cell[20 + b] = 1.0;
            }
        }
    }
    Ok(map)
}

/// Per-residue sinusoidal code of width `posenc_width / 2`:
/// code[i][2r] = sin(i / 1000^{4r/D}), code[i][2r+1] = cos(same), for
/// r < D/4. The pairwise map concatenates the row and column codes.
pub fn positional_encoding(len: usize, posenc_width: usize) -> Result<PairFeatureMap> {
    if posenc_width == 0 || posenc_width % 4 != 0 {
        return Err(Error::InvalidConfig(format!(
            "positional encoding width must be a positive multiple of 4, got {posenc_width}"
        )));
    }
    let half = posenc_width / 2;
    let mut codes = vec![0.0f32; len * half];
    for i in 0..len {
        for r in 0..posenc_width / 4 {
            let freq = libm::pow(POSENC_LENGTH_SCALE, 4.0 * r as f64 / posenc_width as f64);
            let arg = i as f64 / freq;
            codes[i * half + 2 * r] = libm::sin(arg) as f32;
            codes[i * half + 2 * r + 1] = libm::cos(arg) as f32;
        }
    }
    let mut map = PairFeatureMap::zeros(len, posenc_width);
    for i in 0..len {
        for j in 0..len {
            let cell = map.cell_mut(i, j);
            cell[..half].copy_from_slice(&codes[i * half..(i + 1) * half]);
            cell[half..].copy_from_slice(&codes[j * half..(j + 1) * half]);
        }
    }
    Ok(map)
}

/// Ingested inter-residue distance/orientation prediction channels.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionMaps {
    map: PairFeatureMap,
    normalized: bool,
}

impl PredictionMaps {
    /// Validate an L×L×100 prediction tensor. Each cell's per-group bin
    /// vector must sum to 1 within 1e-3 for the map to count as
    /// normalized; NaN entries are rejected outright.
    pub fn new(map: PairFeatureMap) -> Result<PredictionMaps> {
        if map.channels() != PRED_CHANNELS {
            return Err(Error::ShapeMismatch {
                expected: PRED_CHANNELS,
                got: map.channels(),
            });
        }
        if map.data().iter().any(|v| v.is_nan()) {
            return Err(Error::InvalidInput("NaN in prediction tensor".into()));
        }
        let mut normalized = true;
        'outer: for i in 0..map.len() {
            for j in 0..map.len() {
                let cell = map.cell(i, j);
                let mut offset = 0;
                for width in [
                    PRED_DIST_BINS,
                    PRED_OMEGA_BINS,
                    PRED_GAMMA_BINS,
                    PRED_PHI_BINS,
                ] {
                    let sum: f64 = cell[offset..offset + width].iter().map(|&v| v as f64).sum();
                    if (sum - 1.0).abs() > NORMALIZATION_TOL {
                        normalized = false;
                        break 'outer;
                    }
                    offset += width;
                }
            }
        }
        Ok(PredictionMaps { map, normalized })
    }

    /// All-zero predictions (flagged unnormalized), used when no
    /// prediction file is supplied.
    pub fn absent(len: usize) -> PredictionMaps {
        PredictionMaps {
            map: PairFeatureMap::zeros(len, PRED_CHANNELS),
            normalized: false,
        }
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    pub fn normalized(&self) -> bool {
        self.normalized
    }

    pub fn map(&self) -> &PairFeatureMap {
        &self.map
    }

    /// Zero the ω/γ/φ orientation blocks, keeping the distance block:
    /// the "distance only" ablation.
    pub fn mask_orientation(&mut self) {
        let n = self.map.len();
        for i in 0..n {
            for j in 0..n {
                let cell = self.map.cell_mut(i, j);
                for v in &mut cell[PRED_DIST_BINS..] {
                    *v = 0.0;
                }
            }
        }
        self.normalized = false;
    }
}

/// Stacked conditioning inputs for one target sequence.
///
/// Immutable after assembly. The noise level is not a channel here; it
/// enters the score model as a per-level embedding.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditioningBundle {
    sequence: Vec<AminoAcid>,
    onehot: PairFeatureMap,
    posenc: PairFeatureMap,
    predictions: PredictionMaps,
    manifest: ChannelManifest,
}

impl ConditioningBundle {
    pub fn len(&self) -> usize {
        self.sequence.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sequence.is_empty()
    }

    pub fn sequence(&self) -> &[AminoAcid] {
        &self.sequence
    }

    pub fn onehot(&self) -> &PairFeatureMap {
        &self.onehot
    }

    pub fn posenc(&self) -> &PairFeatureMap {
        &self.posenc
    }

    pub fn predictions(&self) -> &PredictionMaps {
        &self.predictions
    }

    pub fn predictions_normalized(&self) -> bool {
        self.predictions.normalized()
    }

    pub fn manifest(&self) -> &ChannelManifest {
        &self.manifest
    }

    /// Total stacked channel count.
    pub fn channels(&self) -> usize {
        self.onehot.channels() + self.posenc.channels() + self.predictions.map().channels()
    }

    /// Bundle restricted to a contiguous residue window. Positional codes
    /// keep their absolute positions (the maps are sliced, not rebuilt).
    pub fn window(&self, start: usize, len: usize) -> Result<ConditioningBundle> {
        if start + len > self.len() {
            return Err(Error::InvalidInput(format!(
                "window {start}+{len} exceeds bundle length {}",
                self.len()
            )));
        }
        Ok(ConditioningBundle {
            sequence: self.sequence[start..start + len].to_vec(),
            onehot: self.onehot.window(start, len)?,
            posenc: self.posenc.window(start, len)?,
            predictions: PredictionMaps {
                map: self.predictions.map.window(start, len)?,
                normalized: self.predictions.normalized,
            },
            manifest: self.manifest.clone(),
        })
    }

    /// Write the concatenated feature vector of cell (i, j) into `out`
    /// as f64, in manifest order. `out.len()` must equal `channels()`.
    pub fn write_cell(&self, i: usize, j: usize, out: &mut [f64]) {
        debug_assert_eq!(out.len(), self.channels());
        let mut k = 0;
        for src in [
            self.onehot.cell(i, j),
            self.posenc.cell(i, j),
            self.predictions.map().cell(i, j),
        ] {
            for &v in src {
                out[k] = v as f64;
                k += 1;
            }
        }
    }
}

/// Stack one-hot, positional-encoding, and prediction channels for a
/// sequence. Missing predictions become zero channels so the stacked
/// width never changes.
pub fn assemble(
    sequence: &[AminoAcid],
    posenc_width: usize,
    predictions: Option<PredictionMaps>,
) -> Result<ConditioningBundle> {
    let onehot = one_hot_pairwise(sequence)?;
    let posenc = positional_encoding(sequence.len(), posenc_width)?;
    let predictions = match predictions {
        Some(p) => {
            if p.len() != sequence.len() {
                return Err(Error::ShapeMismatch {
                    expected: sequence.len(),
                    got: p.len(),
                });
            }
            p
        }
        None => PredictionMaps::absent(sequence.len()),
    };
    let half = posenc_width / 2;
    let manifest = ChannelManifest {
        groups: vec![
            ChannelGroup {
                name: "onehot_row".into(),
                offset: 0,
                width: 20,
                symmetric: false,
            },
            ChannelGroup {
                name: "onehot_col".into(),
                offset: 20,
                width: 20,
                symmetric: false,
            },
            ChannelGroup {
                name: "posenc_row".into(),
                offset: 40,
                width: half,
                symmetric: false,
            },
            ChannelGroup {
                name: "posenc_col".into(),
                offset: 40 + half,
                width: half,
                symmetric: false,
            },
            ChannelGroup {
                name: "pred_distance".into(),
                offset: 40 + posenc_width,
                width: PRED_DIST_BINS,
                symmetric: true,
            },
            ChannelGroup {
                name: "pred_omega".into(),
                offset: 40 + posenc_width + PRED_DIST_BINS,
                width: PRED_OMEGA_BINS,
                symmetric: true,
            },
            ChannelGroup {
                name: "pred_gamma".into(),
                offset: 40 + posenc_width + PRED_DIST_BINS + PRED_OMEGA_BINS,
                width: PRED_GAMMA_BINS,
                symmetric: false,
            },
            ChannelGroup {
                name: "pred_phi".into(),
                offset: 40 + posenc_width + PRED_DIST_BINS + 2 * PRED_OMEGA_BINS,
                width: PRED_PHI_BINS,
                symmetric: false,
            },
        ],
    };
    Ok(ConditioningBundle {
        sequence: sequence.to_vec(),
        onehot,
        posenc,
        predictions,
        manifest,
    })
}
