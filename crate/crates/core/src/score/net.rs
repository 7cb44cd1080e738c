//! A compact learnable pairwise score network.
//!
//! Each pair (i, j) is embedded from its scaled squared distance plus a
//! fixed Gaussian radial-basis expansion of the raw distance, the
//! stacked conditioning channels, and a learned per-noise-level code.
//! The input projection is modulated per level by a learned affine
//! (gain, shift) pair, standing in for the conditional normalization of
//! conv-net score models: levels with tiny σ need far higher gain on the
//! distance signal than levels that see heavily corrupted geometry.
//! Trunk blocks apply a per-pair affine + tanh over the pair state
//! concatenated with its row-mean and column-mean context vectors (the
//! axial aggregation that carries global information), with a residual
//! connection. The scalar head has a restraint shape,
//!
//!   h_ij = (g_k · κ_ij · (ρ_ij − d̃_ij/S) / σ_k + μ_ij) / (σ_k · L · (1 + d̃_ij/S)),
//!
//! with S = DIST_SCALE and κ, ρ, μ linear read-outs of the trunk. The
//! (ρ − d̃/S) factor bakes the comparison against a learned per-pair
//! reference distance into the architecture, so at small σ the net only
//! has to regress smooth reference values instead of resolving tiny
//! input deviations; the per-level gate g_k starts at zero so each level
//! engages the restraint only once its reference is calibrated enough to
//! help; the 1/σ_k factors keep the denoising regression
//! target unit-scale at every noise level, and the per-pair denominator
//! cancels the length- and distance-dependent amplification of the
//! chain-rule pullback, so the loss surface seen by the optimizer is
//! comparably conditioned across levels and chain lengths.

use alloc::vec::Vec;
use rand_core::RngCore;

use crate::conditioning::ConditioningBundle;
use crate::geometry::DistanceMatrix;
use crate::noise::NoiseSchedule;
use crate::rng::{standard_normal, ChaCha8Rng, SeedableRng};
use crate::score::ScoreField;
use crate::{Error, Result};

/// Width of the learned per-level embedding vector.
pub const EMBED_DIM: usize = 16;

/// Squared distances are fed as d̃_ij / DIST_SCALE to keep activations
/// O(1) for typical domain sizes.
pub const DIST_SCALE: f64 = 100.0;

/// Radial-basis expansion of the pair distance (Å): Gaussian bumps every
/// `RBF_SPACING` from 0 to `RBF_COUNT − 1` spacings out.
pub const RBF_COUNT: usize = 28;
pub const RBF_SPACING: f64 = 1.5;

fn rbf_features(dist_sq: f64, out: &mut [f64]) {
    let r = libm::sqrt(dist_sq.max(0.0));
    let inv = 1.0 / (2.0 * RBF_SPACING * RBF_SPACING);
    for (m, slot) in out.iter_mut().enumerate() {
        let delta = r - RBF_SPACING * m as f64;
        *slot = libm::exp(-delta * delta * inv);
    }
}

/// Architecture hyperparameters. The noise-level count comes from the
/// schedule the net is built against.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NetConfig {
    /// Conditioning channel count (the bundle's stacked width).
    pub channels: usize,
    /// Hidden width W.
    pub width: usize,
    /// Trunk block count B.
    pub blocks: usize,
}

impl NetConfig {
    fn feature_width(&self) -> usize {
        1 + RBF_COUNT + self.channels + EMBED_DIM
    }
}

/// Total parameter count for a given architecture and level count.
pub fn parameter_count(config: &NetConfig, levels: usize) -> usize {
    let w = config.width;
    let f = config.feature_width();
    // embed + film (gain, shift per level) + per-level restraint gate
    // + input proj + trunk + three head read-outs (κ, ρ, μ)
    levels * EMBED_DIM
        + 2 * levels * w
        + levels
        + w * f
        + w
        + config.blocks * (3 * w * w + w)
        + 3 * (w + 1)
}

/// Learnable pairwise score network; forward passes are deterministic
/// functions of (parameters, inputs).
#[derive(Debug, Clone, PartialEq)]
pub struct PairwiseScoreNet {
    config: NetConfig,
    sigmas: Vec<f64>,
    params: Vec<f64>,
}

// Parameter layout offsets. The head holds three read-outs of width
// W + 1 each (weights then bias): stiffness κ, reference ρ, residual μ.
struct Layout {
    embed: usize,
    film: usize, // per level: W gains then W shifts
    gate: usize, // per level: scalar gate on the restraint head term
    w_in: usize,
    b_in: usize,
    blocks: usize, // start of block 0; each block is 3W² + W long
    head_kappa: usize,
    head_rho: usize,
    head_mu: usize,
}

impl PairwiseScoreNet {
    fn layout(&self) -> Layout {
        let w = self.config.width;
        let f = self.config.feature_width();
        let levels = self.sigmas.len();
        let embed = 0;
        let film = embed + levels * EMBED_DIM;
        let gate = film + 2 * levels * w;
        let w_in = gate + levels;
        let b_in = w_in + w * f;
        let blocks = b_in + w;
        let head_kappa = blocks + self.config.blocks * (3 * w * w + w);
        let head_rho = head_kappa + w + 1;
        let head_mu = head_rho + w + 1;
        Layout {
            embed,
            film,
            gate,
            w_in,
            b_in,
            blocks,
            head_kappa,
            head_rho,
            head_mu,
        }
    }

    /// Fresh net tied to a noise schedule. Trunk weights are seeded
    /// Gaussian with 1/√fan_in scale, per-level gains start at one, and
    /// the output head starts at zero so an untrained net scores every
    /// input as flat.
    pub fn new(config: NetConfig, schedule: &NoiseSchedule, seed: u64) -> PairwiseScoreNet {
        let mut net = PairwiseScoreNet {
            config,
            sigmas: schedule.sigmas().to_vec(),
            params: vec![0.0; parameter_count(&config, schedule.levels())],
        };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let lay = net.layout();
        let w = config.width;
        let f = config.feature_width();
        let levels = schedule.levels();
        for i in 0..levels * EMBED_DIM {
            net.params[lay.embed + i] = standard_normal(&mut rng);
        }
        for level in 0..levels {
            for u in 0..w {
                net.params[lay.film + level * 2 * w + u] = 1.0; // gain
            }
            // Restraint gates start at one; the κ read-out starts at zero,
            // so the head still emits a flat field until trained.
            net.params[lay.gate + level] = 1.0;
        }
        let in_scale = 1.0 / libm::sqrt(f as f64);
        for i in 0..w * f {
            net.params[lay.w_in + i] = in_scale * standard_normal(&mut rng);
        }
        let blk_scale = 1.0 / libm::sqrt(3.0 * w as f64);
        for b in 0..config.blocks {
            let off = lay.blocks + b * (3 * w * w + w);
            for i in 0..3 * w * w {
                net.params[off + i] = blk_scale * standard_normal(&mut rng);
            }
        }
        // b_in, film shifts, block biases, w_out, b_out stay zero.
        net
    }

    /// Rebuild from serialized parts (checkpoint loading).
    pub fn from_parts(
        config: NetConfig,
        sigmas: Vec<f64>,
        params: Vec<f64>,
    ) -> Result<PairwiseScoreNet> {
        let expected = parameter_count(&config, sigmas.len());
        if params.len() != expected {
            return Err(Error::ShapeMismatch {
                expected,
                got: params.len(),
            });
        }
        if !params.iter().all(|p| p.is_finite()) {
            return Err(Error::InvalidInput("non-finite net parameter".into()));
        }
        NoiseSchedule::new(sigmas.clone())?;
        Ok(PairwiseScoreNet {
            config,
            sigmas,
            params,
        })
    }

    pub fn config(&self) -> &NetConfig {
        &self.config
    }

    pub fn levels(&self) -> usize {
        self.sigmas.len()
    }

    pub fn sigmas(&self) -> &[f64] {
        &self.sigmas
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    pub fn set_params(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.params.len() {
            return Err(Error::ShapeMismatch {
                expected: self.params.len(),
                got: params.len(),
            });
        }
        self.params.copy_from_slice(params);
        Ok(())
    }

    pub(crate) fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    /// Give the zero-initialized output head small random weights; used
    /// by tests that need a nonzero score field without training.
    pub fn randomize_head<R: RngCore + ?Sized>(&mut self, rng: &mut R) {
        let lay = self.layout();
        for off in [lay.head_kappa, lay.head_rho, lay.head_mu] {
            for i in 0..=self.config.width {
                self.params[off + i] = 0.1 * standard_normal(rng);
            }
        }
    }

    /// Score field for a squared distance matrix under a conditioning
    /// bundle at one noise level.
    pub fn forward(
        &self,
        dist: &DistanceMatrix,
        bundle: &ConditioningBundle,
        level: usize,
    ) -> Result<ScoreField> {
        if bundle.channels() != self.config.channels {
            return Err(Error::ShapeMismatch {
                expected: self.config.channels,
                got: bundle.channels(),
            });
        }
        if bundle.len() != dist.len() {
            return Err(Error::ShapeMismatch {
                expected: dist.len(),
                got: bundle.len(),
            });
        }
        let values =
            self.forward_with_features(dist.values(), dist.len(), level, &|i, j, out| {
                bundle.write_cell(i, j, out)
            })?;
        ScoreField::from_values(dist.len(), values)
    }

    /// Forward pass with caller-supplied conditioning features; `features`
    /// must fill exactly `config.channels` values per cell.
    pub fn forward_with_features(
        &self,
        dist_values: &[f64],
        len: usize,
        level: usize,
        features: &dyn Fn(usize, usize, &mut [f64]),
    ) -> Result<Vec<f64>> {
        let (h_last, _tape) = self.run_forward(dist_values, len, level, features, false)?;
        Ok(self.apply_head(&h_last, dist_values, len, level))
    }

    /// Per-cell head gain 1/(σ_k · L · (1 + d̃/DIST_SCALE)).
    fn head_gain(&self, dist: f64, len: usize, level: usize) -> f64 {
        1.0 / (self.sigmas[level] * len as f64 * (1.0 + dist / DIST_SCALE))
    }

    fn apply_head(
        &self,
        h_last: &[f64],
        dist_values: &[f64],
        len: usize,
        level: usize,
    ) -> Vec<f64> {
        let lay = self.layout();
        let w = self.config.width;
        let readout = |off: usize, cell: &[f64]| -> f64 {
            let mut acc = self.params[off + w];
            for (a, b) in self.params[off..off + w].iter().zip(cell.iter()) {
                acc += a * b;
            }
            acc
        };
        let inv_sigma = 1.0 / self.sigmas[level];
        let gate = self.params[lay.gate + level];
        h_last
            .chunks_exact(w)
            .zip(dist_values.iter())
            .map(|(cell, &dist)| {
                let kappa = readout(lay.head_kappa, cell);
                let rho = readout(lay.head_rho, cell);
                let mu = readout(lay.head_mu, cell);
                let raw = gate * kappa * (rho - dist / DIST_SCALE) * inv_sigma + mu;
                raw * self.head_gain(dist, len, level)
            })
            .collect()
    }

    /// Shared forward; when `keep_tape` is set, intermediate activations
    /// are retained for the hand-derived reverse pass.
    fn run_forward(
        &self,
        dist_values: &[f64],
        len: usize,
        level: usize,
        features: &dyn Fn(usize, usize, &mut [f64]),
        keep_tape: bool,
    ) -> Result<(Vec<f64>, Tape)> {
        if dist_values.len() != len * len {
            return Err(Error::ShapeMismatch {
                expected: len * len,
                got: dist_values.len(),
            });
        }
        if level >= self.sigmas.len() {
            return Err(Error::InvalidInput(format!("level {level} out of range")));
        }
        let lay = self.layout();
        let w = self.config.width;
        let f = self.config.feature_width();
        let c = self.config.channels;
        let cells = len * len;

        let embed =
            &self.params[lay.embed + level * EMBED_DIM..lay.embed + (level + 1) * EMBED_DIM];
        let gains = &self.params[lay.film + level * 2 * w..lay.film + level * 2 * w + w];
        let shifts = &self.params[lay.film + level * 2 * w + w..lay.film + (level + 1) * 2 * w];
        let w_in = &self.params[lay.w_in..lay.w_in + w * f];
        let b_in = &self.params[lay.b_in..lay.b_in + w];

        let mut tape = Tape::default();
        let mut feats = vec![0.0f64; if keep_tape { cells * f } else { f }];
        let mut pre = vec![0.0f64; if keep_tape { cells * w } else { 0 }];
        let mut h = vec![0.0f64; cells * w];

        let mut scratch = vec![0.0f64; f];
        for i in 0..len {
            for j in 0..len {
                let cell = i * len + j;
                let feat: &mut [f64] = if keep_tape {
                    &mut feats[cell * f..(cell + 1) * f]
                } else {
                    &mut scratch
                };
                let d = dist_values[cell];
                feat[0] = d / DIST_SCALE;
                rbf_features(d, &mut feat[1..1 + RBF_COUNT]);
                features(i, j, &mut feat[1 + RBF_COUNT..1 + RBF_COUNT + c]);
                feat[1 + RBF_COUNT + c..].copy_from_slice(embed);
                for u in 0..w {
                    let row = &w_in[u * f..(u + 1) * f];
                    let mut acc = b_in[u];
                    for (a, b) in row.iter().zip(feat.iter()) {
                        acc += a * b;
                    }
                    if keep_tape {
                        pre[cell * w + u] = acc;
                    }
                    h[cell * w + u] = libm::tanh(gains[u] * acc + shifts[u]);
                }
            }
        }
        if keep_tape {
            tape.feats = feats;
            tape.pre = pre;
            tape.h0 = h.clone();
        }

        for b in 0..self.config.blocks {
            let off = lay.blocks + b * (3 * w * w + w);
            let w_blk = &self.params[off..off + 3 * w * w];
            let b_blk = &self.params[off + 3 * w * w..off + 3 * w * w + w];

            let (rows, cols) = axial_means(&h, len, w);
            let mut h_next = h.clone();
            let mut t_store = if keep_tape {
                vec![0.0f64; cells * w]
            } else {
                Vec::new()
            };
            for i in 0..len {
                for j in 0..len {
                    let cell = i * len + j;
                    let h_cell = &h[cell * w..(cell + 1) * w];
                    let row = &rows[i * w..(i + 1) * w];
                    let col = &cols[j * w..(j + 1) * w];
                    for u in 0..w {
                        let wrow = &w_blk[u * 3 * w..(u + 1) * 3 * w];
                        let mut acc = b_blk[u];
                        for v in 0..w {
                            acc += wrow[v] * h_cell[v]
                                + wrow[w + v] * row[v]
                                + wrow[2 * w + v] * col[v];
                        }
                        let t = libm::tanh(acc);
                        h_next[cell * w + u] += t;
                        if keep_tape {
                            t_store[cell * w + u] = t;
                        }
                    }
                }
            }
            if keep_tape {
                tape.blocks.push(BlockTape {
                    h_in: h,
                    t: t_store,
                    rows,
                    cols,
                });
            }
            h = h_next;
        }
        Ok((h, tape))
    }

    /// Hand-derived reverse pass: parameter gradients for a loss whose
    /// gradient with respect to the emitted field is `d_field`.
    pub(crate) fn backward(
        &self,
        dist_values: &[f64],
        len: usize,
        level: usize,
        features: &dyn Fn(usize, usize, &mut [f64]),
        d_field: &[f64],
    ) -> Result<(Vec<f64>, Vec<f64>)> {
        let (h_last, tape) = self.run_forward(dist_values, len, level, features, true)?;
        let field = self.apply_head(&h_last, dist_values, len, level);

        let lay = self.layout();
        let w = self.config.width;
        let f = self.config.feature_width();
        let cells = len * len;
        let mut grads = vec![0.0f64; self.params.len()];

        // Head: h = (κ(ρ − q)/σ + μ)·gain with q = d̃/DIST_SCALE.
        let inv_sigma = 1.0 / self.sigmas[level];
        let readout = |off: usize, cell: &[f64]| -> f64 {
            let mut acc = self.params[off + w];
            for (a, b) in self.params[off..off + w].iter().zip(cell.iter()) {
                acc += a * b;
            }
            acc
        };
        let gate = self.params[lay.gate + level];
        let mut dh = vec![0.0f64; cells * w];
        for cell in 0..cells {
            let s = d_field[cell] * self.head_gain(dist_values[cell], len, level);
            if s == 0.0 {
                continue;
            }
            let h_cell = &h_last[cell * w..(cell + 1) * w];
            let kappa = readout(lay.head_kappa, h_cell);
            let rho = readout(lay.head_rho, h_cell);
            let q = dist_values[cell] / DIST_SCALE;
            grads[lay.gate + level] += s * kappa * (rho - q) * inv_sigma;
            let d_kappa = s * gate * (rho - q) * inv_sigma;
            let d_rho = s * gate * kappa * inv_sigma;
            let d_mu = s;
            for (off, d_out) in [
                (lay.head_kappa, d_kappa),
                (lay.head_rho, d_rho),
                (lay.head_mu, d_mu),
            ] {
                grads[off + w] += d_out;
                for u in 0..w {
                    grads[off + u] += d_out * h_cell[u];
                    dh[cell * w + u] += d_out * self.params[off + u];
                }
            }
        }

        // Trunk blocks, reversed.
        for b in (0..self.config.blocks).rev() {
            let off = lay.blocks + b * (3 * w * w + w);
            let w_blk = &self.params[off..off + 3 * w * w];
            let bt = &tape.blocks[b];

            let mut d_row = vec![0.0f64; len * w];
            let mut d_col = vec![0.0f64; len * w];
            let mut dh_in = dh.clone(); // residual path

            for i in 0..len {
                for j in 0..len {
                    let cell = i * len + j;
                    let h_cell = &bt.h_in[cell * w..(cell + 1) * w];
                    let row = &bt.rows[i * w..(i + 1) * w];
                    let col = &bt.cols[j * w..(j + 1) * w];
                    for u in 0..w {
                        let t = bt.t[cell * w + u];
                        let dz = dh[cell * w + u] * (1.0 - t * t);
                        if dz == 0.0 {
                            continue;
                        }
                        grads[off + 3 * w * w + u] += dz;
                        let wrow = &w_blk[u * 3 * w..(u + 1) * 3 * w];
                        let grow = &mut grads[off + u * 3 * w..off + (u + 1) * 3 * w];
                        for v in 0..w {
                            grow[v] += dz * h_cell[v];
                            grow[w + v] += dz * row[v];
                            grow[2 * w + v] += dz * col[v];
                            dh_in[cell * w + v] += dz * wrow[v];
                            d_row[i * w + v] += dz * wrow[w + v];
                            d_col[j * w + v] += dz * wrow[2 * w + v];
                        }
                    }
                }
            }
            // Mean aggregation spreads 1/len of the context gradient to
            // every cell in the row / column.
            let inv = 1.0 / len as f64;
            for i in 0..len {
                for j in 0..len {
                    let cell = i * len + j;
                    for v in 0..w {
                        dh_in[cell * w + v] += (d_row[i * w + v] + d_col[j * w + v]) * inv;
                    }
                }
            }
            dh = dh_in;
        }

        // Input projection, per-level modulation, and level embedding.
        let gains = &self.params[lay.film + level * 2 * w..lay.film + level * 2 * w + w];
        let w_in = &self.params[lay.w_in..lay.w_in + w * f];
        let c = self.config.channels;
        for cell in 0..cells {
            let feat = &tape.feats[cell * f..(cell + 1) * f];
            for u in 0..w {
                let h0 = tape.h0[cell * w + u];
                let dtanh = dh[cell * w + u] * (1.0 - h0 * h0);
                if dtanh == 0.0 {
                    continue;
                }
                let a = tape.pre[cell * w + u];
                grads[lay.film + level * 2 * w + u] += dtanh * a; // gain
                grads[lay.film + level * 2 * w + w + u] += dtanh; // shift
                let dz = dtanh * gains[u];
                grads[lay.b_in + u] += dz;
                let grow = &mut grads[lay.w_in + u * f..lay.w_in + (u + 1) * f];
                for (g, x) in grow.iter_mut().zip(feat.iter()) {
                    *g += dz * x;
                }
                let wrow = &w_in[u * f..(u + 1) * f];
                let ge =
                    &mut grads[lay.embed + level * EMBED_DIM..lay.embed + (level + 1) * EMBED_DIM];
                for e in 0..EMBED_DIM {
                    ge[e] += dz * wrow[1 + RBF_COUNT + c + e];
                }
            }
        }

        Ok((field, grads))
    }
}

fn axial_means(h: &[f64], len: usize, w: usize) -> (Vec<f64>, Vec<f64>) {
    let mut rows = vec![0.0f64; len * w];
    let mut cols = vec![0.0f64; len * w];
    for i in 0..len {
        for j in 0..len {
            let cell = (i * len + j) * w;
            for u in 0..w {
                rows[i * w + u] += h[cell + u];
                cols[j * w + u] += h[cell + u];
            }
        }
    }
    let inv = 1.0 / len as f64;
    for v in rows.iter_mut().chain(cols.iter_mut()) {
        *v *= inv;
    }
    (rows, cols)
}

#[derive(Default)]
struct Tape {
    feats: Vec<f64>,
    pre: Vec<f64>,
    h0: Vec<f64>,
    blocks: Vec<BlockTape>,
}

struct BlockTape {
    h_in: Vec<f64>,
    t: Vec<f64>,
    rows: Vec<f64>,
    cols: Vec<f64>,
}
