//! Score models over distance-matrix representations and the exact chain
//! rule that pulls their L×L gradient estimates back to coordinates.
//!
//! A [`CoordinateScore`] yields the estimated gradient of the perturbed
//! data log-density with respect to Cα coordinates. Two implementations:
//! the analytic oracle (exact score of the Gaussian perturbation kernel
//! around a known native structure) and [`PairwiseScoreNet`], a compact
//! learnable pairwise network trained by denoising score matching.

mod net;
mod train;

pub use net::{parameter_count, NetConfig, PairwiseScoreNet, DIST_SCALE, EMBED_DIM};
pub use train::{
    eval_loss, net_sample_grad, train, train_with_validation, TrainConfig, TrainReport,
};

use alloc::vec::Vec;
use rand_core::RngCore;

use crate::conditioning::ConditioningBundle;
use crate::geometry::{distance_matrix, Structure, Vec3};
use crate::linalg::sub;
use crate::noise::{perturb, NoiseSchedule};
use crate::rng::uniform_index;
use crate::{Error, Result};

/// L×L gradient estimate over the squared distance matrix. No symmetry is
/// required; the chain rule symmetrizes via h_ij + h_ji.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreField {
    len: usize,
    values: Vec<f64>,
}

impl ScoreField {
    pub fn from_values(len: usize, values: Vec<f64>) -> Result<ScoreField> {
        if values.len() != len * len {
            return Err(Error::ShapeMismatch {
                expected: len * len,
                got: values.len(),
            });
        }
        if !values.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidInput("non-finite score field entry".into()));
        }
        Ok(ScoreField { len, values })
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.len + j]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// Exact gradient of Σ_{ij} h_ij · d_ij(X) with respect to X at fixed H:
/// g_i = Σ_j 2 (h_ij + h_ji)(x_i − x_j).
pub fn chain_rule_gradients(field: &ScoreField, coords: &[Vec3]) -> Result<Vec<Vec3>> {
    let n = coords.len();
    if field.len() != n {
        return Err(Error::ShapeMismatch {
            expected: n,
            got: field.len(),
        });
    }
    let mut grads = vec![[0.0; 3]; n];
    for i in 0..n {
        let mut g = [0.0; 3];
        for j in 0..n {
            if j == i {
                continue;
            }
            let w = 2.0 * (field.get(i, j) + field.get(j, i));
            let d = sub(coords[i], coords[j]);
            g[0] += w * d[0];
            g[1] += w * d[1];
            g[2] += w * d[2];
        }
        grads[i] = g;
    }
    Ok(grads)
}

/// Adjoint of [`chain_rule_gradients`] in H: given ∂L/∂G, returns ∂L/∂H
/// as raw row-major values. ∂L/∂h_pq = 2 (δ_p − δ_q)·(x_p − x_q) where
/// δ_i = ∂L/∂g_i.
pub(crate) fn chain_rule_backward(d_grads: &[Vec3], coords: &[Vec3]) -> Vec<f64> {
    let n = coords.len();
    debug_assert_eq!(d_grads.len(), n);
    let mut d_field = vec![0.0; n * n];
    for p in 0..n {
        for q in 0..n {
            if p == q {
                continue;
            }
            let delta = sub(d_grads[p], d_grads[q]);
            let d = sub(coords[p], coords[q]);
            d_field[p * n + q] = 2.0 * (delta[0] * d[0] + delta[1] * d[1] + delta[2] * d[2]);
        }
    }
    d_field
}

/// A model producing estimated log-density gradients over coordinates.
///
/// Evaluation is read-only; implementations are safe to share across
/// sampling workers.
pub trait CoordinateScore {
    /// Gradient estimate at `coords` for the given schedule level.
    fn evaluate(
        &self,
        coords: &[Vec3],
        bundle: &ConditioningBundle,
        level: usize,
    ) -> Result<Vec<Vec3>>;

    /// Number of noise levels the model is conditioned on.
    fn levels(&self) -> usize;
}

/// The perfect score around a known native structure:
/// evaluate(X̂, ·, k) = (X_native − X̂)/σ_k². Ignores the bundle.
#[derive(Debug, Clone)]
pub struct OracleScore {
    native: Structure,
    schedule: NoiseSchedule,
}

impl OracleScore {
    pub fn native(&self) -> &Structure {
        &self.native
    }
}

/// Build the analytic oracle used for sampler validation and as the
/// training target reference.
pub fn oracle_score(native: Structure, schedule: NoiseSchedule) -> OracleScore {
    OracleScore { native, schedule }
}

impl CoordinateScore for OracleScore {
    fn evaluate(
        &self,
        coords: &[Vec3],
        _bundle: &ConditioningBundle,
        level: usize,
    ) -> Result<Vec<Vec3>> {
        if coords.len() != self.native.len() {
            return Err(Error::ShapeMismatch {
                expected: self.native.len(),
                got: coords.len(),
            });
        }
        let sigma = self.schedule.sigma(level)?;
        let inv = 1.0 / (sigma * sigma);
        Ok(self
            .native
            .coords()
            .iter()
            .zip(coords.iter())
            .map(|(x, xh)| {
                [
                    (x[0] - xh[0]) * inv,
                    (x[1] - xh[1]) * inv,
                    (x[2] - xh[2]) * inv,
                ]
            })
            .collect())
    }

    fn levels(&self) -> usize {
        self.schedule.levels()
    }
}

/// Network-backed score: computes the squared distance matrix of the
/// input coordinates, runs the pairwise net to get H, then applies the
/// chain rule.
#[derive(Debug, Clone)]
pub struct NetScore {
    net: PairwiseScoreNet,
}

impl NetScore {
    pub fn net(&self) -> &PairwiseScoreNet {
        &self.net
    }
}

/// Wrap a trained net as a [`CoordinateScore`].
pub fn net_score(net: PairwiseScoreNet) -> NetScore {
    NetScore { net }
}

impl CoordinateScore for NetScore {
    fn evaluate(
        &self,
        coords: &[Vec3],
        bundle: &ConditioningBundle,
        level: usize,
    ) -> Result<Vec<Vec3>> {
        let dist = distance_matrix(coords)?;
        let field = self.net.forward(&dist, bundle, level)?;
        chain_rule_gradients(&field, coords)
    }

    fn levels(&self) -> usize {
        self.net.levels()
    }
}

/// One deterministic denoising-score-matching term:
/// σ_k²/2 · ‖model(X̃) − (X − X̃)/σ_k²‖²_F for a fixed perturbation X̃.
pub fn dsm_sample_loss<M: CoordinateScore + ?Sized>(
    model: &M,
    structure: &Structure,
    bundle: &ConditioningBundle,
    perturbed: &[Vec3],
    level: usize,
    schedule: &NoiseSchedule,
) -> Result<f64> {
    let sigma = schedule.sigma(level)?;
    let estimate = model.evaluate(perturbed, bundle, level)?;
    let inv = 1.0 / (sigma * sigma);
    let mut acc = 0.0;
    for (x, (xt, g)) in structure
        .coords()
        .iter()
        .zip(perturbed.iter().zip(estimate.iter()))
    {
        for axis in 0..3 {
            let diff = g[axis] - (x[axis] - xt[axis]) * inv;
            acc += diff * diff;
        }
    }
    Ok(0.5 * sigma * sigma * acc)
}

/// Denoising score matching loss over a batch: each structure draws a
/// uniform level and a fresh Gaussian perturbation; the weighted squared
/// errors are averaged with the 1/2 factor already applied.
pub fn dsm_loss<M: CoordinateScore + ?Sized, R: RngCore + ?Sized>(
    model: &M,
    batch: &[(&Structure, &ConditioningBundle)],
    schedule: &NoiseSchedule,
    rng: &mut R,
) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::InvalidInput("empty batch".into()));
    }
    let mut total = 0.0;
    for (structure, bundle) in batch {
        let level = uniform_index(rng, schedule.levels());
        let sigma = schedule.sigma(level)?;
        let perturbed = perturb(structure.coords(), sigma, rng);
        total += dsm_sample_loss(model, structure, bundle, &perturbed, level, schedule)?;
    }
    Ok(total / batch.len() as f64)
}
