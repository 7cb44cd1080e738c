//! Structure quality scores: lDDT-Ca (superposition-free, mirror
//! invariant), GDT-TS (superposition-based, handedness sensitive), and
//! minimal RMSD over proper rigid motions.

use alloc::vec::Vec;

use crate::geometry::{kabsch_superpose, squared_distance, Vec3};
use crate::{Error, Result};

/// Metric hyperparameters, defaulting to the published lDDT and GDT-TS
/// conventions.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricParams {
    /// lDDT inclusion radius R₀ (Å) on native distances.
    pub lddt_radius: f64,
    /// lDDT tolerance thresholds (Å), strictly increasing.
    pub lddt_thresholds: Vec<f64>,
    /// Minimum residue-index separation of scored pairs.
    pub min_separation: usize,
    /// GDT distance thresholds (Å), strictly increasing.
    pub gdt_thresholds: Vec<f64>,
}

impl Default for MetricParams {
    fn default() -> Self {
        MetricParams {
            lddt_radius: 15.0,
            lddt_thresholds: vec![0.5, 1.0, 2.0, 4.0],
            min_separation: 1,
            gdt_thresholds: vec![1.0, 2.0, 4.0, 8.0],
        }
    }
}

impl MetricParams {
    pub fn validate(&self) -> Result<()> {
        for list in [&self.lddt_thresholds, &self.gdt_thresholds] {
            if list.is_empty() {
                return Err(Error::InvalidConfig("empty threshold list".into()));
            }
            if !list.windows(2).all(|w| w[0] < w[1]) || list[0] <= 0.0 {
                return Err(Error::InvalidConfig(
                    "thresholds must be positive and strictly increasing".into(),
                ));
            }
        }
        if self.lddt_radius <= *self.lddt_thresholds.last().unwrap() {
            return Err(Error::InvalidConfig(
                "inclusion radius must exceed the largest lDDT threshold".into(),
            ));
        }
        Ok(())
    }
}

fn check_lengths(pred: &[Vec3], native: &[Vec3]) -> Result<()> {
    if pred.len() != native.len() {
        return Err(Error::ShapeMismatch {
            expected: native.len(),
            got: pred.len(),
        });
    }
    Ok(())
}

/// lDDT on Cα distances: over native pairs with separation ≥
/// `min_separation` and native distance < R₀, the fraction whose
/// pred/native distance difference falls under each threshold, averaged
/// over thresholds. Reads only intra-structure distances, so it is
/// invariant to rigid motion and to mirroring of either argument.
pub fn lddt_ca(pred: &[Vec3], native: &[Vec3], params: &MetricParams) -> Result<f64> {
    check_lengths(pred, native)?;
    params.validate()?;
    let n = native.len();
    let mut preserved = vec![0usize; params.lddt_thresholds.len()];
    let mut included = 0usize;
    for i in 0..n {
        for j in (i + 1)..n {
            if j - i < params.min_separation {
                continue;
            }
            let native_dist = libm::sqrt(squared_distance(native[i], native[j]));
            if native_dist >= params.lddt_radius {
                continue;
            }
            included += 1;
            let pred_dist = libm::sqrt(squared_distance(pred[i], pred[j]));
            let diff = (pred_dist - native_dist).abs();
            for (slot, &threshold) in preserved.iter_mut().zip(&params.lddt_thresholds) {
                if diff < threshold {
                    *slot += 1;
                }
            }
        }
    }
    if included == 0 {
        return Err(Error::InvalidInput(
            "no native pairs inside the inclusion radius".into(),
        ));
    }
    let score = preserved
        .iter()
        .map(|&c| c as f64 / included as f64)
        .sum::<f64>()
        / preserved.len() as f64;
    Ok(score)
}

/// GDT-TS: mean over thresholds of the largest residue fraction that can
/// be brought within the threshold by a proper-rotation superposition.
///
/// The maximization is approximated by iterative superposition refinement
/// seeded from every contiguous window of lengths L, L/2, and L/4;
/// reflections are never considered, which is what makes the score
/// handedness sensitive.
pub fn gdt_ts(pred: &[Vec3], native: &[Vec3], params: &MetricParams) -> Result<f64> {
    check_lengths(pred, native)?;
    params.validate()?;
    let n = native.len();
    if n < 3 {
        return Err(Error::InvalidInput(format!(
            "GDT-TS needs at least 3 residues, got {n}"
        )));
    }

    let mut window_lengths = vec![n, (n / 2).max(3), (n / 4).max(3)];
    window_lengths.dedup();

    let mut best = vec![0usize; params.gdt_thresholds.len()];
    let mut scratch_pred: Vec<Vec3> = Vec::with_capacity(n);
    let mut scratch_native: Vec<Vec3> = Vec::with_capacity(n);

    for &len in &window_lengths {
        for start in 0..=(n - len) {
            let seed: Vec<usize> = (start..start + len).collect();
            for (t, &threshold) in params.gdt_thresholds.iter().enumerate() {
                let count = refine_superposition(
                    pred,
                    native,
                    &seed,
                    threshold,
                    &mut scratch_pred,
                    &mut scratch_native,
                )?;
                best[t] = best[t].max(count);
            }
        }
    }

    let score = best.iter().map(|&c| c as f64 / n as f64).sum::<f64>() / best.len() as f64;
    Ok(score)
}

const GDT_REFINE_ITERATIONS: usize = 20;

/// Superpose on the seed subset, then iterate: re-superpose on the set of
/// residues within the threshold until that set stops changing. Returns
/// the largest within-threshold count seen.
fn refine_superposition(
    pred: &[Vec3],
    native: &[Vec3],
    seed: &[usize],
    threshold: f64,
    scratch_pred: &mut Vec<Vec3>,
    scratch_native: &mut Vec<Vec3>,
) -> Result<usize> {
    let threshold_sq = threshold * threshold;
    let mut subset: Vec<usize> = seed.to_vec();
    let mut best = 0usize;
    for _ in 0..GDT_REFINE_ITERATIONS {
        scratch_pred.clear();
        scratch_native.clear();
        for &i in &subset {
            scratch_pred.push(pred[i]);
            scratch_native.push(native[i]);
        }
        let sup = kabsch_superpose(scratch_pred, scratch_native)?;
        let within: Vec<usize> = (0..pred.len())
            .filter(|&i| squared_distance(sup.apply(pred[i]), native[i]) <= threshold_sq)
            .collect();
        best = best.max(within.len());
        if within.len() < 3 || within == subset {
            break;
        }
        subset = within;
    }
    Ok(best)
}

/// Minimal RMSD over proper rigid motions.
pub fn rmsd(pred: &[Vec3], native: &[Vec3]) -> Result<f64> {
    check_lengths(pred, native)?;
    Ok(kabsch_superpose(pred, native)?.rmsd)
}
