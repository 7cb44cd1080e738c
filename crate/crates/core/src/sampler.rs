//! Annealed Langevin dynamics over Cα coordinates, stagewise down a
//! descending noise schedule, plus the handedness resolution that picks
//! between a trace and its mirror image by comparing pseudo-dihedral
//! histograms against a reference distribution.

use alloc::vec::Vec;
use rand_core::RngCore;

use crate::conditioning::ConditioningBundle;
use crate::geometry::{center, dihedral, distance_matrix_into, mirror, Structure, Vec3};
use crate::noise::NoiseSchedule;
use crate::rng::{standard_normal, ChaCha8Rng, SeedableRng};
use crate::score::CoordinateScore;
use crate::{Error, Result};

/// Configuration of one annealed sampling run.
///
/// `decoys` is carried here for drivers that fan out multiple
/// trajectories; a single [`anneal_sample`] call produces one decoy.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplerConfig {
    pub schedule: NoiseSchedule,
    /// Langevin iterations per stage (T). Zero is allowed and leaves the
    /// initialization untouched.
    pub iterations_per_stage: usize,
    /// Reference step size λ₀; the stage step size is λ_k = λ₀·σ_k².
    pub reference_step: f64,
    pub decoys: usize,
    pub seed: u64,
    pub hirm_enabled: bool,
    /// Record an intra-stage snapshot every this many iterations
    /// (0 = stage ends only).
    pub snapshot_stride: usize,
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.reference_step > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "reference step must be positive, got {}",
                self.reference_step
            )));
        }
        if self.decoys == 0 {
            return Err(Error::InvalidConfig("need at least one decoy".into()));
        }
        Ok(())
    }
}

/// Coordinates captured mid-run.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub stage: usize,
    pub iteration: usize,
    pub coords: Vec<Vec3>,
}

/// Stage-end coordinates (always K entries) plus optional intra-stage
/// snapshots.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub stage_ends: Vec<Vec<Vec3>>,
    pub snapshots: Vec<Snapshot>,
}

/// I.i.d. standard-normal initialization of L Cα positions.
pub fn init_structure<R: RngCore + ?Sized>(len: usize, rng: &mut R) -> Result<Vec<Vec3>> {
    if len < 4 {
        return Err(Error::InvalidInput(format!(
            "need at least 4 residues, got {len}"
        )));
    }
    Ok((0..len)
        .map(|_| {
            [
                standard_normal(rng),
                standard_normal(rng),
                standard_normal(rng),
            ]
        })
        .collect())
}

/// Step size λ_k = λ₀·σ_k² for the 0-based stage index.
pub fn step_size(schedule: &NoiseSchedule, stage: usize, reference_step: f64) -> Result<f64> {
    let sigma = schedule.sigma(stage)?;
    Ok(reference_step * sigma * sigma)
}

/// One Langevin update: X̂′ = X̂ + (λ_k/2)·G + √λ_k·V.
pub fn langevin_step<M: CoordinateScore + ?Sized, R: RngCore + ?Sized>(
    coords: &[Vec3],
    model: &M,
    bundle: &ConditioningBundle,
    stage: usize,
    step: f64,
    rng: &mut R,
) -> Result<Vec<Vec3>> {
    let grads = model.evaluate(coords, bundle, stage)?;
    let half = 0.5 * step;
    let noise_scale = libm::sqrt(step);
    let mut out = Vec::with_capacity(coords.len());
    for (p, g) in coords.iter().zip(grads.iter()) {
        if !g.iter().all(|v| v.is_finite()) {
            return Err(Error::SamplingFailure {
                stage,
                iteration: 0,
                reason: "non-finite gradient".into(),
            });
        }
        out.push([
            p[0] + half * g[0] + noise_scale * standard_normal(rng),
            p[1] + half * g[1] + noise_scale * standard_normal(rng),
            p[2] + half * g[2] + noise_scale * standard_normal(rng),
        ]);
    }
    Ok(out)
}

/// Stage-stepped annealed Langevin run. Drivers that need per-stage
/// timing or custom snapshot handling advance it one stage at a time;
/// [`anneal_sample`] wraps the whole loop.
pub struct AnnealRun<'a, M: CoordinateScore + ?Sized> {
    model: &'a M,
    bundle: &'a ConditioningBundle,
    config: &'a SamplerConfig,
    hirm_reference: Option<&'a DihedralHistogram>,
    coords: Vec<Vec3>,
    rng: ChaCha8Rng,
    stage: usize,
    dist_buf: Vec<f64>,
}

impl<'a, M: CoordinateScore + ?Sized> AnnealRun<'a, M> {
    /// Validates the configuration and draws the initial coordinates from
    /// the prior.
    pub fn new(
        model: &'a M,
        bundle: &'a ConditioningBundle,
        config: &'a SamplerConfig,
        hirm_reference: Option<&'a DihedralHistogram>,
    ) -> Result<Self> {
        config.validate()?;
        if config.hirm_enabled && hirm_reference.is_none() {
            return Err(Error::InvalidConfig(
                "handedness resolution enabled but no reference histogram given".into(),
            ));
        }
        if model.levels() != config.schedule.levels() {
            return Err(Error::InvalidConfig(format!(
                "model conditioned on {} levels, schedule has {}",
                model.levels(),
                config.schedule.levels()
            )));
        }
        let len = bundle.len();
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let coords = init_structure(len, &mut rng)?;
        Ok(AnnealRun {
            model,
            bundle,
            config,
            hirm_reference,
            coords,
            rng,
            stage: 0,
            dist_buf: vec![0.0; len * len],
        })
    }

    pub fn coords(&self) -> &[Vec3] {
        &self.coords
    }

    pub fn stage(&self) -> usize {
        self.stage
    }

    pub fn finished(&self) -> bool {
        self.stage >= self.config.schedule.levels()
    }

    /// Run the next stage's Langevin iterations; snapshots (if requested
    /// by the config) are appended to `snapshots`.
    pub fn run_stage(&mut self, snapshots: &mut Vec<Snapshot>) -> Result<()> {
        let stage = self.stage;
        if stage >= self.config.schedule.levels() {
            return Err(Error::InvalidInput("all stages already run".into()));
        }
        let step = step_size(&self.config.schedule, stage, self.config.reference_step)?;
        let iterations = self.config.iterations_per_stage;
        for t in 0..iterations {
            // Recompute the pair matrix every iteration; a trajectory
            // gone non-finite is caught here with stage/iteration context.
            if let Err(row) = distance_matrix_into(&self.coords, &mut self.dist_buf) {
                return Err(Error::SamplingFailure {
                    stage,
                    iteration: t,
                    reason: format!("non-finite coordinate at residue {row}"),
                });
            }
            self.coords = langevin_step(
                &self.coords,
                self.model,
                self.bundle,
                stage,
                step,
                &mut self.rng,
            )
            .map_err(|e| match e {
                Error::SamplingFailure { reason, .. } => Error::SamplingFailure {
                    stage,
                    iteration: t,
                    reason,
                },
                other => other,
            })?;
            if self.config.snapshot_stride > 0 && (t + 1) % self.config.snapshot_stride == 0 {
                snapshots.push(Snapshot {
                    stage,
                    iteration: t + 1,
                    coords: self.coords.clone(),
                });
            }
        }
        if iterations > 0 {
            if self.config.hirm_enabled {
                let reference = self.hirm_reference.expect("checked in new");
                self.coords = resolve_handedness(&self.coords, reference)?;
            }
            self.coords = center(&self.coords);
        }
        self.stage += 1;
        Ok(())
    }
}

/// Full annealed run: stage k hands its terminal coordinates to stage
/// k+1; handedness is resolved (when enabled) and the chain re-centered
/// at the end of every stage. Returns the final structure and the
/// trajectory record.
pub fn anneal_sample<M: CoordinateScore + ?Sized>(
    model: &M,
    bundle: &ConditioningBundle,
    config: &SamplerConfig,
    hirm_reference: Option<&DihedralHistogram>,
) -> Result<(Structure, Trajectory)> {
    let mut run = AnnealRun::new(model, bundle, config, hirm_reference)?;
    let mut trajectory = Trajectory {
        stage_ends: Vec::with_capacity(config.schedule.levels()),
        snapshots: Vec::new(),
    };
    while !run.finished() {
        run.run_stage(&mut trajectory.snapshots)?;
        trajectory.stage_ends.push(run.coords().to_vec());
    }
    let structure = Structure::new(bundle.sequence().to_vec(), run.coords().to_vec())?;
    Ok((structure, trajectory))
}

/// Normalized histogram of Cα pseudo-dihedral angles over (−π, π].
#[derive(Debug, Clone, PartialEq)]
pub struct DihedralHistogram {
    frequencies: Vec<f64>,
}

/// Additive smoothing mass per bin before normalization.
const HISTOGRAM_SMOOTHING: f64 = 1e-4;

impl DihedralHistogram {
    pub fn bins(&self) -> usize {
        self.frequencies.len()
    }

    pub fn frequencies(&self) -> &[f64] {
        &self.frequencies
    }

    /// Rebuild from stored frequencies (e.g. a reference file); they must
    /// be positive and sum to 1 within 1e-6.
    pub fn from_frequencies(frequencies: Vec<f64>) -> Result<DihedralHistogram> {
        if frequencies.is_empty() {
            return Err(Error::InvalidInput("empty histogram".into()));
        }
        if !frequencies.iter().all(|f| f.is_finite() && *f > 0.0) {
            return Err(Error::InvalidInput(
                "histogram frequencies must be positive".into(),
            ));
        }
        let total: f64 = frequencies.iter().sum();
        if (total - 1.0).abs() > 1e-6 {
            return Err(Error::InvalidInput(format!(
                "histogram frequencies sum to {total}, expected 1"
            )));
        }
        Ok(DihedralHistogram { frequencies })
    }

    fn from_counts(counts: &[f64]) -> DihedralHistogram {
        let total: f64 = counts.iter().sum::<f64>() + HISTOGRAM_SMOOTHING * counts.len() as f64;
        DihedralHistogram {
            frequencies: counts
                .iter()
                .map(|c| (c + HISTOGRAM_SMOOTHING) / total)
                .collect(),
        }
    }
}

fn bin_of(angle: f64, bins: usize) -> usize {
    let width = 2.0 * core::f64::consts::PI / bins as f64;
    let idx = libm::floor((angle + core::f64::consts::PI) / width) as isize;
    idx.clamp(0, bins as isize - 1) as usize
}

/// Dihedral angles of consecutive Cα quadruples; degenerate quadruples
/// are skipped.
fn chain_dihedrals(coords: &[Vec3]) -> Vec<f64> {
    let mut out = Vec::new();
    for window in coords.windows(4) {
        if let Ok(angle) = dihedral(window[0], window[1], window[2], window[3]) {
            out.push(angle);
        }
    }
    out
}

/// Pool consecutive-Cα dihedrals over a structure set into a smoothed,
/// normalized histogram.
pub fn build_reference_histogram(
    structures: &[Structure],
    bins: usize,
) -> Result<DihedralHistogram> {
    if bins == 0 {
        return Err(Error::InvalidConfig(
            "histogram needs at least one bin".into(),
        ));
    }
    let mut counts = vec![0.0; bins];
    let mut pooled = 0usize;
    for structure in structures {
        for angle in chain_dihedrals(structure.coords()) {
            counts[bin_of(angle, bins)] += 1.0;
            pooled += 1;
        }
    }
    if pooled == 0 {
        return Err(Error::InvalidInput(
            "no non-degenerate dihedrals in the structure pool".into(),
        ));
    }
    Ok(DihedralHistogram::from_counts(&counts))
}

/// KL divergence Σ_b P_b·ln(P_b/Q_b) with 0·ln 0 = 0; Q must be strictly
/// positive (smoothed).
pub fn kl_divergence(p: &DihedralHistogram, q: &DihedralHistogram) -> Result<f64> {
    if p.bins() != q.bins() {
        return Err(Error::ShapeMismatch {
            expected: p.bins(),
            got: q.bins(),
        });
    }
    let mut acc = 0.0;
    for (&pb, &qb) in p.frequencies().iter().zip(q.frequencies().iter()) {
        if qb <= 0.0 {
            return Err(Error::InvalidInput(
                "reference histogram has a zero bin".into(),
            ));
        }
        if pb > 0.0 {
            acc += pb * libm::log(pb / qb);
        }
    }
    Ok(acc)
}

/// Tie tolerance below which the original orientation is kept.
const HANDEDNESS_TIE_TOL: f64 = 1e-12;

/// Return whichever of `coords` and its mirror image has the lower
/// KL divergence of its dihedral histogram against the reference. The
/// distance matrix is unaffected either way.
pub fn resolve_handedness(coords: &[Vec3], reference: &DihedralHistogram) -> Result<Vec<Vec3>> {
    if coords.len() < 4 {
        return Err(Error::InvalidInput(format!(
            "need at least 4 residues, got {}",
            coords.len()
        )));
    }
    let angles = chain_dihedrals(coords);
    if angles.is_empty() {
        return Err(Error::HandednessUndecidable);
    }
    let bins = reference.bins();
    let mut counts = vec![0.0; bins];
    let mut mirrored_counts = vec![0.0; bins];
    for angle in &angles {
        counts[bin_of(*angle, bins)] += 1.0;
        // The mirror image has the same quadruples with flipped signs.
        mirrored_counts[bin_of(-*angle, bins)] += 1.0;
    }
    let original = kl_divergence(&DihedralHistogram::from_counts(&counts), reference)?;
    let mirrored = kl_divergence(&DihedralHistogram::from_counts(&mirrored_counts), reference)?;
    if mirrored < original - HANDEDNESS_TIE_TOL {
        Ok(mirror(coords))
    } else {
        Ok(coords.to_vec())
    }
}
