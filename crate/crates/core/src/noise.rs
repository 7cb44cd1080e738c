//! Noise schedules, Gaussian coordinate perturbation, and the exact score
//! of the perturbation kernel used as the training target.

use alloc::vec::Vec;
use rand_core::RngCore;

use crate::geometry::Vec3;
use crate::rng::standard_normal;
use crate::{Error, Result};

/// Strictly descending noise standard deviations σ₁ > … > σ_K > 0 (Å).
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSchedule {
    sigmas: Vec<f64>,
}

impl NoiseSchedule {
    pub fn new(sigmas: Vec<f64>) -> Result<NoiseSchedule> {
        if sigmas.is_empty() {
            return Err(Error::InvalidConfig("empty noise schedule".into()));
        }
        for w in sigmas.windows(2) {
            if !(w[0] > w[1]) {
                return Err(Error::InvalidConfig(format!(
                    "schedule must be strictly descending, got {} then {}",
                    w[0], w[1]
                )));
            }
        }
        if *sigmas.last().unwrap() <= 0.0 || !sigmas.iter().all(|s| s.is_finite()) {
            return Err(Error::InvalidConfig(
                "sigmas must be positive finite".into(),
            ));
        }
        Ok(NoiseSchedule { sigmas })
    }

    pub fn levels(&self) -> usize {
        self.sigmas.len()
    }

    pub fn sigmas(&self) -> &[f64] {
        &self.sigmas
    }

    /// σ at 0-based level index.
    pub fn sigma(&self, level: usize) -> Result<f64> {
        self.sigmas
            .get(level)
            .copied()
            .ok_or_else(|| Error::InvalidInput(format!("level {level} out of range")))
    }
}

/// Geometric (log-uniform) schedule with exact endpoints:
/// σ_k = σ_max · (σ_min/σ_max)^{k/(K−1)} for k = 0…K−1.
pub fn geometric_schedule(sigma_max: f64, sigma_min: f64, levels: usize) -> Result<NoiseSchedule> {
    if !(sigma_max > sigma_min && sigma_min > 0.0) {
        return Err(Error::InvalidConfig(format!(
            "need sigma_max > sigma_min > 0, got {sigma_max} and {sigma_min}"
        )));
    }
    if levels < 2 {
        return Err(Error::InvalidConfig(format!(
            "need at least 2 levels, got {levels}"
        )));
    }
    let ratio = sigma_min / sigma_max;
    let mut sigmas = Vec::with_capacity(levels);
    for k in 0..levels {
        let s = if k == 0 {
            sigma_max
        } else if k == levels - 1 {
            sigma_min
        } else {
            sigma_max * libm::pow(ratio, k as f64 / (levels - 1) as f64)
        };
        sigmas.push(s);
    }
    NoiseSchedule::new(sigmas)
}

/// Add i.i.d. N(0, σ²) noise to every scalar coordinate.
pub fn perturb<R: RngCore + ?Sized>(coords: &[Vec3], sigma: f64, rng: &mut R) -> Vec<Vec3> {
    coords
        .iter()
        .map(|p| {
            [
                p[0] + sigma * standard_normal(rng),
                p[1] + sigma * standard_normal(rng),
                p[2] + sigma * standard_normal(rng),
            ]
        })
        .collect()
}

/// Gradient of log q_σ(X̃ | X) with respect to X̃: (X − X̃)/σ².
pub fn true_score(coords: &[Vec3], perturbed: &[Vec3], sigma: f64) -> Result<Vec<Vec3>> {
    if coords.len() != perturbed.len() {
        return Err(Error::ShapeMismatch {
            expected: coords.len(),
            got: perturbed.len(),
        });
    }
    let inv = 1.0 / (sigma * sigma);
    Ok(coords
        .iter()
        .zip(perturbed.iter())
        .map(|(x, xt)| {
            [
                (x[0] - xt[0]) * inv,
                (x[1] - xt[1]) * inv,
                (x[2] - xt[2]) * inv,
            ]
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{ChaCha8Rng, SeedableRng};

    #[test]
    fn geometric_schedule_reference_defaults() {
        let s = geometric_schedule(10.0, 0.01, 32).unwrap();
        assert_eq!(s.levels(), 32);
        assert_eq!(s.sigma(0).unwrap(), 10.0);
        assert_eq!(s.sigma(31).unwrap(), 0.01);
    }

    #[test]
    fn geometric_schedule_constant_ratio() {
        let s = geometric_schedule(10.0, 0.01, 32).unwrap();
        let expected = libm::pow(0.001, 1.0 / 31.0);
        assert!((s.sigma(1).unwrap() / s.sigma(0).unwrap() - 0.8002).abs() < 1e-4);
        for w in s.sigmas().windows(2) {
            assert!((w[1] / w[0] - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn geometric_schedule_rejects_bad_config() {
        assert!(geometric_schedule(1.0, 1.0, 8).is_err());
        assert!(geometric_schedule(10.0, 0.01, 1).is_err());
        assert!(geometric_schedule(0.0, -1.0, 8).is_err());
    }

    #[test]
    fn perturb_tiny_sigma_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let coords = vec![[1.0, 2.0, 3.0], [-1.0, 0.5, 0.0]];
        let out = perturb(&coords, 1e-12, &mut rng);
        for (a, b) in coords.iter().zip(out.iter()) {
            for ax in 0..3 {
                assert!((a[ax] - b[ax]).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn perturb_moments() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let l = 4;
        let coords = vec![[0.0; 3]; l];
        let draws = 100_000 / l; // ~1e5 scalar samples per axis set
        let sigma = 2.0;
        let mut sum = 0.0;
        let mut sum_sq = 0.0;
        let mut count = 0usize;
        for _ in 0..draws {
            let out = perturb(&coords, sigma, &mut rng);
            for p in out {
                for ax in 0..3 {
                    sum += p[ax];
                    sum_sq += p[ax] * p[ax];
                    count += 1;
                }
            }
        }
        let mean = sum / count as f64;
        let std = libm::sqrt(sum_sq / count as f64 - mean * mean);
        // 3σ/√N bound on the mean of N ~ 3·L·1e5/L scalar draws.
        let bound = 3.0 * sigma / libm::sqrt(count as f64);
        assert!(mean.abs() < bound, "mean {mean} bound {bound}");
        assert!((std - sigma).abs() / sigma < 0.01, "std {std}");
    }

    #[test]
    fn perturb_reproducible() {
        let coords = vec![[0.5, -0.5, 1.0]; 6];
        let a = perturb(&coords, 1.5, &mut ChaCha8Rng::seed_from_u64(9));
        let b = perturb(&coords, 1.5, &mut ChaCha8Rng::seed_from_u64(9));
        assert_eq!(a, b);
    }

    #[test]
    fn true_score_trivial_values() {
        let x = vec![[1.0, 1.0, 1.0]; 3];
        assert_eq!(true_score(&x, &x, 0.7).unwrap(), vec![[0.0, 0.0, 0.0]; 3]);
        let xt = vec![[0.0, 0.0, 0.0]; 3];
        let g = true_score(&x, &xt, 2.0).unwrap();
        assert_eq!(g, vec![[0.25, 0.25, 0.25]; 3]);
        assert!(true_score(&x, &xt[..2], 1.0).is_err());
    }

    /// Central finite differences of the closed-form Gaussian log density
    /// log N(X̃; X, σ²I) with respect to X̃.
    #[test]
    fn true_score_matches_log_density_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let x: Vec<Vec3> = (0..5)
            .map(|_| {
                [
                    standard_normal(&mut rng),
                    standard_normal(&mut rng),
                    standard_normal(&mut rng),
                ]
            })
            .collect();
        let sigma = 0.8;
        let xt = perturb(&x, sigma, &mut rng);
        let log_density = |pt: &[Vec3]| -> f64 {
            let mut acc = 0.0;
            for (a, b) in x.iter().zip(pt.iter()) {
                for ax in 0..3 {
                    let d = b[ax] - a[ax];
                    acc += d * d;
                }
            }
            -acc / (2.0 * sigma * sigma)
        };
        let score = true_score(&x, &xt, sigma).unwrap();
        let h = 1e-5;
        for i in 0..x.len() {
            for ax in 0..3 {
                let mut plus = xt.clone();
                plus[i][ax] += h;
                let mut minus = xt.clone();
                minus[i][ax] -= h;
                let fd = (log_density(&plus) - log_density(&minus)) / (2.0 * h);
                let rel = (fd - score[i][ax]).abs() / score[i][ax].abs().max(1e-8);
                assert!(rel < 1e-5, "fd {fd} vs {}", score[i][ax]);
            }
        }
    }

    /// E‖true_score‖² = 3L/σ² when X̃ = perturb(X, σ).
    #[test]
    fn true_score_expected_norm() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let l = 6;
        let x = vec![[0.0; 3]; l];
        let sigma = 1.3;
        let draws = 20_000;
        let mut acc = 0.0;
        for _ in 0..draws {
            let xt = perturb(&x, sigma, &mut rng);
            let g = true_score(&x, &xt, sigma).unwrap();
            acc += g
                .iter()
                .map(|r| r[0] * r[0] + r[1] * r[1] + r[2] * r[2])
                .sum::<f64>();
        }
        let mean = acc / draws as f64;
        let expected = 3.0 * l as f64 / (sigma * sigma);
        assert!(
            (mean - expected).abs() / expected < 0.05,
            "{mean} vs {expected}"
        );
    }
}
