//! Idealized Cα folds for tests, toy training sets, and reference
//! histograms: chains are placed from internal coordinates (virtual bond
//! length, bond angle, torsion), giving helices the canonical +50°
//! pseudo-dihedral and strands a right-handed twist near −170°.

use scorefold_core::geometry::{sequence_from_str, Structure, Vec3};
use scorefold_core::rng::standard_normal;
use scorefold_core::rng::RngCore;
use scorefold_core::Result;

/// Cα virtual bond length (Å).
pub const CA_BOND: f64 = 3.8;

fn cross(a: Vec3, b: Vec3) -> Vec3 {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

fn norm(a: Vec3) -> f64 {
    (a[0] * a[0] + a[1] * a[1] + a[2] * a[2]).sqrt()
}

fn unit(a: Vec3) -> Vec3 {
    let n = norm(a);
    [a[0] / n, a[1] / n, a[2] / n]
}

/// Place a chain from internal coordinates. `angles[i]` is the bond angle
/// at residue i+1 (degrees) and `torsions[i]` the torsion of the
/// quadruple ending at residue i+3, so their lengths are n−2 and n−3.
pub fn place_chain(bond: f64, angles_deg: &[f64], torsions_deg: &[f64]) -> Vec<Vec3> {
    let n = angles_deg.len() + 2;
    debug_assert_eq!(torsions_deg.len() + 3, n);
    let mut coords: Vec<Vec3> = Vec::with_capacity(n);
    coords.push([0.0, 0.0, 0.0]);
    coords.push([bond, 0.0, 0.0]);
    // Third atom in the xy-plane at the first bond angle.
    let theta0 = angles_deg[0].to_radians();
    coords.push([bond - bond * theta0.cos(), bond * theta0.sin(), 0.0]);
    for i in 3..n {
        let theta = angles_deg[i - 2].to_radians();
        let tau = torsions_deg[i - 3].to_radians();
        let a = coords[i - 3];
        let b = coords[i - 2];
        let c = coords[i - 1];
        // Local frame at c.
        let bc = unit([c[0] - b[0], c[1] - b[1], c[2] - b[2]]);
        let ab = [b[0] - a[0], b[1] - a[1], b[2] - a[2]];
        let n_vec = unit(cross(ab, bc));
        let m = cross(n_vec, bc);
        // Spherical placement (NeRF).
        let d = [
            -bond * theta.cos(),
            bond * theta.sin() * tau.cos(),
            bond * theta.sin() * tau.sin(),
        ];
        coords.push([
            c[0] + d[0] * bc[0] + d[1] * m[0] + d[2] * n_vec[0],
            c[1] + d[0] * bc[1] + d[1] * m[1] + d[2] * n_vec[1],
            c[2] + d[0] * bc[2] + d[1] * m[2] + d[2] * n_vec[2],
        ]);
    }
    coords
}

/// Canonical α-helix Cα trace (radius 2.3 Å, rise 1.5 Å, 100°/residue);
/// consecutive-Cα dihedrals sit near +50°.
pub fn ideal_helix(len: usize, sequence_letter: char) -> Result<Structure> {
    let seq = sequence_from_str(&sequence_letter.to_string().repeat(len));
    let coords: Vec<Vec3> = (0..len)
        .map(|i| {
            let a = (i as f64) * 100.0f64.to_radians();
            [2.3 * a.cos(), 2.3 * a.sin(), 1.5 * i as f64]
        })
        .collect();
    Structure::new(seq, coords)
}

/// Two antiparallel strands with a right-handed twist joined by a tight
/// turn; strand pseudo-dihedrals sit near −170°.
pub fn ideal_hairpin(len: usize, sequence_letter: char) -> Result<Structure> {
    let seq = sequence_from_str(&sequence_letter.to_string().repeat(len));
    let half = len / 2;
    let mut angles = Vec::new();
    let mut torsions = Vec::new();
    for i in 1..len - 1 {
        let in_turn = i >= half - 1 && i < half + 1;
        angles.push(if in_turn { 88.0 } else { 122.0 });
    }
    for i in 0..len - 3 {
        let in_turn = i >= half - 2 && i < half;
        torsions.push(if in_turn { 55.0 } else { -170.0 });
    }
    Structure::new(seq, place_chain(CA_BOND, &angles, &torsions))
}

/// A helix joined to a hairpin through a short loop: a compact αβ fold.
pub fn helix_hairpin(len: usize, sequence_letter: char) -> Result<Structure> {
    let seq = sequence_from_str(&sequence_letter.to_string().repeat(len));
    let helix_len = len / 2;
    let mut angles = Vec::new();
    let mut torsions = Vec::new();
    for i in 1..len - 1 {
        angles.push(if i < helix_len {
            91.0
        } else if i < helix_len + 2 {
            100.0
        } else {
            122.0
        });
    }
    for i in 0..len - 3 {
        torsions.push(if i < helix_len.saturating_sub(2) {
            50.0
        } else if i < helix_len {
            80.0
        } else {
            -170.0
        });
    }
    Structure::new(seq, place_chain(CA_BOND, &angles, &torsions))
}

/// Add small Gaussian jitter so pooled structures are not exact copies.
pub fn jitter<R: RngCore + ?Sized>(structure: &Structure, sigma: f64, rng: &mut R) -> Structure {
    let coords = structure
        .coords()
        .iter()
        .map(|p| {
            [
                p[0] + sigma * standard_normal(rng),
                p[1] + sigma * standard_normal(rng),
                p[2] + sigma * standard_normal(rng),
            ]
        })
        .collect();
    structure.with_coords(coords).expect("same length")
}

/// The five-structure toy training set: three helices and two hairpins
/// with distinct sequences.
pub fn toy_training_set() -> Vec<Structure> {
    vec![
        ideal_helix(16, 'A').unwrap(),
        ideal_helix(18, 'L').unwrap(),
        ideal_helix(20, 'E').unwrap(),
        ideal_hairpin(16, 'V').unwrap(),
        ideal_hairpin(18, 'K').unwrap(),
    ]
}
