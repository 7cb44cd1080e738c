//! Coordinate-level primitives: squared distance matrices, centering,
//! mirroring, Cα pseudo-dihedrals, proper-rotation superposition, and
//! classical-MDS reconstruction from a distance matrix.

use alloc::string::String;
use alloc::vec::Vec;

use crate::linalg::{self, cross, dot, norm, rotate, sub};
use crate::{Error, Result};

/// One Cα position in Ångström.
pub type Vec3 = [f64; 3];

const ONE_LETTER: &[u8; 20] = b"ACDEFGHIKLMNPQRSTVWY";
const THREE_LETTER: [&str; 20] = [
    "ALA", "CYS", "ASP", "GLU", "PHE", "GLY", "HIS", "ILE", "LYS", "LEU", "MET", "ASN", "PRO",
    "GLN", "ARG", "SER", "THR", "VAL", "TRP", "TYR",
];

/// Residue identity over the 20-letter alphabet plus unknown.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AminoAcid {
    Known(u8),
    Unknown,
}

impl AminoAcid {
    /// Index into the alphabetical one-letter alphabet, `None` for unknown.
    pub fn index(self) -> Option<usize> {
        match self {
            AminoAcid::Known(i) => Some(i as usize),
            AminoAcid::Unknown => None,
        }
    }

    pub fn from_one_letter(c: char) -> AminoAcid {
        let upper = c.to_ascii_uppercase() as u8;
        match ONE_LETTER.iter().position(|&a| a == upper) {
            Some(i) => AminoAcid::Known(i as u8),
            None => AminoAcid::Unknown,
        }
    }

    pub fn from_three_letter(name: &str) -> AminoAcid {
        let trimmed = name.trim();
        match THREE_LETTER
            .iter()
            .position(|&t| t.eq_ignore_ascii_case(trimmed))
        {
            Some(i) => AminoAcid::Known(i as u8),
            None => AminoAcid::Unknown,
        }
    }

    pub fn one_letter(self) -> char {
        match self {
            AminoAcid::Known(i) => ONE_LETTER[i as usize] as char,
            AminoAcid::Unknown => 'X',
        }
    }

    pub fn three_letter(self) -> &'static str {
        match self {
            AminoAcid::Known(i) => THREE_LETTER[i as usize],
            AminoAcid::Unknown => "UNK",
        }
    }
}

/// Parse a one-letter sequence string; unrecognized letters map to unknown.
pub fn sequence_from_str(s: &str) -> Vec<AminoAcid> {
    s.chars().map(AminoAcid::from_one_letter).collect()
}

/// An amino-acid sequence paired with its Cα trace.
#[derive(Debug, Clone, PartialEq)]
pub struct Structure {
    sequence: Vec<AminoAcid>,
    coords: Vec<Vec3>,
}

impl Structure {
    /// Requires at least four residues (dihedrals need four consecutive
    /// Cα atoms), matching sequence/coordinate lengths, and finite
    /// coordinates.
    pub fn new(sequence: Vec<AminoAcid>, coords: Vec<Vec3>) -> Result<Structure> {
        if coords.len() < 4 {
            return Err(Error::InvalidInput(format!(
                "structure needs at least 4 residues, got {}",
                coords.len()
            )));
        }
        if sequence.len() != coords.len() {
            return Err(Error::ShapeMismatch {
                expected: sequence.len(),
                got: coords.len(),
            });
        }
        check_finite(&coords)?;
        Ok(Structure { sequence, coords })
    }

    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn sequence(&self) -> &[AminoAcid] {
        &self.sequence
    }

    pub fn coords(&self) -> &[Vec3] {
        &self.coords
    }

    /// Same sequence, new coordinates of equal length.
    pub fn with_coords(&self, coords: Vec<Vec3>) -> Result<Structure> {
        Structure::new(self.sequence.clone(), coords)
    }

    /// Contiguous residue window `[start, start + len)`.
    pub fn window(&self, start: usize, len: usize) -> Result<Structure> {
        if start + len > self.len() {
            return Err(Error::InvalidInput(format!(
                "window {start}+{len} exceeds length {}",
                self.len()
            )));
        }
        Structure::new(
            self.sequence[start..start + len].to_vec(),
            self.coords[start..start + len].to_vec(),
        )
    }
}

fn check_finite(coords: &[Vec3]) -> Result<()> {
    for (row, p) in coords.iter().enumerate() {
        if !p.iter().all(|x| x.is_finite()) {
            return Err(Error::NonFinite { row });
        }
    }
    Ok(())
}

/// L×L squared Euclidean distances between Cα atoms (Å²).
///
/// Symmetric by construction with an exactly zero diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    len: usize,
    values: Vec<f64>,
}

impl DistanceMatrix {
    /// Wrap raw row-major values, validating symmetry, the zero diagonal,
    /// and non-negativity.
    pub fn from_values(len: usize, values: Vec<f64>) -> Result<DistanceMatrix> {
        if values.len() != len * len {
            return Err(Error::ShapeMismatch {
                expected: len * len,
                got: values.len(),
            });
        }
        for i in 0..len {
            if values[i * len + i] != 0.0 {
                return Err(Error::InvalidDistanceMatrix(format!(
                    "nonzero diagonal at {i}"
                )));
            }
            for j in 0..len {
                let v = values[i * len + j];
                if !v.is_finite() || v < 0.0 {
                    return Err(Error::InvalidDistanceMatrix(format!(
                        "entry ({i},{j}) = {v}"
                    )));
                }
                if values[i * len + j] != values[j * len + i] {
                    return Err(Error::InvalidDistanceMatrix(format!(
                        "asymmetric at ({i},{j})"
                    )));
                }
            }
        }
        Ok(DistanceMatrix { len, values })
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

pub fn squared_distance(a: Vec3, b: Vec3) -> f64 {
    let d = sub(a, b);
    dot(d, d)
}

/// Squared Euclidean distance matrix of a coordinate set.
///
/// Each unordered pair is computed once and written to both triangles, so
/// the result is exactly symmetric.
pub fn distance_matrix(coords: &[Vec3]) -> Result<DistanceMatrix> {
    check_finite(coords)?;
    let n = coords.len();
    let mut values = vec![0.0; n * n];
    for i in 0..n {
        for j in (i + 1)..n {
            let d = squared_distance(coords[i], coords[j]);
            values[i * n + j] = d;
            values[j * n + i] = d;
        }
    }
    Ok(DistanceMatrix { len: n, values })
}

/// Fill a preallocated row-major buffer with squared distances.
///
/// Buffer-reusing variant of [`distance_matrix`] for per-iteration use in
/// the sampling loop; returns the index of the first non-finite row, if any.
pub fn distance_matrix_into(coords: &[Vec3], out: &mut [f64]) -> core::result::Result<(), usize> {
    let n = coords.len();
    debug_assert_eq!(out.len(), n * n);
    for (row, p) in coords.iter().enumerate() {
        if !p.iter().all(|x| x.is_finite()) {
            return Err(row);
        }
    }
    for i in 0..n {
        out[i * n + i] = 0.0;
        for j in (i + 1)..n {
            let d = squared_distance(coords[i], coords[j]);
            out[i * n + j] = d;
            out[j * n + i] = d;
        }
    }
    Ok(())
}

pub fn centroid(coords: &[Vec3]) -> Vec3 {
    let n = coords.len().max(1) as f64;
    let mut c = [0.0; 3];
    for p in coords {
        for a in 0..3 {
            c[a] += p[a];
        }
    }
    [c[0] / n, c[1] / n, c[2] / n]
}

/// Subtract the mean coordinate from every atom.
pub fn center(coords: &[Vec3]) -> Vec<Vec3> {
    let c = centroid(coords);
    coords.iter().map(|p| sub(*p, c)).collect()
}

/// Mirror image: negate the z column. Any other reflection differs from
/// this one only by a proper rotation.
pub fn mirror(coords: &[Vec3]) -> Vec<Vec3> {
    coords.iter().map(|p| [p[0], p[1], -p[2]]).collect()
}

const DEGENERACY_TOL: f64 = 1e-9;

/// Signed torsion angle of four points, in (−π, π].
///
/// Mirroring the points flips the sign for non-planar input. Collinear
/// triples (cross-product norm below 1e-9) are rejected.
pub fn dihedral(p1: Vec3, p2: Vec3, p3: Vec3, p4: Vec3) -> Result<f64> {
    let b1 = sub(p2, p1);
    let b2 = sub(p3, p2);
    let b3 = sub(p4, p3);
    let n1 = cross(b1, b2);
    let n2 = cross(b2, b3);
    if norm(n1) < DEGENERACY_TOL || norm(n2) < DEGENERACY_TOL {
        return Err(Error::DegenerateGeometry(String::from(
            "collinear triple in dihedral",
        )));
    }
    let b2n = norm(b2);
    let b2u = [b2[0] / b2n, b2[1] / b2n, b2[2] / b2n];
    let x = dot(n1, n2);
    let y = dot(cross(n1, n2), b2u);
    if y == 0.0 {
        // Planar: cis → 0, trans → π (keeps the range half-open at −π).
        return Ok(if x < 0.0 { core::f64::consts::PI } else { 0.0 });
    }
    Ok(libm::atan2(y, x))
}

/// Optimal proper rigid motion of `mobile` onto `reference`.
#[derive(Debug, Clone, PartialEq)]
pub struct Superposition {
    pub rotation: [[f64; 3]; 3],
    pub translation: Vec3,
    pub rmsd: f64,
}

impl Superposition {
    pub fn apply(&self, p: Vec3) -> Vec3 {
        let r = rotate(&self.rotation, p);
        [
            r[0] + self.translation[0],
            r[1] + self.translation[1],
            r[2] + self.translation[2],
        ]
    }
}

/// Least-RMSD superposition over proper rotations and translations.
///
/// Uses the quaternion form of the Kabsch problem: the rotation is the
/// eigenvector of the largest eigenvalue of the 4×4 key matrix, which is a
/// proper rotation by construction, so reflections are never produced.
pub fn kabsch_superpose(mobile: &[Vec3], reference: &[Vec3]) -> Result<Superposition> {
    if mobile.len() != reference.len() {
        return Err(Error::ShapeMismatch {
            expected: reference.len(),
            got: mobile.len(),
        });
    }
    if mobile.is_empty() {
        return Err(Error::InvalidInput(String::from(
            "superposition of empty coordinate sets",
        )));
    }
    check_finite(mobile)?;
    check_finite(reference)?;

    let cm = centroid(mobile);
    let cr = centroid(reference);

    // Cross-covariance S[a][b] = Σ (mobile − cm)_a (reference − cr)_b.
    let mut s = [[0.0f64; 3]; 3];
    for (p, q) in mobile.iter().zip(reference.iter()) {
        let u = sub(*p, cm);
        let v = sub(*q, cr);
        for a in 0..3 {
            for b in 0..3 {
                s[a][b] += u[a] * v[b];
            }
        }
    }

    let (sxx, sxy, sxz) = (s[0][0], s[0][1], s[0][2]);
    let (syx, syy, syz) = (s[1][0], s[1][1], s[1][2]);
    let (szx, szy, szz) = (s[2][0], s[2][1], s[2][2]);
    let key = [
        sxx + syy + szz,
        syz - szy,
        szx - sxz,
        sxy - syx, //
        syz - szy,
        sxx - syy - szz,
        sxy + syx,
        szx + sxz, //
        szx - sxz,
        sxy + syx,
        -sxx + syy - szz,
        syz + szy, //
        sxy - syx,
        szx + sxz,
        syz + szy,
        -sxx - syy + szz,
    ];
    let (_vals, vecs) = linalg::sym_eigen(4, &key);
    let q = &vecs[0]; // unit quaternion (w, x, y, z) of the best rotation
    let (w, x, y, z) = (q[0], q[1], q[2], q[3]);
    let rotation = [
        [
            1.0 - 2.0 * (y * y + z * z),
            2.0 * (x * y - w * z),
            2.0 * (x * z + w * y),
        ],
        [
            2.0 * (x * y + w * z),
            1.0 - 2.0 * (x * x + z * z),
            2.0 * (y * z - w * x),
        ],
        [
            2.0 * (x * z - w * y),
            2.0 * (y * z + w * x),
            1.0 - 2.0 * (x * x + y * y),
        ],
    ];
    let rc = rotate(&rotation, cm);
    let translation = sub(cr, rc);

    let sup = Superposition {
        rotation,
        translation,
        rmsd: 0.0,
    };
    let mut acc = 0.0;
    for (p, q) in mobile.iter().zip(reference.iter()) {
        acc += squared_distance(sup.apply(*p), *q);
    }
    Ok(Superposition {
        rmsd: libm::sqrt(acc / mobile.len() as f64),
        ..sup
    })
}

const GRAM_NEGATIVITY_TOL: f64 = 1e-6;

/// Embed a distance matrix back into 3D by classical multidimensional
/// scaling: double-center, take the top three eigenpairs of the Gram
/// matrix. A Gram eigenvalue below −1e-6 × (largest eigenvalue) means the
/// matrix does not describe any 3D point set and is rejected.
pub fn reconstruct_from_distances(d: &DistanceMatrix) -> Result<Vec<Vec3>> {
    let n = d.len();
    if n == 0 {
        return Err(Error::InvalidInput(String::from("empty distance matrix")));
    }

    // Gram matrix B = −1/2 · J D J with J the centering projector.
    let mut row_mean = vec![0.0; n];
    let mut grand = 0.0;
    for i in 0..n {
        let mut s = 0.0;
        for j in 0..n {
            s += d.get(i, j);
        }
        row_mean[i] = s / n as f64;
        grand += s;
    }
    grand /= (n * n) as f64;

    let mut gram = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            gram[i * n + j] = -0.5 * (d.get(i, j) - row_mean[i] - row_mean[j] + grand);
        }
    }

    let (vals, vecs) = linalg::sym_eigen(n, &gram);
    let largest = vals[0].max(0.0);
    if let Some(&min) = vals.last() {
        if min < -GRAM_NEGATIVITY_TOL * largest.max(1e-30) {
            return Err(Error::InvalidDistanceMatrix(format!(
                "Gram eigenvalue {min} below tolerance; no 3D embedding exists"
            )));
        }
    }

    let mut coords = vec![[0.0; 3]; n];
    for axis in 0..3.min(n) {
        let scale = libm::sqrt(vals[axis].max(0.0));
        for i in 0..n {
            coords[i][axis] = scale * vecs[axis][i];
        }
    }
    Ok(coords)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{standard_normal, ChaCha8Rng, SeedableRng};
    use rand_core::RngCore;

    pub(crate) fn random_coords(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> Vec<Vec3> {
        (0..n)
            .map(|_| {
                [
                    scale * standard_normal(rng),
                    scale * standard_normal(rng),
                    scale * standard_normal(rng),
                ]
            })
            .collect()
    }

    fn random_rotation(rng: &mut ChaCha8Rng) -> [[f64; 3]; 3] {
        // Normalize a random quaternion.
        let q: Vec<f64> = (0..4).map(|_| standard_normal(rng)).collect();
        let n = libm::sqrt(q.iter().map(|x| x * x).sum::<f64>());
        let (w, x, y, z) = (q[0] / n, q[1] / n, q[2] / n, q[3] / n);
        [
            [
                1.0 - 2.0 * (y * y + z * z),
                2.0 * (x * y - w * z),
                2.0 * (x * z + w * y),
            ],
            [
                2.0 * (x * y + w * z),
                1.0 - 2.0 * (x * x + z * z),
                2.0 * (y * z - w * x),
            ],
            [
                2.0 * (x * z - w * y),
                2.0 * (y * z + w * x),
                1.0 - 2.0 * (x * x + y * y),
            ],
        ]
    }

    #[test]
    fn distance_matrix_two_points() {
        let d = distance_matrix(&[[0.0, 0.0, 0.0], [2.0, 0.0, 0.0]]).unwrap();
        assert_eq!(d.values(), &[0.0, 4.0, 4.0, 0.0]);
    }

    #[test]
    fn distance_matrix_single_point() {
        let d = distance_matrix(&[[3.0, -1.0, 2.0]]).unwrap();
        assert_eq!(d.values(), &[0.0]);
    }

    #[test]
    fn distance_matrix_matches_pair_loop_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let coords = random_coords(&mut rng, 6, 5.0);
        let d = distance_matrix(&coords).unwrap();
        // Independent per-pair double loop.
        for i in 0..6 {
            for j in 0..6 {
                let mut s = 0.0;
                for a in 0..3 {
                    let diff = coords[i][a] - coords[j][a];
                    s += diff * diff;
                }
                assert!((d.get(i, j) - s).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn distance_matrix_rejects_non_finite() {
        let err = distance_matrix(&[[0.0; 3], [f64::NAN, 0.0, 0.0]]).unwrap_err();
        assert_eq!(err, Error::NonFinite { row: 1 });
    }

    #[test]
    fn triangle_inequality_of_sqrt_entries() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let coords = random_coords(&mut rng, 8, 4.0);
        let d = distance_matrix(&coords).unwrap();
        for i in 0..8 {
            for j in 0..8 {
                for k in 0..8 {
                    let dij = libm::sqrt(d.get(i, j));
                    let dik = libm::sqrt(d.get(i, k));
                    let dkj = libm::sqrt(d.get(k, j));
                    assert!(dij <= dik + dkj + 1e-9);
                }
            }
        }
    }

    #[test]
    fn center_subtracts_mean() {
        let out = center(&[[1.0, 1.0, 1.0], [3.0, 3.0, 3.0]]);
        assert_eq!(out, vec![[-1.0, -1.0, -1.0], [1.0, 1.0, 1.0]]);
    }

    #[test]
    fn center_is_idempotent() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let coords = random_coords(&mut rng, 10, 2.0);
        let once = center(&coords);
        let twice = center(&once);
        for (a, b) in once.iter().zip(twice.iter()) {
            for ax in 0..3 {
                assert!((a[ax] - b[ax]).abs() < 1e-12);
            }
        }
        let c = centroid(&once);
        assert!(c.iter().all(|x| x.abs() < 1e-12));
    }

    #[test]
    fn distances_invariant_under_center_mirror_rotation() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let coords = random_coords(&mut rng, 9, 1.0);
        let d0 = distance_matrix(&coords).unwrap();

        for variant in [center(&coords), mirror(&coords)] {
            let d1 = distance_matrix(&variant).unwrap();
            for (a, b) in d0.values().iter().zip(d1.values()) {
                assert!((a - b).abs() < 1e-9);
            }
        }
        let r = random_rotation(&mut rng);
        let rotated: Vec<Vec3> = coords.iter().map(|p| rotate(&r, *p)).collect();
        let d2 = distance_matrix(&rotated).unwrap();
        for (a, b) in d0.values().iter().zip(d2.values()) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn mirror_negates_z_only() {
        assert_eq!(mirror(&[[1.0, 2.0, 3.0]]), vec![[1.0, 2.0, -3.0]]);
        let planar = [[1.0, 2.0, 0.0], [0.5, -1.0, 0.0]];
        assert_eq!(mirror(&planar), planar.to_vec());
    }

    #[test]
    fn dihedral_planar_cases() {
        // p4 in the p1-p2-p3 plane on the cis side.
        let cis = dihedral(
            [1.0, 1.0, 0.0],
            [0.0, 0.0, 0.0],
            [1.0, 0.0, 0.0],
            [2.0, 1.0, 0.0],
        )
        .unwrap();
        assert_eq!(cis, 0.0);
        let trans = dihedral(
            [1.0, 1.0, 0.0],
            [0.0, 0.0, 0.0],
            [1.0, 0.0, 0.0],
            [2.0, -1.0, 0.0],
        )
        .unwrap();
        assert_eq!(trans, core::f64::consts::PI);
    }

    #[test]
    fn dihedral_sign_flips_under_mirror() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..50 {
            let p = random_coords(&mut rng, 4, 3.0);
            let a = match dihedral(p[0], p[1], p[2], p[3]) {
                Ok(a) => a,
                Err(_) => continue,
            };
            let m = mirror(&p);
            let b = dihedral(m[0], m[1], m[2], m[3]).unwrap();
            assert!((a + b).abs() < 1e-9, "a={a} b={b}");
        }
    }

    #[test]
    fn dihedral_rejects_collinear() {
        let err = dihedral(
            [0.0, 0.0, 0.0],
            [1.0, 0.0, 0.0],
            [2.0, 0.0, 0.0],
            [3.0, 1.0, 0.0],
        )
        .unwrap_err();
        assert!(matches!(err, Error::DegenerateGeometry(_)));
    }

    #[test]
    fn kabsch_recovers_rigid_motion() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let coords = random_coords(&mut rng, 12, 4.0);
        let r = random_rotation(&mut rng);
        let t = [3.0, -2.0, 7.5];
        let moved: Vec<Vec3> = coords
            .iter()
            .map(|p| {
                let q = rotate(&r, *p);
                [q[0] + t[0], q[1] + t[1], q[2] + t[2]]
            })
            .collect();
        let sup = kabsch_superpose(&coords, &moved).unwrap();
        assert!(sup.rmsd < 1e-9, "rmsd {}", sup.rmsd);
    }

    #[test]
    fn kabsch_identity_on_self() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let coords = random_coords(&mut rng, 8, 2.0);
        let sup = kabsch_superpose(&coords, &coords).unwrap();
        assert!(sup.rmsd < 1e-12);
        for a in 0..3 {
            for b in 0..3 {
                let want = if a == b { 1.0 } else { 0.0 };
                assert!((sup.rotation[a][b] - want).abs() < 1e-9);
            }
            assert!(sup.translation[a].abs() < 1e-9);
        }
    }

    #[test]
    fn kabsch_length_mismatch() {
        let err = kabsch_superpose(&[[0.0; 3]; 3], &[[0.0; 3]; 4]).unwrap_err();
        assert!(matches!(err, Error::ShapeMismatch { .. }));
    }

    /// Brute-force check on a 4-point chiral case: no sampled proper
    /// rotation beats the reflection gap found by kabsch_superpose.
    #[test]
    fn kabsch_never_uses_reflection() {
        let coords = vec![
            [0.0, 0.0, 0.0],
            [1.5, 0.2, -0.3],
            [0.4, 1.8, 0.6],
            [-0.7, 0.5, 2.2],
        ];
        let mirrored = mirror(&coords);
        let sup = kabsch_superpose(&mirrored, &coords).unwrap();
        assert!(sup.rmsd > 0.05, "mirror should not superpose: {}", sup.rmsd);

        // Grid over rotations: none should do better than the reported
        // optimum (within discretization slack).
        let cm = center(&mirrored);
        let cr = center(&coords);
        let mut best = f64::INFINITY;
        let steps = 14;
        for iw in 0..steps {
            for ix in 0..steps {
                for iy in 0..steps {
                    for iz in 0..steps {
                        let q = [
                            iw as f64 - (steps - 1) as f64 / 2.0,
                            ix as f64 - (steps - 1) as f64 / 2.0,
                            iy as f64 - (steps - 1) as f64 / 2.0,
                            iz as f64 - (steps - 1) as f64 / 2.0,
                        ];
                        let n = libm::sqrt(q.iter().map(|x| x * x).sum::<f64>());
                        if n < 1e-9 {
                            continue;
                        }
                        let (w, x, y, z) = (q[0] / n, q[1] / n, q[2] / n, q[3] / n);
                        let r = [
                            [
                                1.0 - 2.0 * (y * y + z * z),
                                2.0 * (x * y - w * z),
                                2.0 * (x * z + w * y),
                            ],
                            [
                                2.0 * (x * y + w * z),
                                1.0 - 2.0 * (x * x + z * z),
                                2.0 * (y * z - w * x),
                            ],
                            [
                                2.0 * (x * z - w * y),
                                2.0 * (y * z + w * x),
                                1.0 - 2.0 * (x * x + y * y),
                            ],
                        ];
                        let mut acc = 0.0;
                        for (p, qq) in cm.iter().zip(cr.iter()) {
                            acc += squared_distance(rotate(&r, *p), *qq);
                        }
                        best = best.min(libm::sqrt(acc / 4.0));
                    }
                }
            }
        }
        assert!(
            sup.rmsd <= best + 1e-6,
            "grid found better rotation: {} < {}",
            best,
            sup.rmsd
        );
    }

    #[test]
    fn mirror_not_recoverable_for_nonplanar() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..10 {
            let coords = random_coords(&mut rng, 10, 3.0);
            let centered = center(&coords);
            let rg = libm::sqrt(
                centered.iter().map(|p| dot(*p, *p)).sum::<f64>() / centered.len() as f64,
            );
            let sup = kabsch_superpose(&mirror(&coords), &coords).unwrap();
            assert!(sup.rmsd > 0.1 * rg, "rmsd {} rg {}", sup.rmsd, rg);
        }
    }

    #[test]
    fn reconstruct_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let coords = random_coords(&mut rng, 8, 5.0);
        let d = distance_matrix(&coords).unwrap();
        let rebuilt = reconstruct_from_distances(&d).unwrap();
        let d2 = distance_matrix(&rebuilt).unwrap();
        let scale = d.values().iter().cloned().fold(0.0, f64::max);
        for (a, b) in d.values().iter().zip(d2.values()) {
            assert!((a - b).abs() <= 1e-6 * scale, "{a} vs {b}");
        }
    }

    #[test]
    fn reconstruct_collinear_embeds_in_1d() {
        let coords: Vec<Vec3> = (0..5).map(|i| [i as f64 * 2.0, 0.0, 0.0]).collect();
        let d = distance_matrix(&coords).unwrap();
        let rebuilt = reconstruct_from_distances(&d).unwrap();
        for p in &rebuilt {
            assert!(p[1].abs() < 1e-6 && p[2].abs() < 1e-6, "{p:?}");
        }
        let d2 = distance_matrix(&rebuilt).unwrap();
        for (a, b) in d.values().iter().zip(d2.values()) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn reconstruct_rejects_negative_entry() {
        let values = vec![0.0, -1.0, -1.0, 0.0];
        assert!(DistanceMatrix::from_values(2, values).is_err());
    }

    #[test]
    fn reconstruct_rejects_invalid_gram() {
        // Violates the triangle inequality badly: d13 huge while d12, d23
        // are small; squared distances 1, 1, 100.
        let values = vec![
            0.0, 1.0, 100.0, //
            1.0, 0.0, 1.0, //
            100.0, 1.0, 0.0,
        ];
        let d = DistanceMatrix::from_values(3, values).unwrap();
        assert!(matches!(
            reconstruct_from_distances(&d),
            Err(Error::InvalidDistanceMatrix(_))
        ));
    }

    #[test]
    fn structure_validation() {
        let seq = sequence_from_str("ACDE");
        assert!(Structure::new(seq.clone(), vec![[0.0; 3]; 4]).is_ok());
        assert!(Structure::new(seq.clone(), vec![[0.0; 3]; 3]).is_err());
        let mut coords = vec![[0.0; 3]; 4];
        coords[2][1] = f64::INFINITY;
        assert!(Structure::new(seq, coords).is_err());
    }

    #[test]
    fn amino_acid_round_trips() {
        for c in "ACDEFGHIKLMNPQRSTVWY".chars() {
            let aa = AminoAcid::from_one_letter(c);
            assert_eq!(aa.one_letter(), c);
            assert_eq!(AminoAcid::from_three_letter(aa.three_letter()), aa);
        }
        assert_eq!(AminoAcid::from_one_letter('B'), AminoAcid::Unknown);
        assert_eq!(AminoAcid::from_three_letter("MSE"), AminoAcid::Unknown);
    }

    // Shared with other modules' tests.
    pub(crate) fn _noop(_rng: &mut dyn RngCore) {}
}
