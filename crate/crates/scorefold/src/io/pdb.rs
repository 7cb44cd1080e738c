//! Cα-trace subset of the PDB format: ATOM-record parsing with altloc
//! resolution, and fixed-column trace output.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use scorefold_core::geometry::{AminoAcid, Structure, Vec3};

use crate::io::IoError;

/// Result of extracting one chain's Cα trace.
#[derive(Debug, Clone)]
pub struct ParsedChain {
    pub structure: Structure,
    /// Residues seen in the chain that carried no Cα atom.
    pub residues_missing_ca: usize,
}

struct CaCandidate {
    residue: AminoAcid,
    coords: Vec3,
    occupancy: f64,
}

fn parse_float(line: &str, range: std::ops::Range<usize>, line_no: usize) -> Result<f64, IoError> {
    line.get(range.clone())
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .and_then(|s| s.parse::<f64>().ok())
        .ok_or(IoError::PdbParse {
            line: line_no,
            what: "malformed coordinate field",
        })
}

/// Extract the Cα trace of one chain, ordered by residue sequence number
/// (insertion codes break ties). Alternate locations resolve to the
/// highest occupancy, first seen winning ties. Residues that appear in
/// the chain without a Cα atom are counted in `residues_missing_ca`.
pub fn parse_pdb_ca(path: &Path, chain: char) -> Result<ParsedChain, IoError> {
    let text = fs::read_to_string(path).map_err(|e| IoError::File {
        path: path.to_path_buf(),
        source: e,
    })?;
    parse_pdb_ca_str(&text, chain)
}

pub fn parse_pdb_ca_str(text: &str, chain: char) -> Result<ParsedChain, IoError> {
    // Keyed by (residue sequence number, insertion code).
    let mut ca_atoms: BTreeMap<(i32, u8), CaCandidate> = BTreeMap::new();
    let mut residues_seen: std::collections::BTreeSet<(i32, u8)> = Default::default();

    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim_end_matches('\r');
        if !line.starts_with("ATOM") {
            continue;
        }
        if line.len() < 54 {
            return Err(IoError::PdbParse {
                line: line_no,
                what: "ATOM record shorter than the coordinate columns",
            });
        }
        let chain_id = line.as_bytes()[21] as char;
        if chain_id != chain {
            continue;
        }
        let res_seq: i32 = line
            .get(22..26)
            .map(str::trim)
            .and_then(|s| s.parse().ok())
            .ok_or(IoError::PdbParse {
                line: line_no,
                what: "malformed residue sequence number",
            })?;
        let i_code = line.as_bytes()[26];
        residues_seen.insert((res_seq, i_code));

        let atom_name = line.get(12..16).unwrap_or("").trim();
        if atom_name != "CA" {
            continue;
        }
        let x = parse_float(line, 30..38, line_no)?;
        let y = parse_float(line, 38..46, line_no)?;
        let z = parse_float(line, 46..54, line_no)?;
        let occupancy = line
            .get(54..60)
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .and_then(|s| s.parse::<f64>().ok())
            .unwrap_or(1.0);
        let residue = AminoAcid::from_three_letter(line.get(17..20).unwrap_or(""));

        let key = (res_seq, i_code);
        match ca_atoms.get(&key) {
            Some(existing) if existing.occupancy >= occupancy => {}
            _ => {
                // First-seen wins ties via the >= above.
                ca_atoms.insert(
                    key,
                    CaCandidate {
                        residue,
                        coords: [x, y, z],
                        occupancy,
                    },
                );
            }
        }
    }

    if ca_atoms.is_empty() {
        return Err(IoError::EmptyStructure { chain });
    }
    let residues_missing_ca = residues_seen.len() - ca_atoms.len();
    let mut sequence = Vec::with_capacity(ca_atoms.len());
    let mut coords = Vec::with_capacity(ca_atoms.len());
    for candidate in ca_atoms.values() {
        sequence.push(candidate.residue);
        coords.push(candidate.coords);
    }
    let structure =
        Structure::new(sequence, coords).map_err(|e| IoError::InvalidStructure(e.to_string()))?;
    Ok(ParsedChain {
        structure,
        residues_missing_ca,
    })
}

const COORD_LIMIT: f64 = 9999.999;

/// Write a Cα trace as ATOM records (chain A, one record per residue)
/// terminated by TER and END. Coordinates outside the fixed-column range
/// ±9999.999 are rejected.
pub fn write_ca_pdb(sequence: &[AminoAcid], coords: &[Vec3], path: &Path) -> Result<(), IoError> {
    let text = format_ca_pdb(sequence, coords)?;
    fs::write(path, text).map_err(|e| IoError::File {
        path: path.to_path_buf(),
        source: e,
    })
}

pub fn format_ca_pdb(sequence: &[AminoAcid], coords: &[Vec3]) -> Result<String, IoError> {
    if sequence.len() != coords.len() {
        return Err(IoError::InvalidStructure(format!(
            "sequence length {} does not match coordinate count {}",
            sequence.len(),
            coords.len()
        )));
    }
    let mut out = String::with_capacity(coords.len() * 81 + 32);
    for (i, (aa, p)) in sequence.iter().zip(coords.iter()).enumerate() {
        if p.iter().any(|v| v.abs() > COORD_LIMIT || !v.is_finite()) {
            return Err(IoError::InvalidStructure(format!(
                "coordinate {p:?} at residue {} exceeds the PDB column range",
                i + 1
            )));
        }
        out.push_str(&format!(
            "ATOM  {serial:>5}  CA  {res:>3} A{seq:>4}    {x:8.3}{y:8.3}{z:8.3}{occ:6.2}{b:6.2}           C\n",
            serial = i + 1,
            res = aa.three_letter(),
            seq = i + 1,
            x = p[0],
            y = p[1],
            z = p[2],
            occ = 1.0,
            b = 0.0,
        ));
    }
    let last = sequence.len();
    out.push_str(&format!(
        "TER   {serial:>5}      {res:>3} A{seq:>4}\n",
        serial = last + 1,
        res = sequence.last().map_or("UNK", |a| a.three_letter()),
        seq = last,
    ));
    out.push_str("END\n");
    Ok(out)
}
