//! Core algorithms for score-guided protein Cα-trace optimization.
//!
//! Structures are represented as Cα coordinate matrices and squared
//! pairwise distance matrices. A score model estimates log-density
//! gradients over the distance matrix; the chain rule pulls them back to
//! coordinate gradients, which drive annealed Langevin dynamics from a
//! random initialization down a descending noise schedule. Handedness of
//! the resulting trace is resolved against a reference dihedral-angle
//! distribution, and lDDT-Ca / GDT-TS / RMSD quantify structure quality.
//!
//! This crate is `no_std` (with `alloc`); file formats, the CLI, and
//! decoy-level parallelism live in the companion `scorefold` crate.

#![no_std]

#[macro_use]
extern crate alloc;

#[cfg(test)]
extern crate std;

mod error;
pub mod linalg;

pub mod conditioning;
pub mod geometry;
pub mod metrics;
pub mod noise;
pub mod rng;
pub mod sampler;
pub mod score;

pub use error::{Error, Result};
pub use geometry::{AminoAcid, DistanceMatrix, Structure, Vec3};
