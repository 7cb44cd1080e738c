//! File formats, synthetic test folds, and the command-line pipeline for
//! score-guided Cα-trace optimization. The numerics live in
//! `scorefold-core`; this crate adds everything that touches the
//! filesystem plus decoy-level parallelism.

pub mod cli;
pub mod io;
pub mod synth;
