//! Simulator for a nested Mach-Zehnder interferometer probed by a second,
//! Kerr-coupled photon.
//!
//! The crate evolves a joint (system photon ⊗ probe photon) amplitude vector
//! through a configurable linear-optics circuit, post-selects on detectors,
//! and computes two-state-vector weak values of rail projectors at named cuts.
//!
//! Modules:
//! - [`model`] — circuit data model (rails, stages, detectors, parameters)
//!   and per-stage unitary/isometry matrices
//! - [`engine`] — state-vector evolution, detector statistics, post-selection,
//!   parameter sweeps
//! - [`tsvf`] — forward states, backward functionals, weak values
//! - [`scenarios`] — canonical nested-MZI circuit and its named variants
//! - [`circuitfile`] — the line-oriented `.mzc` circuit format

pub mod circuitfile;
pub mod engine;
pub mod error;
pub mod model;
pub mod scenarios;
pub mod tsvf;

pub use error::{Error, Result};

/// Overlap / post-selection probabilities at or below this threshold are
/// treated as structurally zero: conditional statistics and weak values are
/// undefined there and the corresponding operations fail loudly instead of
/// returning garbage.
pub const POST_SELECT_EPS: f64 = 1e-30;

/// Renders a float with 17 significant digits, locale-independent.
///
/// 17 significant decimal digits round-trip any finite `f64` exactly, so
/// serialized circuits and CSV reports are lossless and byte-deterministic.
pub(crate) fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}
