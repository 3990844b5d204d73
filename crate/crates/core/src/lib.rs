//! Forward model of two-dimensional optical Stern-Gerlach deflection in a
//! crossed-cavity setup, and entanglement detectors built on the resulting
//! atomic momentum patterns.
//!
//! An excited (or superposed) two-level atom crosses the overlapping nodes of
//! two orthogonal cavity modes prepared in a finite two-mode Fock
//! superposition. The transverse momentum density W(℘, φ) concentrates on
//! rings ℘ = sqrt(n) Λ; the angular structure of the rings and the absence of
//! specific rings reveal entanglement between the modes.

pub mod bogoliubov;
pub mod cli;
pub mod detectors;
pub mod distribution;
pub mod error;
pub mod io;
pub mod kernel;
pub mod numeric;
pub mod state;
pub mod validation;

pub use error::{OsgError, Result};
