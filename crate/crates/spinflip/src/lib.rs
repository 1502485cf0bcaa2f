//! Majorana spin-flip escape rates for magnetically trapped atoms.
//!
//! Atoms held in an Ioffe-Pritchard magnetic trap are lost when their spin
//! fails to follow the local field direction. This crate computes those
//! escape rates for arbitrary hyperfine spin F by perturbation theory in the
//! adiabatic frame: the frame rotation generates a gauge potential whose
//! pieces drive multi-step spin flips from the trapped ground state into the
//! untrapped continuum.
//!
//! The layering mirrors the physics:
//!
//! * [`spin_algebra`]: exact half-integer bookkeeping, ladder matrix
//!   elements, closed-form angular factors.
//! * [`trap_model`]: field configuration in lab units and the derived trap
//!   scales (frequency, oscillator length, adiabaticity parameter).
//! * [`adiabatic_frame`]: the bisector rotation, the gauge potential and its
//!   three parts, the non-adiabatic coupling scales.
//! * [`perturbation`]: exact-rational path counting for multi-step flips and
//!   the closure-limit transition amplitude.
//! * [`rates`]: assembled escape-rate formulas with factor-by-factor
//!   breakdown, for integer and half-integer spin.
//! * [`oracles`]: independent brute-force checks (dense matrix powers,
//!   finite-difference gauge potential, numerical quadrature, an explicit
//!   second-order sum over intermediate states in extended precision).
//! * [`cli`]: config ingestion and deterministic machine-readable output.
//!
//! All internal computation is in SI units; Gauss, cm and amu appear only at
//! the configuration boundary.

pub mod adiabatic_frame;
pub mod cli;
pub mod constants;
mod error;
pub mod oracles;
pub mod perturbation;
pub mod rates;
pub mod spin_algebra;
pub mod trap_model;

pub use error::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Version string embedded in every report.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
