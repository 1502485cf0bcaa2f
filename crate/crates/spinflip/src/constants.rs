//! Physical constants (CODATA 2018) and lab-unit conversions.
//!
//! Pinned to fixed values so that outputs are reproducible byte for byte;
//! the published rate formulas only quote 2-3 significant figures, so the
//! exact CODATA vintage is immaterial for physics but not for determinism.

/// Bohr magneton, J/T.
pub const BOHR_MAGNETON: f64 = 9.274_010_078_3e-24;

/// Reduced Planck constant, J s.
pub const HBAR: f64 = 1.054_571_817e-34;

/// Atomic mass unit, kg.
pub const ATOMIC_MASS: f64 = 1.660_539_066_60e-27;

/// Boltzmann constant, J/K.
pub const BOLTZMANN: f64 = 1.380_649e-23;

/// 1 Gauss in Tesla.
pub const GAUSS: f64 = 1e-4;

/// 1 Gauss/cm in Tesla/m.
pub const GAUSS_PER_CM: f64 = 1e-2;

/// Constants line embedded in reports.
pub fn constants_line() -> String {
    format!(
        "mu_B={BOHR_MAGNETON:e} J/T; hbar={HBAR:e} J s; amu={ATOMIC_MASS:e} kg; k_B={BOLTZMANN:e} J/K"
    )
}
