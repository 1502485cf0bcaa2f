//! Ioffe-Pritchard trap model: lab-unit field configuration, derived SI
//! trap scales, per-surface oscillator parameters, and energy conservation
//! for the escaping atom.
//!
//! The field near the axis is B = (lambda x, -lambda y, B0) with a bias
//! field B0 > 0 and radial gradient lambda; the axial curvature is accepted
//! in the config but set to zero in every formula. Atoms on adiabatic
//! surfaces with g F_z > 0 are trapped in the potential mu0 g F_z B(r),
//! harmonic near the axis with frequency omega0 sqrt(F_z).

use crate::constants::{ATOMIC_MASS, BOHR_MAGNETON, GAUSS, GAUSS_PER_CM, HBAR};
use crate::spin_algebra::SpinQuantum;
use crate::{Error, Result};

/// Trap specification in lab units plus the trapped spin state.
#[derive(Debug, Clone, Copy)]
pub struct TrapConfig {
    bias_field_gauss: f64,
    radial_gradient_gauss_per_cm: f64,
    axial_curvature_gauss_per_cm2: f64,
    g_factor: f64,
    mass_amu: f64,
    spin: SpinQuantum,
}

impl TrapConfig {
    /// Validates positivity of every physical parameter and that the spin
    /// state is trapped (F_z > 0; only g > 0 is supported, so trapping is
    /// decided by the sign of F_z alone).
    pub fn new(
        bias_field_gauss: f64,
        radial_gradient_gauss_per_cm: f64,
        axial_curvature_gauss_per_cm2: f64,
        g_factor: f64,
        mass_amu: f64,
        spin: SpinQuantum,
    ) -> Result<Self> {
        let positive = [
            (bias_field_gauss, "bias_field_gauss"),
            (radial_gradient_gauss_per_cm, "radial_gradient_gauss_per_cm"),
            (g_factor, "g_factor"),
            (mass_amu, "mass_amu"),
        ];
        for (value, name) in positive {
            if !value.is_finite() || value <= 0.0 {
                return Err(Error::domain(format!(
                    "{name} must be finite and > 0 (got {value})"
                )));
            }
        }
        if !axial_curvature_gauss_per_cm2.is_finite() || axial_curvature_gauss_per_cm2 < 0.0 {
            return Err(Error::domain(format!(
                "axial_curvature_gauss_per_cm2 must be finite and >= 0 (got {axial_curvature_gauss_per_cm2})"
            )));
        }
        if spin.two_fz() <= 0 {
            return Err(Error::domain(format!(
                "two_fz = {} is untrapped; only F_z > 0 initial states are admitted",
                spin.two_fz()
            )));
        }
        Ok(TrapConfig {
            bias_field_gauss,
            radial_gradient_gauss_per_cm,
            axial_curvature_gauss_per_cm2,
            g_factor,
            mass_amu,
            spin,
        })
    }

    pub fn bias_field_gauss(&self) -> f64 {
        self.bias_field_gauss
    }

    pub fn radial_gradient_gauss_per_cm(&self) -> f64 {
        self.radial_gradient_gauss_per_cm
    }

    /// Parsed and echoed but enters no formula (the model sets it to zero).
    pub fn axial_curvature_gauss_per_cm2(&self) -> f64 {
        self.axial_curvature_gauss_per_cm2
    }

    pub fn g_factor(&self) -> f64 {
        self.g_factor
    }

    pub fn mass_amu(&self) -> f64 {
        self.mass_amu
    }

    pub fn spin(&self) -> SpinQuantum {
        self.spin
    }

    /// Radial gradient in Gauss per meter (positions are SI internally).
    pub(crate) fn gradient_gauss_per_m(&self) -> f64 {
        self.radial_gradient_gauss_per_cm * 100.0
    }

    pub fn mass_kg(&self) -> f64 {
        self.mass_amu * ATOMIC_MASS
    }
}

/// SI trap scales derived from a config.
#[derive(Debug, Clone, Copy)]
pub struct DerivedParams {
    /// Reference trap frequency (the F_z = 1 surface), rad/s.
    pub omega0: f64,
    /// Oscillator length of the F_z = 1 surface, m.
    pub b0: f64,
    /// Adiabaticity parameter hbar omega0 / E0.
    pub chi0: f64,
    /// Zeeman gap mu0 g B0 between adjacent surfaces, J.
    pub e0: f64,
    /// Spin precession frequency E0 / hbar at the trap center, rad/s.
    pub omega_prec: f64,
    /// Atomic mass, kg (fixed by b0 and omega0; carried for convenience).
    pub mass_kg: f64,
}

impl DerivedParams {
    /// True when the rate formulas are unreliable (chi0 >= 0.1, i.e. the
    /// vibrational frequency is no longer small against the precession
    /// frequency).
    pub fn adiabaticity_warning(&self) -> bool {
        self.chi0 >= 0.1
    }
}

/// Oscillator parameters of one trapped adiabatic surface.
#[derive(Debug, Clone, Copy)]
pub struct SurfaceParams {
    pub two_fz: i32,
    /// omega0 sqrt(F_z), rad/s.
    pub omega_i: f64,
    /// b0 / F_z^(1/4), m.
    pub b_i: f64,
    /// Full initial energy F_z E0 + hbar omega_i, J.
    pub e_i: f64,
}

/// Which form of the adiabatic potential to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PotentialForm {
    Exact,
    Harmonic,
}

/// Potential sample; untrapped surfaces (F_z <= 0) are still evaluated but
/// flagged.
#[derive(Debug, Clone, Copy)]
pub struct PotentialSample {
    pub energy_j: f64,
    pub trapped: bool,
}

/// Magnetic field vector (Gauss) at a position given in meters.
pub fn field_vector(cfg: &TrapConfig, r: [f64; 3]) -> [f64; 3] {
    let lam = cfg.gradient_gauss_per_m();
    [lam * r[0], -lam * r[1], cfg.bias_field_gauss()]
}

/// |B| in Gauss; independent of z.
pub fn field_magnitude(cfg: &TrapConfig, r: [f64; 3]) -> f64 {
    let lam = cfg.gradient_gauss_per_m();
    let b0 = cfg.bias_field_gauss();
    (b0 * b0 + lam * lam * (r[0] * r[0] + r[1] * r[1])).sqrt()
}

/// Adiabatic potential mu0 g F_z B(r) in joules, exact or harmonic.
pub fn adiabatic_potential(
    cfg: &TrapConfig,
    two_fz: i32,
    r: [f64; 3],
    form: PotentialForm,
) -> Result<PotentialSample> {
    if two_fz.unsigned_abs() > cfg.spin().two_f()
        || (two_fz.rem_euclid(2) as u32) != cfg.spin().two_f() % 2
    {
        return Err(Error::domain(format!(
            "two_fz = {two_fz} is not a projection of two_f = {}",
            cfg.spin().two_f()
        )));
    }
    let fz = two_fz as f64 / 2.0;
    let b_tesla = match form {
        PotentialForm::Exact => field_magnitude(cfg, r) * GAUSS,
        PotentialForm::Harmonic => {
            let lam = cfg.gradient_gauss_per_m() * GAUSS; // T/m
            let b0 = cfg.bias_field_gauss() * GAUSS; // T
            let rho2 = r[0] * r[0] + r[1] * r[1];
            b0 + lam * lam * rho2 / (2.0 * b0)
        }
    };
    Ok(PotentialSample {
        energy_j: BOHR_MAGNETON * cfg.g_factor() * fz * b_tesla,
        trapped: two_fz > 0,
    })
}

/// SI trap scales: omega0^2 = mu0 g lambda^2 / (m B0), b0^2 = hbar/(m
/// omega0), E0 = mu0 g B0, omega_prec = E0/hbar, chi0 = omega0/omega_prec.
pub fn derive_params(cfg: &TrapConfig) -> DerivedParams {
    let lam = cfg.radial_gradient_gauss_per_cm() * GAUSS_PER_CM; // T/m
    let b0_field = cfg.bias_field_gauss() * GAUSS; // T
    let m = cfg.mass_kg();
    let moment = BOHR_MAGNETON * cfg.g_factor();
    let e0 = moment * b0_field;
    let omega_prec = e0 / HBAR;
    let omega0 = lam * (moment / (m * b0_field)).sqrt();
    let b0 = (HBAR / (m * omega0)).sqrt();
    let chi0 = HBAR * omega0 / e0;
    DerivedParams {
        omega0,
        b0,
        chi0,
        e0,
        omega_prec,
        mass_kg: m,
    }
}

/// Oscillator parameters of the trapped surface F_z = two_fz/2.
pub fn surface_params(derived: &DerivedParams, two_fz: i32) -> Result<SurfaceParams> {
    if two_fz <= 0 {
        return Err(Error::domain(format!(
            "two_fz = {two_fz}: untrapped surface has no bound state"
        )));
    }
    let fz = two_fz as f64 / 2.0;
    let omega_i = derived.omega0 * fz.sqrt();
    let b_i = derived.b0 / fz.powf(0.25);
    let e_i = fz * derived.e0 + HBAR * omega_i;
    Ok(SurfaceParams {
        two_fz,
        omega_i,
        b_i,
        e_i,
    })
}

/// Wavenumber of the escaping atom fixed by energy conservation, using the
/// adiabatic-limit initial energy F_z E0 (the hbar omega_i zero-point term
/// is dropped so that k_f^2 b_i^2 = 2 sqrt(F_z)/chi0 holds exactly).
pub fn final_wavenumber(derived: &DerivedParams, surface: &SurfaceParams) -> f64 {
    let fz = surface.two_fz as f64 / 2.0;
    (2.0 * derived.mass_kg * fz * derived.e0).sqrt() / HBAR
}
