//! Escape-rate formulas: the closed-form spin-flip rate for integer and
//! half-integer spin, and the momentum-distribution / thermal variants.
//!
//! Both branches share the structure
//!
//!   w = (pi omega_i / 2) (p chi0^2 / 8)^(p-1) |<f|F-^p|i>|^2 C_p^2 e^(-c k^2 b_i^2)
//!
//! where p counts the flips needed to reach the first untrapped surface:
//! p = F_z (final state F_z = 0) for integer spin with c = 1, and
//! p = F_z + 1/2 (final state F_z = -1/2) for half-integer spin with the
//! semiclassical factor c = sqrt(2 F_z) arctan(1/sqrt(2 F_z)) < 1, which
//! accounts for the final state sliding down an inverted surface instead
//! of a flat one.

use crate::constants::{BOLTZMANN, HBAR};
use crate::perturbation::{c_factor, rational_to_f64};
use crate::spin_algebra::{
    angular_factor_half_integer, angular_factor_integer, SpinQuantum,
};
use crate::trap_model::{
    derive_params, final_wavenumber, surface_params, DerivedParams, TrapConfig,
};
use crate::{Error, Result};

/// Every factor of the rate formula, kept separate so outputs can show
/// where the suppression comes from. The invariant
/// rate = prefactor * chi_power * angular * c_p_squared * exp(-exponent)
/// holds to rounding for every constructor in this module.
#[derive(Debug, Clone, Copy)]
pub struct RateBreakdown {
    /// Number of spin flips to the first untrapped surface.
    pub p: u32,
    /// pi omega_i / 2, rad/s.
    pub prefactor: f64,
    /// (p chi0^2 / 8)^(p-1).
    pub chi_power: f64,
    /// |<F_zf|F-^p|F_zi>|^2.
    pub angular: f64,
    /// C_p^2 with C_p at the physical F_zi.
    pub c_p_squared: f64,
    /// Factor multiplying k_f^2 b_i^2 in the exponent; 1 exactly for the
    /// integer branch, c_semiclassical(F_zi) for the half-integer branch,
    /// 1 for the momentum variants (their exponent is whatever the
    /// supplied density dictates).
    pub c_exponent_factor: f64,
    /// Full suppression exponent.
    pub exponent: f64,
    /// Escape rate, 1/s. Underflows to zero when exponent > ~745.
    pub rate: f64,
}

/// Replacement for the Gaussian momentum factor e^(-k^2 b_i^2).
pub enum MomentumDensity<'a> {
    /// Oscillator ground state (b_i^2/pi) e^(-k^2 b_i^2); reproduces the
    /// closed-form rate exactly.
    GroundState,
    /// Boltzmann substitution: the whole exponential factor becomes
    /// exp(-hbar^2 k^2 / 2 m k_B T). This swaps the factor, it does not
    /// integrate a normalized thermal distribution.
    Thermal { temperature_k: f64 },
    /// Arbitrary isotropic density P(k) in units of m^2, normalized as
    /// integral of P(k) d^2k = 1 (checked by quadrature to 1e-6).
    Custom(&'a dyn Fn(f64) -> f64),
}

/// c = sqrt(2 F_z) arctan(1/sqrt(2 F_z)): fraction of the flat-surface
/// exponent that survives when the final state accelerates down the
/// inverted adiabatic surface. Increases from pi/4 at F_z = 1/2 toward 1.
pub fn c_semiclassical(fz_i: f64) -> f64 {
    assert!(fz_i > 0.0, "c_semiclassical needs F_zi > 0");
    let s = (2.0 * fz_i).sqrt();
    s * (1.0 / s).atan()
}

/// Closed-form rate for integer spin, F_zi -> 0 in p = F_zi flips.
pub fn escape_rate_integer(cfg: &TrapConfig) -> Result<RateBreakdown> {
    let derived = derive_params(cfg);
    breakdown_integer(&derived, cfg.spin())
}

/// Closed-form rate for half-integer spin, F_zi -> -1/2 in p = F_zi + 1/2
/// flips, with the semiclassical exponent factor.
pub fn escape_rate_half_integer(cfg: &TrapConfig) -> Result<RateBreakdown> {
    let derived = derive_params(cfg);
    breakdown_half_integer(&derived, cfg.spin())
}

/// Parity dispatch to the two closed forms.
pub fn escape_rate(cfg: &TrapConfig) -> Result<RateBreakdown> {
    if cfg.spin().is_integer_spin() {
        escape_rate_integer(cfg)
    } else {
        escape_rate_half_integer(cfg)
    }
}

/// Rate with the Gaussian momentum factor replaced by (pi/b_i^2) P(k_f)
/// for a general initial orbital state, or by a bare Boltzmann factor.
pub fn escape_rate_momentum(
    cfg: &TrapConfig,
    density: &MomentumDensity,
) -> Result<RateBreakdown> {
    let derived = derive_params(cfg);
    let spin = cfg.spin();
    let base = if spin.is_integer_spin() {
        breakdown_integer(&derived, spin)?
    } else {
        breakdown_half_integer(&derived, spin)?
    };
    let surface = surface_params(&derived, spin.two_fz())?;
    let k = final_wavenumber(&derived, &surface);
    let kb2 = k * k * surface.b_i * surface.b_i;

    let exponent = match density {
        MomentumDensity::GroundState => kb2,
        MomentumDensity::Thermal { temperature_k } => {
            if !(temperature_k.is_finite() && *temperature_k > 0.0) {
                return Err(Error::domain("temperature_k must be finite and > 0"));
            }
            HBAR * HBAR * k * k / (2.0 * derived.mass_kg * BOLTZMANN * temperature_k)
        }
        MomentumDensity::Custom(p) => {
            check_normalization(*p, k, surface.b_i)?;
            let factor = std::f64::consts::PI / (surface.b_i * surface.b_i) * p(k);
            if factor < 0.0 {
                return Err(Error::domain("momentum density returned a negative value"));
            }
            -factor.ln() // +inf when P(k_f) = 0, giving rate 0
        }
    };
    let product = base.prefactor * base.chi_power * base.angular * base.c_p_squared;
    Ok(RateBreakdown {
        c_exponent_factor: 1.0,
        exponent,
        rate: product * (-exponent).exp(),
        ..base
    })
}

fn breakdown_integer(derived: &DerivedParams, spin: SpinQuantum) -> Result<RateBreakdown> {
    if !spin.is_integer_spin() {
        return Err(Error::domain(
            "half-integer spin: use escape_rate_half_integer",
        ));
    }
    let p = (spin.two_fz() / 2) as u32;
    let angular = angular_factor_integer(spin.two_f(), p)?;
    assemble(derived, spin, p, angular, 1.0)
}

fn breakdown_half_integer(
    derived: &DerivedParams,
    spin: SpinQuantum,
) -> Result<RateBreakdown> {
    if spin.is_integer_spin() {
        return Err(Error::domain("integer spin: use escape_rate_integer"));
    }
    let p = ((spin.two_fz() + 1) / 2) as u32;
    let angular = angular_factor_half_integer(spin.two_f(), p)?;
    let c = c_semiclassical(spin.fz());
    assemble(derived, spin, p, angular, c)
}

fn assemble(
    derived: &DerivedParams,
    spin: SpinQuantum,
    p: u32,
    angular: f64,
    c: f64,
) -> Result<RateBreakdown> {
    let surface = surface_params(derived, spin.two_fz())?;
    let k = final_wavenumber(derived, &surface);
    let kb2 = k * k * surface.b_i * surface.b_i;
    let chi = derived.chi0;
    let prefactor = std::f64::consts::PI * surface.omega_i / 2.0;
    let chi_power = (p as f64 * chi * chi / 8.0).powi(p as i32 - 1);
    let c_p = rational_to_f64(&c_factor(p, spin.two_fz())?);
    let c_p_squared = c_p * c_p;
    let exponent = c * kb2;
    Ok(RateBreakdown {
        p,
        prefactor,
        chi_power,
        angular,
        c_p_squared,
        c_exponent_factor: c,
        exponent,
        rate: prefactor * chi_power * angular * c_p_squared * (-exponent).exp(),
    })
}

// Normalization check for user-supplied densities: integral of
// P(k) 2 pi k dk over [0, K] with K pushed out until the local tail
// estimate is negligible, then Simpson with interval doubling.
fn check_normalization(p: &dyn Fn(f64) -> f64, k_f: f64, b_i: f64) -> Result<()> {
    let k_scale = k_f.max(1.0 / b_i);
    let mut cutoff = 10.0 * k_scale;
    let mut grow = 0;
    while p(cutoff) * 2.0 * std::f64::consts::PI * cutoff * cutoff > 1e-10 {
        cutoff *= 2.0;
        grow += 1;
        if grow > 40 {
            return Err(Error::domain(
                "momentum density tail does not decay; cannot verify normalization",
            ));
        }
    }
    let integrand = |k: f64| 2.0 * std::f64::consts::PI * k * p(k);
    let mut n = 1024usize;
    let mut prev = simpson(&integrand, 0.0, cutoff, n);
    loop {
        n *= 2;
        let cur = simpson(&integrand, 0.0, cutoff, n);
        if (cur - prev).abs() < 1e-9 || n >= 1 << 22 {
            prev = cur;
            break;
        }
        prev = cur;
    }
    if (prev - 1.0).abs() > 1e-6 {
        return Err(Error::domain(format!(
            "momentum density integrates to {prev:.9}, expected 1 within 1e-6"
        )));
    }
    Ok(())
}

fn simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let n = n + n % 2;
    let h = (b - a) / n as f64;
    let mut acc = f(a) + f(b);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        acc += w * f(a + i as f64 * h);
    }
    acc * h / 3.0
}
