//! Perturbative chain from the trapped surface F_z = p down to the first
//! untrapped one, built from single-flip and double-flip steps.
//!
//! A p-th order process is a composition of p into steps of size 1 and 2.
//! Each sequence contributes the product of 1/(partial sum) over the
//! surfaces it visits before the last (energy denominators in units of
//! E0), and the sequences with exactly p2 double steps sum to the rational
//! coefficient N_{p,p2}. The semiclassical correction factor is
//!
//!   C_p = sum_{p2} N_{p,p2} / F_z^{p2}
//!
//! evaluated exactly over the rationals. C_1 = 1 and C_p decreases toward
//! the pure single-step value 1/(p-1)! as F_z grows.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

use crate::spin_algebra::{lowering_power_element, SpinQuantum};
use crate::trap_model::{final_wavenumber, surface_params, DerivedParams};
use crate::{Error, Result};

/// One composition of the total flip order into steps of 1 or 2.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StepSequence {
    steps: Vec<u8>,
}

impl StepSequence {
    pub fn steps(&self) -> &[u8] {
        &self.steps
    }

    /// Total order p carried by this sequence.
    pub fn order(&self) -> u32 {
        self.steps.iter().map(|&s| s as u32).sum()
    }

    /// Number of double-flip steps.
    pub fn double_count(&self) -> u32 {
        self.steps.iter().filter(|&&s| s == 2).count() as u32
    }

    /// Product of 1/(partial sum) over all but the final partial sum; the
    /// single-step sequence of order 1 or 2 contributes the empty product 1.
    pub fn weight(&self) -> BigRational {
        let mut acc = BigRational::one();
        let mut sum = 0u32;
        for &s in &self.steps[..self.steps.len() - 1] {
            sum += s as u32;
            acc /= BigRational::from_integer(BigInt::from(sum));
        }
        acc
    }
}

/// All compositions of p into steps of 1 and 2, lexicographically ordered;
/// there are Fibonacci(p+1) of them.
pub fn enumerate_step_sequences(p: u32) -> Vec<StepSequence> {
    fn tails(p: u32) -> Vec<Vec<u8>> {
        if p == 0 {
            return vec![vec![]];
        }
        let mut out = Vec::new();
        for first in [1u8, 2] {
            if p >= first as u32 {
                for mut tail in tails(p - first as u32) {
                    tail.insert(0, first);
                    out.push(tail);
                }
            }
        }
        out
    }
    tails(p)
        .into_iter()
        .map(|steps| StepSequence { steps })
        .collect()
}

/// Exact N_{p,p2}: the summed weight of all order-p sequences with exactly
/// p2 double steps. Zero when 2 p2 > p. N_{p,0} = 1/(p-1)! and
/// N_{p,1} = p/(2 (p-2)!).
pub fn n_coefficient(p: u32, p2: u32) -> Result<BigRational> {
    if p == 0 {
        return Err(Error::domain("flip order p must be >= 1"));
    }
    Ok(enumerate_step_sequences(p)
        .iter()
        .filter(|seq| seq.double_count() == p2)
        .map(StepSequence::weight)
        .fold(BigRational::zero(), |acc, w| acc + w))
}

/// Exact C_p for an atom starting on the surface F_z = two_fz/2. Double
/// steps are suppressed by 1/F_z each, so C_p -> 1/(p-1)! as F_z grows.
pub fn c_factor(p: u32, two_fz: i32) -> Result<BigRational> {
    if p == 0 {
        return Err(Error::domain("flip order p must be >= 1"));
    }
    if two_fz <= 0 {
        return Err(Error::domain(format!(
            "two_fz = {two_fz}: C_p is defined for trapped surfaces only"
        )));
    }
    let inv_fz = BigRational::new(BigInt::from(2), BigInt::from(two_fz));
    let mut acc = BigRational::zero();
    let mut power = BigRational::one();
    for p2 in 0..=p / 2 {
        acc += n_coefficient(p, p2)? * &power;
        power *= &inv_fz;
    }
    Ok(acc)
}

/// Overlap of the outgoing box-normalized radial wave with the oscillator
/// ground state: I0 = (2 sqrt(pi) b_i / L) exp(-k^2 b_i^2 / 2). Underflows
/// to zero once k^2 b_i^2 exceeds about 1400; callers needing deep
/// adiabatic regimes must track the exponent separately.
pub fn plane_wave_overlap(k: f64, b_i: f64, box_length: f64) -> f64 {
    2.0 * std::f64::consts::PI.sqrt() * (b_i / box_length) * (-0.5 * k * k * b_i * b_i).exp()
}

/// Magnitude of the p-th order flip amplitude for an integer-spin atom
/// starting at F_z = p (the lowest trapped-to-untrapped chain), with the
/// outgoing wave normalized in a box of side `box_length`:
///
///   |A| = hbar omega0 (sqrt(chi0)/4)^p chi0^(p-1) <0|F-^p|p> (b0 k)^p I0 C_p
///
/// Squaring and inserting the 2D box density of states turns this into the
/// closed-form rate, so this function is the golden-rule side of that
/// identity.
pub fn amplitude_integer(
    derived: &DerivedParams,
    two_f: u32,
    two_fz: i32,
    box_length: f64,
) -> Result<f64> {
    if two_f % 2 != 0 || two_fz % 2 != 0 {
        return Err(Error::domain(
            "amplitude_integer requires integer spin (even two_f, two_fz)",
        ));
    }
    if two_fz <= 0 {
        return Err(Error::domain("initial surface must have F_z > 0"));
    }
    if !(box_length.is_finite() && box_length > 0.0) {
        return Err(Error::domain("box_length must be finite and > 0"));
    }
    let spin = SpinQuantum::new(two_f, two_fz)?;
    let p = (two_fz / 2) as u32;
    let surface = surface_params(derived, two_fz)?;
    let k = final_wavenumber(derived, &surface);
    let i0 = plane_wave_overlap(k, surface.b_i, box_length);
    let ladder = lowering_power_element(spin, 0)?;
    let c_p = c_factor(p, two_fz)?
        .to_f64()
        .ok_or_else(|| Error::computation("C_p does not fit in f64"))?;
    let chi = derived.chi0;
    let amp = crate::constants::HBAR
        * derived.omega0
        * (chi.sqrt() / 4.0).powi(p as i32)
        * chi.powi(p as i32 - 1)
        * ladder
        * (derived.b0 * k).powi(p as i32)
        * i0
        * c_p;
    Ok(amp.abs())
}

/// Convenience: exact rational as a float, for report output.
pub fn rational_to_f64(r: &BigRational) -> f64 {
    r.to_f64().unwrap_or_else(|| {
        // Fall back to a manual division for pathological magnitudes.
        let num = r.numer().to_f64().unwrap_or(f64::INFINITY * sign(r));
        let den = r.denom().to_f64().unwrap_or(f64::INFINITY);
        num / den
    })
}

fn sign(r: &BigRational) -> f64 {
    if r.is_negative() {
        -1.0
    } else {
        1.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trap_model::{derive_params, TrapConfig};

    fn rational(n: i64, d: i64) -> BigRational {
        BigRational::new(BigInt::from(n), BigInt::from(d))
    }

    fn fib(n: u32) -> u64 {
        let (mut a, mut b) = (0u64, 1u64);
        for _ in 0..n {
            let t = a + b;
            a = b;
            b = t;
        }
        a
    }

    #[test]
    fn enumeration_is_lexicographic_and_fibonacci_counted() {
        let seqs = enumerate_step_sequences(4);
        let flat: Vec<&[u8]> = seqs.iter().map(|s| s.steps()).collect();
        assert_eq!(
            flat,
            vec![
                &[1u8, 1, 1, 1][..],
                &[1, 1, 2],
                &[1, 2, 1],
                &[2, 1, 1],
                &[2, 2]
            ]
        );
        for p in 1..=20 {
            let seqs = enumerate_step_sequences(p);
            assert_eq!(seqs.len() as u64, fib(p + 1), "count at p = {p}");
            assert!(seqs.iter().all(|s| s.order() == p));
            // Strictly increasing lexicographically.
            for w in seqs.windows(2) {
                assert!(w[0].steps() < w[1].steps());
            }
        }
    }

    #[test]
    fn n_coefficients_known_table() {
        let cases = [
            (1, 0, rational(1, 1)),
            (2, 0, rational(1, 1)),
            (2, 1, rational(1, 1)),
            (3, 0, rational(1, 2)),
            (3, 1, rational(3, 2)),
            (4, 0, rational(1, 6)),
            (4, 1, rational(1, 1)),
            (4, 2, rational(1, 2)),
            (5, 2, rational(5, 8)),
            (6, 2, rational(3, 8)),
            (6, 3, rational(1, 8)),
        ];
        for (p, p2, expect) in cases {
            assert_eq!(n_coefficient(p, p2).unwrap(), expect, "N_{{{p},{p2}}}");
        }
        assert!(n_coefficient(3, 2).unwrap().is_zero());
        assert!(n_coefficient(0, 0).is_err());
    }

    #[test]
    fn n_closed_forms() {
        let mut factorial = BigRational::one();
        for p in 1u32..=10 {
            if p >= 2 {
                factorial *= BigRational::from_integer(BigInt::from(p - 1));
            }
            // N_{p,0} = 1/(p-1)!
            assert_eq!(
                n_coefficient(p, 0).unwrap(),
                BigRational::one() / &factorial
            );
        }
        let mut fact_pm2 = BigRational::one();
        for p in 2u32..=10 {
            if p >= 3 {
                fact_pm2 *= BigRational::from_integer(BigInt::from(p - 2));
            }
            // N_{p,1} = p / (2 (p-2)!)
            let expect = rational(p as i64, 2) / &fact_pm2;
            assert_eq!(n_coefficient(p, 1).unwrap(), expect, "p = {p}");
        }
    }

    #[test]
    fn total_weight_splits_by_double_count() {
        // Sum over p2 of N_{p,p2} equals the weight of all sequences.
        for p in 1u32..=12 {
            let total: BigRational = enumerate_step_sequences(p)
                .iter()
                .map(StepSequence::weight)
                .fold(BigRational::zero(), |a, w| a + w);
            let by_parts: BigRational = (0..=p / 2)
                .map(|p2| n_coefficient(p, p2).unwrap())
                .fold(BigRational::zero(), |a, w| a + w);
            assert_eq!(total, by_parts);
        }
    }

    #[test]
    fn c_factor_known_values() {
        assert_eq!(c_factor(1, 2).unwrap(), rational(1, 1));
        assert_eq!(c_factor(1, 14).unwrap(), rational(1, 1));
        assert_eq!(c_factor(2, 4).unwrap(), rational(3, 2));
        assert_eq!(c_factor(3, 6).unwrap(), rational(1, 1));
        assert_eq!(c_factor(4, 8).unwrap(), rational(43, 96));
        assert_eq!(c_factor(5, 10).unwrap(), rational(3, 20));
        // Half-integer surface F_z = 3/2 at order 2.
        assert_eq!(c_factor(2, 3).unwrap(), rational(5, 3));
        assert!(c_factor(2, 0).is_err());
        assert!(c_factor(0, 2).is_err());
    }

    #[test]
    fn c_factor_limits() {
        // Large F_z leaves only the all-singles path.
        let c = c_factor(4, 2_000_000).unwrap();
        let pure = n_coefficient(4, 0).unwrap();
        let diff = rational_to_f64(&(&c - &pure));
        assert!(diff.abs() < 1e-5);
        assert!(diff > 0.0, "double steps add positively");
        // The physical diagonal C_p(F_z = p) decreases with p.
        let diag: Vec<f64> = (2..=6)
            .map(|p| rational_to_f64(&c_factor(p, 2 * p as i32).unwrap()))
            .collect();
        for w in diag.windows(2) {
            assert!(w[1] < w[0]);
        }
    }

    #[test]
    fn overlap_value() {
        // k^2 b^2 = 2 gives I0 = 2 sqrt(pi) (b/L) / e.
        let b = 3.0e-6;
        let k = 2f64.sqrt() / b;
        let l = 1.0e-2;
        let expect = 2.0 * std::f64::consts::PI.sqrt() * (b / l) / std::f64::consts::E;
        assert!((plane_wave_overlap(k, b, l) / expect - 1.0).abs() < 1e-14);
    }

    #[test]
    fn amplitude_first_order_hand_assembly() {
        // F = F_z = 1: |A| = (hbar omega0 sqrt(chi0)/4) sqrt(2) b0 k I0.
        let cfg = TrapConfig::new(
            1.0,
            100.0,
            0.0,
            0.5,
            87.0,
            SpinQuantum::new(2, 2).unwrap(),
        )
        .unwrap();
        let d = derive_params(&cfg);
        let l = 1.0e-4;
        let s = surface_params(&d, 2).unwrap();
        let k = final_wavenumber(&d, &s);
        // The physical chi0 here is ~1e-4 so exp(-k^2 b^2/2) underflows;
        // compare the amplitude with the exponential stripped by using the
        // ratio against I0 computed the same way.
        let i0 = plane_wave_overlap(k, s.b_i, l);
        assert_eq!(i0, 0.0, "this regime underflows by design");
        // Rescale to a regime where the identity is testable in f64: a
        // tiny bias and light atom push chi0 to order one.
        let cfg = TrapConfig::new(
            0.001,
            10.0,
            0.0,
            0.1,
            1.0,
            SpinQuantum::new(2, 2).unwrap(),
        )
        .unwrap();
        let d = derive_params(&cfg);
        assert!(d.chi0 > 1e-2, "chi0 = {} too deep for f64", d.chi0);
        let s = surface_params(&d, 2).unwrap();
        let k = final_wavenumber(&d, &s);
        let i0 = plane_wave_overlap(k, s.b_i, l);
        let (v1, _) = crate::adiabatic_frame::coupling_strengths(&d);
        let expect = v1 * 2f64.sqrt() * d.b0 * k * i0;
        let amp = amplitude_integer(&d, 2, 2, l).unwrap();
        assert!((amp / expect - 1.0).abs() < 1e-13);

        assert!(amplitude_integer(&d, 1, 1, l).is_err());
        assert!(amplitude_integer(&d, 2, -2, l).is_err());
        assert!(amplitude_integer(&d, 2, 2, 0.0).is_err());
    }
}
