//! Exact spin bookkeeping, ladder-operator matrix elements, and the
//! closed-form angular factors that enter the escape rates.
//!
//! Spin labels are stored as doubled integers (`two_f` = 2F, `two_fz` =
//! 2F_z) so half-integer spins stay exact; conversion to `f64` happens only
//! when a formula is evaluated. The dense matrix basis is descending F_z
//! (F, F-1, ..., -F) throughout.

use ndarray::Array2;
use num_complex::Complex64;

use crate::{Error, Result};

/// Largest supported 2F. Covers every physical hyperfine spin with margin
/// while keeping all factorial products inside u128.
pub const MAX_TWO_F: u32 = 24;

/// A spin state (F, F_z) with both labels doubled to keep half-integers
/// exact.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SpinQuantum {
    two_f: u32,
    two_fz: i32,
}

impl SpinQuantum {
    /// Validates |F_z| <= F, matching parity, F >= 1/2 and the 2F = 24 cap.
    pub fn new(two_f: u32, two_fz: i32) -> Result<Self> {
        if two_f < 1 {
            return Err(Error::domain("two_f must be >= 1"));
        }
        if two_f > MAX_TWO_F {
            return Err(Error::domain(format!(
                "two_f = {two_f} exceeds supported maximum {MAX_TWO_F}"
            )));
        }
        if two_fz.unsigned_abs() > two_f {
            return Err(Error::domain(format!(
                "|two_fz| = {} exceeds two_f = {two_f}",
                two_fz.abs()
            )));
        }
        if (two_fz.rem_euclid(2) as u32) != two_f % 2 {
            return Err(Error::domain(format!(
                "two_fz = {two_fz} and two_f = {two_f} differ in parity"
            )));
        }
        Ok(SpinQuantum { two_f, two_fz })
    }

    pub fn two_f(&self) -> u32 {
        self.two_f
    }

    pub fn two_fz(&self) -> i32 {
        self.two_fz
    }

    pub fn f(&self) -> f64 {
        self.two_f as f64 / 2.0
    }

    pub fn fz(&self) -> f64 {
        self.two_fz as f64 / 2.0
    }

    /// True for integral F (even 2F).
    pub fn is_integer_spin(&self) -> bool {
        self.two_f % 2 == 0
    }

    /// Matrix dimension 2F+1.
    pub fn dim(&self) -> usize {
        self.two_f as usize + 1
    }
}

/// The standard angular momentum matrices for total spin F in the
/// descending-F_z basis, plus the ladder combinations.
///
/// F_plus = F_x + i F_y and F_minus = F_x - i F_y hold exactly as
/// constructed (F_x, F_y are built from the ladder pair, not the other way
/// round).
#[derive(Debug, Clone)]
pub struct SpinOperators {
    pub fx: Array2<Complex64>,
    pub fy: Array2<Complex64>,
    pub fz: Array2<Complex64>,
    pub fplus: Array2<Complex64>,
    pub fminus: Array2<Complex64>,
}

impl SpinOperators {
    pub fn dim(&self) -> usize {
        self.fz.nrows()
    }
}

fn check_total(two_f: u32) -> Result<()> {
    if two_f < 1 || two_f > MAX_TWO_F {
        return Err(Error::domain(format!(
            "total spin two_f = {two_f} outside supported range 1..={MAX_TWO_F}"
        )));
    }
    Ok(())
}

/// Ladder coefficient sqrt(F(F+1) - m(m-1)) for F_- |m> -> |m-1>.
///
/// The radicand is evaluated as the exact integer
/// [2F(2F+2) - 2m(2m-2)] / 4 before the square root.
pub fn lowering_coefficient(two_f: u32, two_m: i32) -> Result<f64> {
    check_total(two_f)?;
    if two_m.unsigned_abs() > two_f || (two_m.rem_euclid(2) as u32) != two_f % 2 {
        return Err(Error::domain(format!(
            "two_m = {two_m} is not a projection of two_f = {two_f}"
        )));
    }
    if two_m - 2 < -(two_f as i32) {
        return Err(Error::domain(format!(
            "lowering from two_m = {two_m} exits the two_f = {two_f} multiplet"
        )));
    }
    let tf = two_f as i64;
    let tm = two_m as i64;
    let quadrupled = tf * (tf + 2) - tm * (tm - 2);
    Ok((quadrupled as f64 / 4.0).sqrt())
}

/// Dense F_x, F_y, F_z, F_+, F_- for total spin F (two_f = 2F).
pub fn spin_matrices(two_f: u32) -> Result<SpinOperators> {
    check_total(two_f)?;
    let dim = two_f as usize + 1;
    let mut fz = Array2::<Complex64>::zeros((dim, dim));
    let mut fminus = Array2::<Complex64>::zeros((dim, dim));
    for i in 0..dim {
        let two_m = two_f as i32 - 2 * i as i32;
        fz[(i, i)] = Complex64::new(two_m as f64 / 2.0, 0.0);
        // F_- |m> = c |m-1>; |m-1> sits one row below in descending order.
        if i + 1 < dim {
            fminus[(i + 1, i)] = Complex64::new(lowering_coefficient(two_f, two_m)?, 0.0);
        }
    }
    let fplus = conjugate_transpose(&fminus);
    let half = Complex64::new(0.5, 0.0);
    let half_over_i = Complex64::new(0.0, -0.5);
    let fx = (&fplus + &fminus) * half;
    let fy = (&fplus - &fminus) * half_over_i;
    Ok(SpinOperators {
        fx,
        fy,
        fz,
        fplus,
        fminus,
    })
}

pub(crate) fn conjugate_transpose(a: &Array2<Complex64>) -> Array2<Complex64> {
    a.t().mapv(|z| z.conj())
}

/// <F_zf | F_-^p | F_zi> as the product of ladder coefficients over the
/// p = F_zi - F_zf steps; strictly positive.
pub fn lowering_power_element(state_i: SpinQuantum, two_fz_final: i32) -> Result<f64> {
    let two_f = state_i.two_f();
    if (two_fz_final.rem_euclid(2) as u32) != two_f % 2 {
        return Err(Error::domain(format!(
            "two_fz_final = {two_fz_final} has wrong parity for two_f = {two_f} (p not an integer)"
        )));
    }
    if two_fz_final < -(two_f as i32) {
        return Err(Error::domain(format!(
            "two_fz_final = {two_fz_final} lies below -two_f = {}",
            -(two_f as i32)
        )));
    }
    if two_fz_final >= state_i.two_fz() {
        return Err(Error::domain(
            "final projection must lie strictly below the initial one",
        ));
    }
    let mut product = 1.0;
    let mut two_m = state_i.two_fz();
    while two_m > two_fz_final {
        product *= lowering_coefficient(two_f, two_m)?;
        two_m -= 2;
    }
    Ok(product)
}

/// |<0| F_-^p |p>|^2 = (F+p)!/(F-p)! for integral F, evaluated exactly in
/// integer arithmetic.
pub fn angular_factor_integer(two_f: u32, p: u32) -> Result<f64> {
    check_total(two_f)?;
    if two_f % 2 != 0 {
        return Err(Error::domain(
            "angular_factor_integer requires integral F (even two_f)",
        ));
    }
    let f = two_f / 2;
    if p < 1 || p > f {
        return Err(Error::domain(format!(
            "step count p = {p} outside 1..=F = {f} (ladder exits the multiplet)"
        )));
    }
    // (F+p)!/(F-p)! = (F-p+1)(F-p+2)...(F+p)
    let mut acc: u128 = 1;
    for j in (f - p + 1)..=(f + p) {
        acc *= j as u128;
    }
    Ok(acc as f64)
}

/// |<-1/2| F_-^p |p - 1/2>|^2 = (F + 1/2) (F+p-1/2)!/(F-p+1/2)! for
/// half-integral F, evaluated exactly in integer arithmetic.
pub fn angular_factor_half_integer(two_f: u32, p: u32) -> Result<f64> {
    check_total(two_f)?;
    if two_f % 2 != 1 {
        return Err(Error::domain(
            "angular_factor_half_integer requires half-integral F (odd two_f)",
        ));
    }
    // F + 1/2, F + p - 1/2 and F - p + 1/2 are all integers here.
    let f_plus_half = (two_f + 1) / 2;
    if p < 1 || p > f_plus_half {
        return Err(Error::domain(format!(
            "step count p = {p} outside 1..=F+1/2 = {f_plus_half}"
        )));
    }
    let hi = (two_f - 1) / 2 + p; // F + p - 1/2
    let lo = f_plus_half - p; // F - p + 1/2
    let mut acc: u128 = f_plus_half as u128;
    for j in (lo + 1)..=hi {
        acc *= j as u128;
    }
    Ok(acc as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rel_err(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
    }

    fn max_abs(a: &Array2<Complex64>) -> f64 {
        a.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    #[test]
    fn quantum_numbers_validate() {
        assert!(SpinQuantum::new(2, 2).is_ok());
        assert!(SpinQuantum::new(1, -1).is_ok());
        assert!(SpinQuantum::new(0, 0).is_err()); // F >= 1/2
        assert!(SpinQuantum::new(2, 3).is_err()); // |F_z| > F
        assert!(SpinQuantum::new(4, 3).is_err()); // parity
        assert!(SpinQuantum::new(26, 0).is_err()); // cap
        let s = SpinQuantum::new(3, 1).unwrap();
        assert_eq!(s.f(), 1.5);
        assert_eq!(s.fz(), 0.5);
        assert!(!s.is_integer_spin());
    }

    #[test]
    fn lowering_coefficient_examples() {
        // F=1, m=1 -> sqrt(2)
        assert!(rel_err(lowering_coefficient(2, 2).unwrap(), 2f64.sqrt()) < 1e-15);
        // F=1/2, m=1/2 -> 1
        assert!(rel_err(lowering_coefficient(1, 1).unwrap(), 1.0) < 1e-15);
        // F=2, m=-2: bottom of the ladder
        assert!(lowering_coefficient(4, -4).is_err());
        // invalid projection
        assert!(lowering_coefficient(2, 3).is_err());
    }

    #[test]
    fn spin_half_matrices_are_pauli_over_two() {
        let ops = spin_matrices(1).unwrap();
        assert!((ops.fz[(0, 0)] - Complex64::new(0.5, 0.0)).norm() < 1e-15);
        assert!((ops.fz[(1, 1)] - Complex64::new(-0.5, 0.0)).norm() < 1e-15);
        assert!((ops.fx[(0, 1)] - Complex64::new(0.5, 0.0)).norm() < 1e-15);
        assert!((ops.fy[(0, 1)] - Complex64::new(0.0, -0.5)).norm() < 1e-15);
    }

    #[test]
    fn spin_one_lowering_subdiagonal() {
        let ops = spin_matrices(2).unwrap();
        let c = 2f64.sqrt();
        assert!((ops.fminus[(1, 0)].re - c).abs() < 1e-15);
        assert!((ops.fminus[(2, 1)].re - c).abs() < 1e-15);
        assert!(ops.fminus[(0, 0)].norm() < 1e-15);
        assert!(ops.fminus[(2, 0)].norm() < 1e-15);
    }

    #[test]
    fn casimir_f_equals_two() {
        let ops = spin_matrices(4).unwrap();
        let casimir = ops.fx.dot(&ops.fx) + ops.fy.dot(&ops.fy) + ops.fz.dot(&ops.fz);
        let expect = Array2::<Complex64>::eye(5) * Complex64::new(6.0, 0.0);
        assert!(max_abs(&(&casimir - &expect)) < 1e-12);
    }

    #[test]
    fn commutators_and_adjoints_all_f() {
        let i = Complex64::i();
        for two_f in 1..=12 {
            let ops = spin_matrices(two_f).unwrap();
            // [F_x, F_y] = i F_z
            let comm = ops.fx.dot(&ops.fy) - ops.fy.dot(&ops.fx);
            assert!(max_abs(&(&comm - &ops.fz.mapv(|z| z * i))) < 1e-12);
            // F_+ = F_- adjoint
            assert!(max_abs(&(&ops.fplus - &conjugate_transpose(&ops.fminus))) < 1e-15);
            // [F_z, F_-] = -F_-
            let comm = ops.fz.dot(&ops.fminus) - ops.fminus.dot(&ops.fz);
            assert!(max_abs(&(&comm + &ops.fminus)) < 1e-12);
        }
    }

    #[test]
    fn lowering_power_examples() {
        let s = SpinQuantum::new(2, 2).unwrap();
        assert!(rel_err(lowering_power_element(s, 0).unwrap(), 2f64.sqrt()) < 1e-15);
        let s = SpinQuantum::new(4, 4).unwrap();
        assert!(rel_err(lowering_power_element(s, 0).unwrap(), 2.0 * 6f64.sqrt()) < 1e-15);
        let s = SpinQuantum::new(1, 1).unwrap();
        assert!(rel_err(lowering_power_element(s, -1).unwrap(), 1.0) < 1e-15);
        // parity mismatch: p would not be an integer
        let s = SpinQuantum::new(4, 4).unwrap();
        assert!(lowering_power_element(s, 1).is_err());
        // below the bottom of the ladder
        assert!(lowering_power_element(s, -6).is_err());
        // not a lowering at all
        assert!(lowering_power_element(s, 4).is_err());
    }

    #[test]
    fn angular_factor_examples() {
        assert_eq!(angular_factor_integer(4, 2).unwrap(), 24.0);
        assert_eq!(angular_factor_integer(2, 1).unwrap(), 2.0);
        assert_eq!(angular_factor_integer(6, 1).unwrap(), 12.0);
        assert!(angular_factor_integer(4, 3).is_err());
        assert!(angular_factor_integer(3, 1).is_err());

        assert_eq!(angular_factor_half_integer(1, 1).unwrap(), 1.0);
        assert_eq!(angular_factor_half_integer(3, 2).unwrap(), 12.0);
        assert_eq!(angular_factor_half_integer(5, 1).unwrap(), 9.0);
        assert!(angular_factor_half_integer(3, 3).is_err());
        assert!(angular_factor_half_integer(4, 1).is_err());
    }

    #[test]
    fn closed_forms_match_ladder_products() {
        // Integer F: |<0|F_-^p|p>|^2 vs (F+p)!/(F-p)! for every F <= 6, p <= F.
        for f in 1..=6u32 {
            for p in 1..=f {
                let s = SpinQuantum::new(2 * f, 2 * p as i32).unwrap();
                let elem = lowering_power_element(s, 0).unwrap();
                let closed = angular_factor_integer(2 * f, p).unwrap();
                assert!(
                    rel_err(elem * elem, closed) < 1e-12,
                    "integer F={f} p={p}: {} vs {closed}",
                    elem * elem
                );
            }
        }
        // Half-integer F: |<-1/2|F_-^p|p-1/2>|^2 vs (F+1/2)(F+p-1/2)!/(F-p+1/2)!.
        for two_f in [1u32, 3, 5, 7, 9, 11] {
            let p_max = (two_f + 1) / 2;
            for p in 1..=p_max {
                let s = SpinQuantum::new(two_f, 2 * p as i32 - 1).unwrap();
                let elem = lowering_power_element(s, -1).unwrap();
                let closed = angular_factor_half_integer(two_f, p).unwrap();
                assert!(
                    rel_err(elem * elem, closed) < 1e-12,
                    "half-integer two_f={two_f} p={p}"
                );
            }
        }
    }
}
