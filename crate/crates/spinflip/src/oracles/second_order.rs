//! Explicit second-order perturbation sum for the F_z = 2 -> 1 -> 0 chain,
//! testing the closure approximation that collapses the sum over
//! intermediate oscillator states into a single -E0 denominator.
//!
//! Everything is computed in trap units (lengths in b0, energies in E0).
//! The initial state is the ground state of the F_z = 2 surface
//! (b_i = b0/2^(1/4), omega_i = sqrt(2) omega0); the intermediate states
//! are the L = -1 levels of the F_z = 1 surface with the standard 2D
//! spectrum E_n = E0 + hbar omega0 (2n + 2); the final state is a free
//! wave with k^2 b0^2 = 4/chi0. Each single-flip step carries the orbital
//! operator p- whose radial matrix elements are
//!
//!   w1_n = integral R_n(r) psi_i'(r) r dr        (first step)
//!   w2_n = integral J1(k r) R_n(r) r dr          (second step, via J2
//!                                                 partial-wave reduction)
//!
//! evaluated here by tanh-sinh quadrature in the u = r^2 variable on a
//! shared node set. Constants common to every n are dropped identically
//! from the explicit sum and from the closure reference
//!
//!   A_ref = (k b_i / sqrt(pi)) exp(-k^2 b_i^2 / 2),
//!
//! which follows from completeness of the R_n, so ratios are meaningful.
//! The integrals cancel to exp(-k^2 b_i^2 / 2) below their pointwise
//! scale, hence the MPFR working precision grows like k^2 b0^2; f64 has
//! no chance here. Each pass certifies itself: the sum with all
//! denominators forced to -E0 must reproduce A_ref (completeness), and
//! spot values of w1/w2 are checked against their closed forms.

use rug::{float::Constant, ops::Pow, Assign, Float};

use crate::trap_model::DerivedParams;
use crate::{Error, Result};

/// Which energy denominators to use in the sum.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DenominatorMode {
    /// E_{1,n} - E_i with the full zero-point energies; never exactly
    /// singular because of the sqrt(2) offset, but quasi-resonant near
    /// n = 1/(2 chi0).
    Exact,
    /// All denominators replaced by -E0; reproduces the closure value
    /// identically and serves as the completeness check.
    ForcedClosure,
}

/// Outcome of one explicit sum.
#[derive(Debug, Clone)]
pub struct SecondOrderSum {
    pub mode: DenominatorMode,
    /// Signed amplitude ratio (explicit sum) / (closure reference).
    pub ratio_to_closure: f64,
    /// Forced-denominator sum over the closure reference; 1 up to
    /// quadrature error regardless of mode, and the acceptance gate for
    /// the pass itself.
    pub completeness_check: f64,
    /// ln |explicit sum| in the dropped-constant units (underflows f64 as
    /// a plain number deep in the adiabatic regime, so only the log is
    /// reported).
    pub ln_magnitude: f64,
    /// ln |closure reference| in the same units.
    pub closure_ln_magnitude: f64,
    /// Largest relative deviation of spot-checked w1/w2 integrals from
    /// their closed forms.
    pub quadrature_spot_dev: f64,
    /// Intermediate states summed (n = 0..=n_used).
    pub n_used: usize,
    pub nodes: usize,
    pub precision_bits: u32,
    /// (n, partial sum / closure reference) checkpoints for trend and
    /// failure reports.
    pub partial_ratios: Vec<(usize, f64)>,
}

struct Pass {
    s_exact: Float,
    s_forced: Float,
    a_ref: Float,
    tail_exact: Float,
    tail_forced: Float,
    spot_dev: f64,
    partials_exact: Vec<(usize, f64)>,
    partials_forced: Vec<(usize, f64)>,
}

/// Explicit second-order amplitude for F_zi = 2. `n_max = None` sizes the
/// sum automatically and grows it until the last tenth of the terms
/// contributes under 1e-4 in absolute value; an explicit `n_max` that
/// fails that test is an error carrying the partial-sum trace.
pub fn second_order_sum(
    derived: &DerivedParams,
    n_max: Option<usize>,
    mode: DenominatorMode,
) -> Result<SecondOrderSum> {
    let chi = derived.chi0;
    if !(chi > 0.0 && chi <= 1.000_000_01e-2) {
        return Err(Error::domain(format!(
            "second_order_sum requires 0 < chi0 <= 1e-2 (got {chi:e})"
        )));
    }
    if chi < 1e-4 {
        return Err(Error::domain(
            "chi0 < 1e-4: required precision and node count grow like 1/chi0; \
             refusing a multi-hour run",
        ));
    }
    let auto = n_max.is_none();
    let mut nmax = n_max.unwrap_or_else(|| (0.9 / chi).ceil() as usize + 20);

    for attempt in 0..3 {
        let (pass, nodes, prec) = run_certified_pass(chi, nmax)?;
        let (total, tail, partials) = match mode {
            DenominatorMode::Exact => (&pass.s_exact, &pass.tail_exact, &pass.partials_exact),
            DenominatorMode::ForcedClosure => {
                (&pass.s_forced, &pass.tail_forced, &pass.partials_forced)
            }
        };
        let tail_rel = Float::with_val(64, tail / total).to_f64().abs();
        if tail_rel > 1e-4 {
            if auto && attempt < 2 {
                nmax = nmax * 3 / 2;
                continue;
            }
            let trace: Vec<String> = partials
                .iter()
                .map(|(n, r)| format!("n={n}: {r:.6e}"))
                .collect();
            return Err(Error::computation(format!(
                "second-order sum not converged at n_max = {nmax} \
                 (last tenth contributes {tail_rel:.2e} relative); \
                 partial-sum/closure trace: [{}]",
                trace.join(", ")
            )));
        }
        // With the tail under control the forced sum must land on the
        // completeness value; a miss here is a quadrature failure, not a
        // truncation artifact.
        let completeness = Float::with_val(64, &pass.s_forced / &pass.a_ref).to_f64();
        let tol = completeness_tol(chi);
        if (completeness - 1.0).abs() > tol {
            return Err(Error::computation(format!(
                "second-order quadrature failed its completeness certificate at \
                 chi0 = {chi:e}: deviation {:.2e} (tol {tol:.0e}), n_max = {nmax}, \
                 {nodes} nodes",
                (completeness - 1.0).abs()
            )));
        }
        let ratio = Float::with_val(64, total / &pass.a_ref).to_f64();
        return Ok(SecondOrderSum {
            mode,
            ratio_to_closure: ratio,
            completeness_check: completeness,
            ln_magnitude: total.clone().abs().ln().to_f64(),
            closure_ln_magnitude: pass.a_ref.clone().abs().ln().to_f64(),
            quadrature_spot_dev: pass.spot_dev,
            n_used: nmax,
            nodes,
            precision_bits: prec,
            partial_ratios: partials.clone(),
        });
    }
    unreachable!("loop either returns or errors")
}

// Certificate threshold on the forced sum: the cheap regime must support
// the 1e-10 hard gate, the deep regime only needs the measured O(10)
// ratios.
fn completeness_tol(chi: f64) -> f64 {
    if chi < 3e-3 {
        1e-9
    } else {
        2e-11
    }
}

const MAX_NODES: usize = 40960;

// Runs passes with growing node counts and precision until the per-n spot
// certificate holds. Completeness is judged by the caller once the
// n-truncation tail is known to be negligible; conflating the two here
// would misdiagnose a short sum as a bad grid.
fn run_certified_pass(chi: f64, nmax: usize) -> Result<(Pass, usize, u32)> {
    let u0 = 4.0 / chi; // k^2 b0^2
    let mut prec = (0.55 * u0 + 320.0).ceil() as u32;
    let (mut nodes, raw_est) = estimate_nodes(chi, nmax);
    if raw_est > MAX_NODES as f64 {
        return Err(Error::computation(format!(
            "second-order quadrature at chi0 = {chi:e}, n_max = {nmax} wants \
             ~{raw_est:.0} nodes, past the certified budget of {MAX_NODES}; \
             the Bessel phase grows like 1/chi0, so the practical floor of \
             this oracle is chi0 of a few 1e-4"
        )));
    }
    let mut last = (f64::NAN, nodes);
    for _ in 0..2 {
        let pass = compute_pass(chi, nmax, nodes, prec);
        if pass.spot_dev <= 1e-5 {
            return Ok((pass, nodes, prec));
        }
        last = (pass.spot_dev, nodes);
        nodes = (nodes * 3 / 2).div_ceil(2048) * 2048;
        prec += prec / 4 + 64;
    }
    Err(Error::computation(format!(
        "second-order quadrature failed its spot certificate at chi0 = {chi:e}: \
         deviation {:.2e} (tol 1e-5), {} nodes",
        last.0, last.1
    )))
}

// Node-count model for the tanh-sinh rule: the integrands oscillate like
// exp(i k r) and like the Laguerre phase, which limits how far the rule's
// exponential convergence reaches; see the scaling constants below. Returns
// the clamped count and the raw estimate; a raw estimate past MAX_NODES
// means the chi0 requested cannot be certified at sane cost.
fn estimate_nodes(chi: f64, nmax: usize) -> (usize, f64) {
    let u0 = 4.0 / chi;
    let k = u0.sqrt();
    let u_cut = u_cutoff(nmax);
    let pen_bessel = k * 0.555 * u_cut.sqrt();
    let pen_laguerre = 0.267 * u_cut;
    let target = u0 / (2.0 * 2f64.sqrt()) + 60.0;
    let width = 9.3; // t range below
    let delta = 1.2; // usable analyticity strip of the node map
    let est = 1.12 * ((pen_bessel + pen_laguerre) * delta + target)
        / (std::f64::consts::PI * delta / width);
    (
        (est as usize).clamp(8192, MAX_NODES).div_ceil(2048) * 2048,
        est,
    )
}

// Radial cutoff in u = r^2: the turning point of the highest kept state
// plus ten oscillator lengths, which covers the quasi-resonant states'
// Airy tails with room to spare.
fn u_cutoff(nmax: usize) -> f64 {
    let u_t = (4 * nmax + 4) as f64;
    let r = u_t.sqrt() + 10.0;
    r * r
}

fn compute_pass(chi: f64, nmax: usize, nodes: usize, prec: u32) -> Pass {
    let f = |v: f64| Float::with_val(prec, v);
    let pi = Float::with_val(prec, Constant::Pi);
    let sqrt2 = f(2.0).sqrt();
    // b_i^2 = 1/sqrt(2); gamma = (1 + sqrt 2)/2 is the combined Gaussian
    // exponent of the initial state and an intermediate state.
    let b_i2 = Float::with_val(prec, sqrt2.recip_ref());
    let b_i = b_i2.clone().sqrt();
    let mut gamma = Float::with_val(prec, &sqrt2 + 1u32);
    gamma /= 2u32;
    let mut k2 = f(chi);
    k2.recip_mut();
    k2 *= 4u32;
    let k = k2.clone().sqrt();
    let u_cut = f(u_cutoff(nmax));

    // w1 carries -1/(2 b_i^3 sqrt(pi)) from psi_i'; fold it into the node
    // factor so the accumulators hold the full matrix elements except for
    // the shared sqrt(2/(n+1)).
    let mut c1 = Float::with_val(prec, b_i2.clone() * &b_i * 2u32);
    c1 *= pi.clone().sqrt();
    c1.recip_mut();
    c1 = -c1;

    let t_left = -6.3f64;
    let width = 9.3f64;
    let h = Float::with_val(prec, width) / (nodes as u32 - 1);
    let half_pi = Float::with_val(prec, &pi / 2u32);

    let mut acc1: Vec<Float> = (0..=nmax).map(|_| Float::new(prec)).collect();
    let mut acc2: Vec<Float> = (0..=nmax).map(|_| Float::new(prec)).collect();

    // Scratch registers reused across the hot loop.
    let mut a_prev = Float::new(prec);
    let mut a_cur = Float::new(prec);
    let mut b_prev = Float::new(prec);
    let mut b_cur = Float::new(prec);
    let mut coef = Float::new(prec);
    let mut scratch = Float::new(prec);

    for j in 0..nodes {
        let mut t = Float::with_val(prec, j as u32);
        t *= &h;
        t += t_left;
        // u = U / (1 + exp(-2y)), y = (pi/2) sinh t; the exp form keeps
        // full relative precision at both endpoints.
        let mut y = t.clone().sinh();
        y *= &half_pi;
        let mut e2y = Float::with_val(prec, &y * -2i32);
        e2y.exp_mut();
        drop(y);
        let mut u = Float::with_val(prec, &e2y + 1u32);
        u.recip_mut();
        u *= &u_cut;
        // du/dt = U (pi/2) cosh t / (2 cosh^2 y), cosh^2 y from e2y.
        let mut cosh2y = Float::with_val(prec, e2y.recip_ref());
        cosh2y += &e2y;
        cosh2y += 2u32;
        cosh2y /= 4u32;
        let mut wgt = t.cosh();
        wgt *= &half_pi;
        wgt *= &u_cut;
        wgt /= 2u32;
        wgt /= &cosh2y;
        wgt *= &h;

        let r = u.clone().sqrt();
        let j1 = Float::with_val(prec, &k * &r).j1();
        // p2 = (1/2) J1(k r) sqrt(u) exp(-u/2) wgt
        let mut p2 = Float::with_val(prec, &u / -2i32);
        p2.exp_mut();
        p2 *= &j1;
        p2 *= &r;
        p2 *= &wgt;
        p2 /= 2u32;
        // p1 = -u exp(-gamma u) wgt / (2 b_i^3 sqrt(pi))
        let mut p1 = Float::with_val(prec, &gamma * &u);
        p1 = -p1;
        p1.exp_mut();
        p1 *= &u;
        p1 *= &wgt;
        p1 *= &c1;

        // Both rows carry m_n = p L_n^(1)(u), which obeys the Laguerre
        // recurrence itself; folding p into the seeds replaces the per-n
        // products p * L_n with the single recurrence multiply.
        a_prev.assign(&p1); // n = 0
        b_prev.assign(&p2);
        acc1[0] += &a_prev;
        acc2[0] += &b_prev;
        if nmax == 0 {
            continue;
        }
        coef.assign(2u32); // L_1 = 2 - u
        coef -= &u;
        a_cur.assign(&coef * &p1);
        b_cur.assign(&coef * &p2);
        acc1[1] += &a_cur;
        acc2[1] += &b_cur;
        for n in 1..nmax {
            // (n+1) m_{n+1} = (2n+2-u) m_n - (n+1) m_{n-1}
            coef.assign(2 * n as u32 + 2);
            coef -= &u;
            a_prev *= n as u32 + 1;
            scratch.assign(&coef * &a_cur);
            scratch -= &a_prev;
            scratch /= n as u32 + 1;
            std::mem::swap(&mut a_prev, &mut a_cur);
            std::mem::swap(&mut a_cur, &mut scratch);
            acc1[n + 1] += &a_cur;
            b_prev *= n as u32 + 1;
            scratch.assign(&coef * &b_cur);
            scratch -= &b_prev;
            scratch /= n as u32 + 1;
            std::mem::swap(&mut b_prev, &mut b_cur);
            std::mem::swap(&mut b_cur, &mut scratch);
            acc2[n + 1] += &b_cur;
        }
    }

    // Closure reference from completeness: (k b_i / sqrt pi) e^{-k^2 b_i^2/2}.
    let mut a_ref = Float::with_val(prec, &k2 * &b_i2);
    a_ref /= -2i32;
    a_ref.exp_mut();
    a_ref *= &k;
    a_ref *= &b_i;
    a_ref /= pi.clone().sqrt();

    // Assemble both denominator variants in one n sweep.
    let mut s_exact = Float::new(prec);
    let mut s_forced = Float::new(prec);
    let mut tail_exact = Float::new(prec);
    let mut tail_forced = Float::new(prec);
    let tail_start = nmax - nmax / 10;
    let checkpoint = (nmax / 10).max(1);
    let mut partials_exact = Vec::new();
    let mut partials_forced = Vec::new();
    let chi_f = f(chi);
    let mut term = Float::new(prec);
    let mut denom = Float::new(prec);
    for n in 0..=nmax {
        term.assign(&acc1[n] * &acc2[n]);
        term *= 2u32;
        term /= n as u32 + 1;
        // Forced variant: denominator -1 exactly.
        s_forced -= &term;
        if n >= tail_start {
            scratch.assign(term.abs_ref());
            tail_forced += &scratch;
        }
        // Exact variant: D_n = chi (2n + 2 - sqrt 2) - 1 in units of E0.
        denom.assign(2 * n as u32 + 2);
        denom -= &sqrt2;
        denom *= &chi_f;
        denom -= 1u32;
        term /= &denom;
        s_exact += &term;
        if n >= tail_start {
            scratch.assign(term.abs_ref());
            tail_exact += &scratch;
        }
        if n % checkpoint == 0 || n == nmax {
            partials_exact.push((n, Float::with_val(64, &s_exact / &a_ref).to_f64()));
            partials_forced.push((n, Float::with_val(64, &s_forced / &a_ref).to_f64()));
        }
    }

    let spot_dev = spot_check(&acc1, &acc2, &k2, &gamma, &c1, prec, nmax);

    Pass {
        s_exact,
        s_forced,
        a_ref,
        tail_exact,
        tail_forced,
        spot_dev,
        partials_exact,
        partials_forced,
    }
}

// Compares quadrature w1/w2 values (without the common sqrt(2/(n+1)))
// against their closed forms
//   w1_n = c1 (n+1) (gamma-1)^n / gamma^(n+2)
//   w2_n = (-1)^n k e^{-k^2/2} L_n^1(k^2)
// (the latter is the Hankel self-transform of the Laguerre ladder) at a
// spread of n from the small-n floor through the quasi-resonant region up
// to n_max. A spot whose closed form sits below the quadrature roundoff
// floor certifies nothing but its own noise and is skipped: deep in the
// adiabatic regime w2 at small n is e^{-k^2/2} ~ 10^(-860) while the sum
// only ever uses it 250 orders below the total. w1 at n = 0, 1 is of
// order one, so the certificate never goes vacuous.
fn spot_check(
    acc1: &[Float],
    acc2: &[Float],
    k2: &Float,
    gamma: &Float,
    c1: &Float,
    prec: u32,
    nmax: usize,
) -> f64 {
    let spots: std::collections::BTreeSet<usize> =
        [0, 1, nmax / 8, nmax / 4, nmax / 2, nmax].into_iter().collect();
    let floor_exp = -(i64::from(prec) - 128);
    // Laguerre values at k^2 by one upward sweep.
    let mut lag_at = std::collections::BTreeMap::new();
    let mut l_prev = Float::with_val(prec, 1u32);
    let mut l_cur = Float::with_val(prec, 2u32);
    l_cur -= k2;
    let mut l_next = Float::new(prec);
    let mut tmp = Float::new(prec);
    for n in 0..=nmax {
        let lval = if n == 0 { &l_prev } else { &l_cur };
        if spots.contains(&n) {
            lag_at.insert(n, lval.clone());
        }
        if n >= 1 && n < nmax {
            l_next.assign(2 * n as u32 + 2);
            l_next -= k2;
            l_next *= &l_cur;
            tmp.assign(&l_prev);
            tmp *= n as u32 + 1;
            l_next -= &tmp;
            l_next /= n as u32 + 1;
            std::mem::swap(&mut l_prev, &mut l_cur);
            std::mem::swap(&mut l_cur, &mut l_next);
        }
    }
    let k = k2.clone().sqrt();
    let mut e_half = Float::with_val(prec, k2 / -2i32);
    e_half.exp_mut();
    let gm1 = Float::with_val(prec, gamma - 1u32);
    let mut worst = 0.0f64;
    let above_floor =
        |v: &Float| v.get_exp().is_some_and(|e| i64::from(e) >= floor_exp);
    for &n in &spots {
        let mut w2_closed = k.clone();
        w2_closed *= &e_half;
        w2_closed *= &lag_at[&n];
        if n % 2 == 1 {
            w2_closed = -w2_closed;
        }
        if above_floor(&w2_closed) {
            let dev2 = (Float::with_val(64, &acc2[n] / &w2_closed).to_f64() - 1.0).abs();
            worst = worst.max(dev2);
        }

        let mut w1_closed = Float::with_val(prec, (&gm1).pow(n as u32));
        w1_closed *= c1;
        w1_closed *= n as u32 + 1;
        w1_closed /= Float::with_val(prec, gamma.pow(n as u32 + 2));
        if above_floor(&w1_closed) {
            let dev1 = (Float::with_val(64, &acc1[n] / &w1_closed).to_f64() - 1.0).abs();
            worst = worst.max(dev1);
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constants::HBAR;

    // Only chi0 enters the dimensionless sum; the other fields are inert.
    fn params(chi: f64) -> DerivedParams {
        DerivedParams {
            omega0: 1.0,
            b0: 1.0,
            chi0: chi,
            e0: HBAR / chi,
            omega_prec: 1.0 / chi,
            mass_kg: HBAR,
        }
    }

    #[test]
    fn forced_denominators_reproduce_closure() {
        let d = params(1e-2);
        let r = second_order_sum(&d, None, DenominatorMode::ForcedClosure).unwrap();
        assert!(
            (r.ratio_to_closure - 1.0).abs() < 1e-10,
            "completeness broken: {}",
            r.ratio_to_closure
        );
        assert!(r.quadrature_spot_dev < 1e-8, "spot {}", r.quadrature_spot_dev);
        assert!((r.ln_magnitude - r.closure_ln_magnitude).abs() < 1e-9);
    }

    #[test]
    fn exact_denominators_at_chi_hundredth() {
        let d = params(1e-2);
        let r = second_order_sum(&d, None, DenominatorMode::Exact).unwrap();
        // Frozen from an independent 3000-digit implementation using
        // closed-form matrix elements: the exact sum is resonance
        // dominated and overshoots closure by a factor -7.86, not the
        // O(chi0) agreement the closure argument suggests.
        assert!(
            (r.ratio_to_closure / -7.863_748_9 - 1.0).abs() < 1e-3,
            "ratio {}",
            r.ratio_to_closure
        );
        assert!((r.completeness_check - 1.0).abs() < 1e-10);
        assert!(r.n_used >= 90);
        assert!(!r.partial_ratios.is_empty());
    }

    #[test]
    fn domain_and_convergence_errors() {
        assert!(second_order_sum(&params(2e-2), None, DenominatorMode::Exact).is_err());
        assert!(second_order_sum(&params(5e-5), None, DenominatorMode::Exact).is_err());
        // Far too small an explicit n_max cuts the sum inside the
        // quasi-resonant region and must refuse with a trace.
        let err = second_order_sum(&params(1e-2), Some(30), DenominatorMode::Exact)
            .unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("not converged"), "{msg}");
        assert!(msg.contains("n="), "{msg}");
    }
}
