//! Rotation to the frame that follows the local field direction, and the
//! gauge potentials that rotation generates.
//!
//! The unitary is U = exp(i pi n.F) where n is the unit bisector between
//! the local field direction and the z axis; conjugation by U maps B_hat.F
//! onto F_z, so the Zeeman term is diagonal in the rotated frame and the
//! entire spin-flip coupling moves into A = -i hbar U^dag grad U. A splits
//! into three pieces with distinct selection rules:
//!
//!   A1_x = 2 hbar alpha beta F_y,  A1_y = 2 hbar alpha beta F_x
//!   A2_x = 2 hbar beta^2 y F_z,    A2_y = -2 hbar beta^2 x F_z
//!   A3_k = 2 hbar g_k (y F_x + x F_y),  g = alpha grad beta - beta grad alpha
//!
//! with alpha^2 = (B0+B)/2B, beta^2 = lambda^2/(2B(B0+B)) and n =
//! (beta x, -beta y, alpha). A1 drives single flips, A2 is diagonal, A3 is
//! the small curvature correction; A2.A3 = 0 identically.

use ndarray::Array2;
use num_complex::Complex64;

use crate::constants::HBAR;
use crate::spin_algebra::SpinOperators;
use crate::trap_model::{field_magnitude, DerivedParams, TrapConfig};

/// Local bisector frame at one point: alpha is dimensionless, beta carries
/// 1/m so that beta*x is dimensionless, nvec is the unit rotation axis.
#[derive(Debug, Clone, Copy)]
pub struct BisectorFrame {
    pub alpha: f64,
    pub beta: f64,
    pub nvec: [f64; 3],
}

/// Gauge potential at one point, split into its three coupling pieces.
/// Each entry is the (x, y, z) component as a spin matrix in SI units
/// (J s / m); the z components vanish for this field geometry.
#[derive(Debug, Clone)]
pub struct GaugePotential {
    pub a1: [Array2<Complex64>; 3],
    pub a2: [Array2<Complex64>; 3],
    pub a3: [Array2<Complex64>; 3],
}

impl GaugePotential {
    /// Componentwise sum a1 + a2 + a3, the full -i hbar U^dag grad U.
    pub fn total(&self) -> [Array2<Complex64>; 3] {
        [0, 1, 2].map(|k| &(&self.a1[k] + &self.a2[k]) + &self.a3[k])
    }
}

/// Bisector frame at a position given in meters.
pub fn bisector(cfg: &TrapConfig, r: [f64; 3]) -> BisectorFrame {
    let b0 = cfg.bias_field_gauss();
    let b = field_magnitude(cfg, r);
    let lam = cfg.gradient_gauss_per_m();
    let alpha = ((b0 + b) / (2.0 * b)).sqrt();
    let beta = lam / (2.0 * b * (b0 + b)).sqrt();
    BisectorFrame {
        alpha,
        beta,
        nvec: [beta * r[0], -beta * r[1], alpha],
    }
}

/// U = exp(i pi n.F) for the given frame, in the descending-F_z basis.
pub fn rotation_matrix(frame: &BisectorFrame, ops: &SpinOperators) -> Array2<Complex64> {
    let n = frame.nvec;
    let mut arg = &ops.fx * Complex64::new(n[0], 0.0)
        + &ops.fy * Complex64::new(n[1], 0.0)
        + &ops.fz * Complex64::new(n[2], 0.0);
    arg.mapv_inplace(|z| z * Complex64::new(0.0, std::f64::consts::PI));
    expm(&arg)
}

/// Analytic gauge potential at a position in meters. The derivative vector
/// g is assembled from d(alpha)/dB, d(beta)/dB and grad B rather than its
/// simplified closed form, so the sign conventions stay tied to the
/// definitions of alpha and beta.
pub fn gauge_potential(cfg: &TrapConfig, ops: &SpinOperators, r: [f64; 3]) -> GaugePotential {
    let frame = bisector(cfg, r);
    let (alpha, beta) = (frame.alpha, frame.beta);
    let b0 = cfg.bias_field_gauss();
    let b = field_magnitude(cfg, r);
    let lam = cfg.gradient_gauss_per_m();
    let (x, y) = (r[0], r[1]);

    // dA/dB at fixed lambda, B0; B in Gauss so the Gauss factors cancel
    // against grad B below.
    let dalpha_db = -b0 / (4.0 * alpha * b * b);
    let dbeta_db = -lam * (2.0 * b + b0) * (2.0 * b * (b + b0)).powf(-1.5);
    // grad B = lambda^2 (x, y, 0)/B, Gauss per meter.
    let grad_b = [lam * lam * x / b, lam * lam * y / b, 0.0];
    let gcoef = alpha * dbeta_db - beta * dalpha_db; // 1/(m Gauss)
    let g = [gcoef * grad_b[0], gcoef * grad_b[1], 0.0];

    let re = |v: f64| Complex64::new(v, 0.0);
    let zero = Array2::<Complex64>::zeros(ops.fz.raw_dim());
    let a1 = [
        &ops.fy * re(2.0 * HBAR * alpha * beta),
        &ops.fx * re(2.0 * HBAR * alpha * beta),
        zero.clone(),
    ];
    let a2 = [
        &ops.fz * re(2.0 * HBAR * beta * beta * y),
        &ops.fz * re(-2.0 * HBAR * beta * beta * x),
        zero.clone(),
    ];
    let mixed = &(&ops.fx * re(y)) + &(&ops.fy * re(x));
    let a3 = [
        &mixed * re(2.0 * HBAR * g[0]),
        &mixed * re(2.0 * HBAR * g[1]),
        zero,
    ];
    GaugePotential { a1, a2, a3 }
}

/// Energy scales of the first and second order couplings: the single-flip
/// matrix elements carry hbar omega0 sqrt(chi0)/4 per step and the
/// double-flip ones hbar omega0 chi0^2/16.
pub fn coupling_strengths(derived: &DerivedParams) -> (f64, f64) {
    let v1 = HBAR * derived.omega0 * derived.chi0.sqrt() / 4.0;
    let v2 = HBAR * derived.omega0 * derived.chi0 * derived.chi0 / 16.0;
    (v1, v2)
}

// Matrix exponential by Pade(13) with scaling and squaring. Dimensions
// here are at most 13 (two_f <= 24), so dense LU is plenty.
fn expm(a: &Array2<Complex64>) -> Array2<Complex64> {
    let n = a.nrows();
    assert_eq!(n, a.ncols());
    const THETA13: f64 = 5.371_920_351_148_152;
    let norm1 = (0..n)
        .map(|j| (0..n).map(|i| a[(i, j)].norm()).sum::<f64>())
        .fold(0.0_f64, f64::max);
    let s = if norm1 > THETA13 {
        (norm1 / THETA13).log2().ceil() as u32
    } else {
        0
    };
    let a = a.mapv(|z| z / 2f64.powi(s as i32));

    const B: [f64; 14] = [
        64764752532480000.0,
        32382376266240000.0,
        7771770303897600.0,
        1187353796428800.0,
        129060195264000.0,
        10559470521600.0,
        670442572800.0,
        33522128640.0,
        1323241920.0,
        40840800.0,
        960960.0,
        16380.0,
        182.0,
        1.0,
    ];
    let eye = Array2::<Complex64>::eye(n);
    let a2 = a.dot(&a);
    let a4 = a2.dot(&a2);
    let a6 = a2.dot(&a4);
    let u_inner = &(&(&a6 * cx(B[13]) + &a4 * cx(B[11])) + &(&a2 * cx(B[9])));
    let u_poly = &a6.dot(u_inner)
        + &(&(&a6 * cx(B[7]) + &a4 * cx(B[5])) + &(&(&a2 * cx(B[3])) + &(&eye * cx(B[1]))));
    let u = a.dot(&u_poly);
    let v_inner = &(&(&a6 * cx(B[12]) + &a4 * cx(B[10])) + &(&a2 * cx(B[8])));
    let v = &a6.dot(v_inner)
        + &(&(&a6 * cx(B[6]) + &a4 * cx(B[4])) + &(&(&a2 * cx(B[2])) + &(&eye * cx(B[0]))));

    let lhs = &v - &u;
    let rhs = &v + &u;
    let mut x = lu_solve(&lhs, &rhs);
    for _ in 0..s {
        x = x.dot(&x);
    }
    x
}

fn cx(v: f64) -> Complex64 {
    Complex64::new(v, 0.0)
}

// Solves A X = B by partial-pivot LU; panics on exactly singular A, which
// cannot happen for the diagonally dominant Pade denominators used here.
fn lu_solve(a: &Array2<Complex64>, b: &Array2<Complex64>) -> Array2<Complex64> {
    let n = a.nrows();
    let m = b.ncols();
    let mut lu = a.clone();
    let mut x = b.clone();
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| {
                lu[(i, col)]
                    .norm()
                    .partial_cmp(&lu[(j, col)].norm())
                    .unwrap()
            })
            .unwrap();
        if lu[(pivot, col)].norm() == 0.0 {
            panic!("singular matrix in expm solve");
        }
        if pivot != col {
            for j in 0..n {
                lu.swap((col, j), (pivot, j));
            }
            for j in 0..m {
                x.swap((col, j), (pivot, j));
            }
        }
        let diag = lu[(col, col)];
        for i in col + 1..n {
            let factor = lu[(i, col)] / diag;
            lu[(i, col)] = factor;
            for j in col + 1..n {
                let sub = factor * lu[(col, j)];
                lu[(i, j)] -= sub;
            }
            for j in 0..m {
                let sub = factor * x[(col, j)];
                x[(i, j)] -= sub;
            }
        }
    }
    for col in (0..n).rev() {
        for j in 0..m {
            let mut acc = x[(col, j)];
            for k in col + 1..n {
                acc -= lu[(col, k)] * x[(k, j)];
            }
            x[(col, j)] = acc / lu[(col, col)];
        }
    }
    x
}
