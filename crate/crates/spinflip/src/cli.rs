//! Config ingestion, command dispatch, and deterministic report output.
//!
//! The config file is a flat `key = value` document with `#` comments;
//! commands are derive / rate / sweep / table / verify. Reports render to
//! CSV (with a `#` metadata preamble) or JSON with identical field names,
//! floats always printed with 12 significant digits so repeated runs are
//! byte-identical.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use num_rational::BigRational;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::adiabatic_frame::{bisector, gauge_potential, rotation_matrix};
use crate::constants::{constants_line, ATOMIC_MASS, BOHR_MAGNETON, BOLTZMANN, HBAR};
use crate::oracles::{
    dense_power_element, gauge_potential_fd, numeric_overlap, second_order_sum,
    DenominatorMode, QuadratureSpec,
};
use crate::perturbation::{c_factor, n_coefficient, plane_wave_overlap, rational_to_f64};
use crate::rates::escape_rate;
use crate::spin_algebra::{
    angular_factor_half_integer, angular_factor_integer, conjugate_transpose, spin_matrices,
    SpinQuantum,
};
use crate::trap_model::{
    derive_params, field_magnitude, final_wavenumber, surface_params, DerivedParams,
    SurfaceParams, TrapConfig,
};
use crate::{Error, Result, VERSION};

/// Parameter a sweep varies; everything else is held at the config value.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepParameter {
    BiasField,
    RadialGradient,
    GFactor,
}

impl SweepParameter {
    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "bias_field" => Ok(SweepParameter::BiasField),
            "radial_gradient" => Ok(SweepParameter::RadialGradient),
            "g_factor" => Ok(SweepParameter::GFactor),
            other => Err(Error::domain(format!(
                "unknown sweep parameter '{other}' \
                 (expected bias_field, radial_gradient or g_factor)"
            ))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            SweepParameter::BiasField => "bias_field",
            SweepParameter::RadialGradient => "radial_gradient",
            SweepParameter::GFactor => "g_factor",
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct SweepSpec {
    pub parameter: SweepParameter,
    pub from: f64,
    pub to: f64,
    pub steps: usize,
}

#[derive(Debug, Clone)]
pub enum Command {
    Derive,
    Rate,
    Sweep(SweepSpec),
    Table { p_max: u32 },
    Verify { fast: bool },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputFormat {
    Csv,
    Json,
}

/// Fully validated invocation. `trap` is present for the commands that
/// read a config file (derive, rate, sweep).
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub trap: Option<TrapConfig>,
    pub command: Command,
    pub output_path: Option<PathBuf>,
    pub format: OutputFormat,
}

const CONFIG_KEYS: [&str; 7] = [
    "bias_field_gauss",
    "radial_gradient_gauss_per_cm",
    "axial_curvature_gauss_per_cm2",
    "g_factor",
    "mass_amu",
    "two_f",
    "two_fz",
];

/// Parses and validates a flat key-value trap config. Unknown, duplicate
/// and missing keys are all errors naming the key; file-level I/O errors
/// keep their own exit class.
pub fn load_config(path: &Path) -> Result<TrapConfig> {
    let text = std::fs::read_to_string(path)?;
    let mut seen: Vec<(&str, String)> = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            Error::domain(format!(
                "config line {}: expected 'key = value', got '{}'",
                lineno + 1,
                line
            ))
        })?;
        let key = key.trim();
        let value = value.trim();
        let canonical = CONFIG_KEYS
            .iter()
            .find(|k| **k == key)
            .ok_or_else(|| Error::domain(format!("unknown config key '{key}'")))?;
        if seen.iter().any(|(k, _)| k == canonical) {
            return Err(Error::domain(format!("duplicate config key '{key}'")));
        }
        seen.push((canonical, value.to_string()));
    }

    let lookup = |key: &str| -> Option<&str> {
        seen.iter().find(|(k, _)| *k == key).map(|(_, v)| v.as_str())
    };
    let real = |key: &str| -> Result<f64> {
        let raw = lookup(key)
            .ok_or_else(|| Error::domain(format!("missing config key '{key}'")))?;
        raw.parse::<f64>()
            .map_err(|_| Error::domain(format!("config key '{key}': '{raw}' is not a number")))
    };
    let integer = |key: &str| -> Result<i64> {
        let raw = lookup(key)
            .ok_or_else(|| Error::domain(format!("missing config key '{key}'")))?;
        raw.parse::<i64>()
            .map_err(|_| Error::domain(format!("config key '{key}': '{raw}' is not an integer")))
    };

    let bias = real("bias_field_gauss")?;
    if bias == 0.0 {
        return Err(Error::domain(
            "bias_field_gauss = 0 gives a singular adiabatic frame; the bias field must be > 0",
        ));
    }
    let gradient = real("radial_gradient_gauss_per_cm")?;
    let axial = match lookup("axial_curvature_gauss_per_cm2") {
        Some(_) => real("axial_curvature_gauss_per_cm2")?,
        None => 0.0,
    };
    let g = real("g_factor")?;
    let mass = real("mass_amu")?;
    let two_f = integer("two_f")?;
    let two_fz = integer("two_fz")?;
    if !(1..=i64::from(u32::MAX)).contains(&two_f) {
        return Err(Error::domain(format!("two_f must be a positive integer (got {two_f})")));
    }
    if two_fz <= 0 {
        return Err(Error::domain(format!(
            "two_fz must be > 0 for a trapped state (got {two_fz})"
        )));
    }
    let spin = SpinQuantum::new(two_f as u32, two_fz as i32)?;
    TrapConfig::new(bias, gradient, axial, g, mass, spin)
}

/// One computed report, ready for either output format.
#[derive(Debug)]
pub struct Report {
    pub meta: Meta,
    pub kind: ReportKind,
}

#[derive(Debug, Clone)]
pub struct Meta {
    pub version: &'static str,
    pub constants: String,
    /// chi0 >= 0.1 anywhere in the report: perturbative rates dubious.
    pub chi0_warning: bool,
    /// Set when a rate used escape_rate_momentum, whose C_p coherence
    /// factor silently assumes the closure average; no current command
    /// does, but the writers honor the flag.
    pub momentum_note: bool,
}

#[derive(Debug)]
pub enum ReportKind {
    Derive {
        trap: TrapConfig,
        derived: DerivedParams,
        surface: SurfaceParams,
        final_wavenumber: f64,
    },
    Rate {
        trap: TrapConfig,
        derived: DerivedParams,
        breakdown: crate::rates::RateBreakdown,
    },
    Sweep {
        rows: Vec<SweepRow>,
    },
    Table {
        rows: Vec<TableRow>,
    },
    Verify(VerifyReport),
}

/// One line of the sweep CSV, field names matching the header.
#[derive(Debug, Clone)]
pub struct SweepRow {
    pub param_name: &'static str,
    pub param_value: f64,
    pub omega0_rad_s: f64,
    pub omega_prec_rad_s: f64,
    pub chi0: f64,
    pub p: u32,
    pub angular_factor: f64,
    pub c_p: f64,
    pub c_semiclassical: f64,
    pub exponent: f64,
    pub rate_per_s: f64,
}

#[derive(Debug, Clone)]
pub struct TableRow {
    pub p: u32,
    pub p2: u32,
    pub n: BigRational,
    pub c_p: BigRational,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CheckStatus {
    Pass,
    Fail,
    /// Informational rows (e.g. the fitted closure-error slope) that have
    /// no tolerance and never affect the exit status.
    Recorded,
}

impl CheckStatus {
    fn label(&self) -> &'static str {
        match self {
            CheckStatus::Pass => "pass",
            CheckStatus::Fail => "fail",
            CheckStatus::Recorded => "recorded",
        }
    }
}

#[derive(Debug, Clone)]
pub struct CheckRow {
    pub name: &'static str,
    pub tolerance: Option<f64>,
    pub measured: f64,
    pub status: CheckStatus,
}

/// Per-chi0 diagnostics of the second-order closure oracle.
#[derive(Debug, Clone)]
pub struct ClosurePoint {
    pub chi0: f64,
    pub ratio_to_closure: f64,
    pub deviation: f64,
    pub completeness: f64,
    pub ln_amplitude: f64,
    pub ln_closure: f64,
    pub n_used: usize,
    pub nodes: usize,
}

#[derive(Debug, Clone)]
pub struct VerifyReport {
    pub fast: bool,
    pub checks: Vec<CheckRow>,
    pub closure_points: Vec<ClosurePoint>,
    /// Least-squares slope of ln(deviation) vs ln(chi0); recorded, not
    /// gated, because the asymptotic order is an open question.
    pub fitted_slope: Option<f64>,
    pub passed: bool,
}

/// Executes a validated invocation. Oracle failures inside `verify` do
/// not error here; they are part of the report and drive the exit code in
/// the binary.
pub fn run(config: &RunConfig) -> Result<Report> {
    match &config.command {
        Command::Derive => {
            let trap = require_trap(config)?;
            let derived = derive_params(trap);
            let surface = surface_params(&derived, trap.spin().two_fz())?;
            let k = final_wavenumber(&derived, &surface);
            Ok(Report {
                meta: meta(derived.adiabaticity_warning()),
                kind: ReportKind::Derive {
                    trap: trap.clone(),
                    derived,
                    surface,
                    final_wavenumber: k,
                },
            })
        }
        Command::Rate => {
            let trap = require_trap(config)?;
            let derived = derive_params(trap);
            let breakdown = escape_rate(trap)?;
            Ok(Report {
                meta: meta(derived.adiabaticity_warning()),
                kind: ReportKind::Rate {
                    trap: trap.clone(),
                    derived,
                    breakdown,
                },
            })
        }
        Command::Sweep(spec) => {
            let trap = require_trap(config)?;
            let rows = run_sweep(trap, spec)?;
            let warn = rows.iter().any(|r| r.chi0 >= 0.1);
            Ok(Report {
                meta: meta(warn),
                kind: ReportKind::Sweep { rows },
            })
        }
        Command::Table { p_max } => {
            let rows = run_table(*p_max)?;
            Ok(Report {
                meta: meta(false),
                kind: ReportKind::Table { rows },
            })
        }
        Command::Verify { fast } => {
            let report = run_verify(*fast)?;
            Ok(Report {
                meta: meta(false),
                kind: ReportKind::Verify(report),
            })
        }
    }
}

fn require_trap(config: &RunConfig) -> Result<&TrapConfig> {
    config
        .trap
        .as_ref()
        .ok_or_else(|| Error::domain("this command requires --config"))
}

fn meta(chi0_warning: bool) -> Meta {
    Meta {
        version: VERSION,
        constants: constants_line(),
        chi0_warning,
        momentum_note: false,
    }
}

fn run_sweep(trap: &TrapConfig, spec: &SweepSpec) -> Result<Vec<SweepRow>> {
    if spec.steps < 2 {
        return Err(Error::domain("sweep needs steps >= 2"));
    }
    if !(spec.from.is_finite() && spec.to.is_finite() && spec.from < spec.to) {
        return Err(Error::domain("sweep needs finite from < to"));
    }
    if spec.from <= 0.0 {
        return Err(Error::domain(format!(
            "sweep parameter {} must stay > 0 (from = {})",
            spec.parameter.name(),
            spec.from
        )));
    }
    let mut rows = Vec::with_capacity(spec.steps);
    for i in 0..spec.steps {
        let value =
            spec.from + (spec.to - spec.from) * i as f64 / (spec.steps - 1) as f64;
        let point = with_parameter(trap, spec.parameter, value)?;
        let derived = derive_params(&point);
        let breakdown = escape_rate(&point)?;
        let c_p = rational_to_f64(&c_factor(breakdown.p, point.spin().two_fz())?);
        rows.push(SweepRow {
            param_name: spec.parameter.name(),
            param_value: value,
            omega0_rad_s: derived.omega0,
            omega_prec_rad_s: derived.omega_prec,
            chi0: derived.chi0,
            p: breakdown.p,
            angular_factor: breakdown.angular,
            c_p,
            c_semiclassical: breakdown.c_exponent_factor,
            exponent: breakdown.exponent,
            rate_per_s: breakdown.rate,
        });
    }
    Ok(rows)
}

fn with_parameter(trap: &TrapConfig, p: SweepParameter, value: f64) -> Result<TrapConfig> {
    let mut bias = trap.bias_field_gauss();
    let mut gradient = trap.radial_gradient_gauss_per_cm();
    let mut g = trap.g_factor();
    match p {
        SweepParameter::BiasField => bias = value,
        SweepParameter::RadialGradient => gradient = value,
        SweepParameter::GFactor => g = value,
    }
    TrapConfig::new(
        bias,
        gradient,
        trap.axial_curvature_gauss_per_cm2(),
        g,
        trap.mass_amu(),
        trap.spin(),
    )
}

fn run_table(p_max: u32) -> Result<Vec<TableRow>> {
    if p_max < 1 {
        return Err(Error::domain("table needs pmax >= 1"));
    }
    if p_max > 24 {
        // The weights come from explicit path enumeration, which grows
        // like Fibonacci(p); 24 keeps the command instant.
        return Err(Error::domain("table supports pmax <= 24"));
    }
    let mut rows = Vec::new();
    for p in 1..=p_max {
        // The printed table's C_p column is the stretched-state value,
        // initial F_z = p (the smallest projection that allows p flips).
        let c_p = c_factor(p, 2 * p as i32)?;
        for p2 in 0..=p / 2 {
            rows.push(TableRow {
                p,
                p2,
                n: n_coefficient(p, p2)?,
                c_p: c_p.clone(),
            });
        }
    }
    Ok(rows)
}

// ---------------------------------------------------------------------
// verify: the oracle battery.

/// Reference trap for the random-point frame and gauge checks.
fn verify_trap(two_f: u32, two_fz: i32) -> TrapConfig {
    let spin = SpinQuantum::new(two_f, two_fz).expect("static spin values");
    TrapConfig::new(1.0, 100.0, 0.0, 0.5, 87.0, spin).expect("static trap values")
}

/// Synthetic scales for the closure oracle, which only reads chi0; the
/// sum itself is dimensionless in trap units.
fn closure_params(chi0: f64) -> DerivedParams {
    DerivedParams {
        omega0: 1.0,
        b0: 1.0,
        chi0,
        e0: HBAR / chi0,
        omega_prec: 1.0 / chi0,
        mass_kg: HBAR,
    }
}

fn run_verify(fast: bool) -> Result<VerifyReport> {
    let mut checks = Vec::new();
    let mut gate = |name: &'static str, tolerance: f64, measured: f64| {
        let status = if measured <= tolerance {
            CheckStatus::Pass
        } else {
            CheckStatus::Fail
        };
        checks.push(CheckRow {
            name,
            tolerance: Some(tolerance),
            measured,
            status,
        });
    };

    // Ladder-product closed forms against dense matrix powers, F <= 6.
    let mut dense_dev = 0.0f64;
    for two_f in 1..=12u32 {
        let p_top = if two_f % 2 == 0 { two_f / 2 } else { (two_f + 1) / 2 };
        for p in 1..=p_top {
            let closed = if two_f % 2 == 0 {
                angular_factor_integer(two_f, p)?
            } else {
                angular_factor_half_integer(two_f, p)?
            };
            let two_fz_i = if two_f % 2 == 0 { 2 * p as i32 } else { 2 * p as i32 - 1 };
            let element = dense_power_element(two_f, two_fz_i, two_fz_i - 2 * p as i32)?;
            dense_dev = dense_dev.max((element * element / closed - 1.0).abs());
        }
    }
    gate("dense_ladder_powers_f_le_6", 1e-10, dense_dev);

    // Frame unitarity and field diagonalization at 100 seeded points for
    // F in {1/2, 1, 3/2, 2, 3}.
    let mut rng = ChaCha8Rng::seed_from_u64(0x5f1e_55c8);
    let b0_m = 1.135e-6; // oscillator length scale of the reference trap
    let mut unit_dev = 0.0f64;
    let mut diag_dev = 0.0f64;
    let mut bisector_dev = 0.0f64;
    for &two_f in &[1u32, 2, 3, 4, 6] {
        let trap = verify_trap(two_f, two_f as i32);
        let ops = spin_matrices(two_f)?;
        for _ in 0..20 {
            let r = [
                rng.gen_range(-2.0..2.0) * b0_m,
                rng.gen_range(-2.0..2.0) * b0_m,
                0.0,
            ];
            let frame = bisector(&trap, r);
            let u = rotation_matrix(&frame, &ops);
            let udag = conjugate_transpose(&u);
            let eye = ndarray::Array2::eye(u.nrows());
            let unit = udag.dot(&u) - eye.mapv(|x: f64| num_complex::Complex64::new(x, 0.0));
            unit_dev = unit_dev.max(unit.iter().map(|z| z.norm()).fold(0.0, f64::max));
            // U^dag (B_hat . F) U should be F_z.
            let b = field_magnitude(&trap, r);
            let lam = trap.radial_gradient_gauss_per_cm() * 100.0;
            let bhat = [lam * r[0] / b, -lam * r[1] / b, trap.bias_field_gauss() / b];
            let bf = &(&(&ops.fx * num_complex::Complex64::new(bhat[0], 0.0))
                + &(&ops.fy * num_complex::Complex64::new(bhat[1], 0.0)))
                + &(&ops.fz * num_complex::Complex64::new(bhat[2], 0.0));
            let rotated = udag.dot(&bf).dot(&u) - &ops.fz;
            diag_dev = diag_dev.max(rotated.iter().map(|z| z.norm()).fold(0.0, f64::max));
            let nn = frame.nvec.iter().map(|c| c * c).sum::<f64>();
            let rho2 = r[0] * r[0] + r[1] * r[1];
            let combo = frame.alpha * frame.alpha + frame.beta * frame.beta * rho2;
            bisector_dev = bisector_dev
                .max((nn - 1.0).abs())
                .max((combo - 1.0).abs());
        }
    }
    gate("frame_unitarity", 1e-12, unit_dev);
    gate("field_diagonalization", 1e-10, diag_dev);
    gate("bisector_identities", 1e-14, bisector_dev);

    // Analytic gauge potential against central differences, 50 points.
    // The rotation matrix varies on the field length B0/lambda = 1e-4 m,
    // so the step sits at the central-difference optimum ~ l eps^(1/3).
    let h_fd = 6e-10;
    let mut fd_dev = 0.0f64;
    for &two_f in &[2u32, 4] {
        let trap = verify_trap(two_f, two_f as i32);
        let ops = spin_matrices(two_f)?;
        for _ in 0..25 {
            let r = [
                rng.gen_range(-2.0..2.0) * b0_m,
                rng.gen_range(-2.0..2.0) * b0_m,
                0.0,
            ];
            let analytic = gauge_potential(&trap, &ops, r).total();
            let fd = gauge_potential_fd(&trap, &ops, r, h_fd)?;
            let scale = analytic
                .iter()
                .flat_map(|m| m.iter())
                .map(|z| z.norm())
                .fold(0.0, f64::max);
            let diff = analytic
                .iter()
                .zip(fd.iter())
                .flat_map(|(a, b)| (a - b).into_iter().collect::<Vec<_>>())
                .map(|z| z.norm())
                .fold(0.0, f64::max);
            fd_dev = fd_dev.max(diff / scale);
        }
    }
    gate("gauge_vs_finite_difference", 1e-6, fd_dev);

    // Plane-wave overlap quadrature against the closed form.
    let spec = QuadratureSpec::default();
    let (b_i, box_side) = (1e-6, 1e-3);
    let mut overlap_dev = 0.0f64;
    for kb in [0.0, 1.0, 3.0] {
        let k = kb / b_i;
        let numeric = numeric_overlap(b_i, k, box_side, &spec)?;
        let closed = plane_wave_overlap(k, b_i, box_side);
        overlap_dev = overlap_dev.max((numeric / closed - 1.0).abs());
    }
    gate("overlap_quadrature", 1e-7, overlap_dev);

    // Unit prefactors and the chi0 identity on the reference trap.
    let trap = verify_trap(2, 2);
    let derived = derive_params(&trap);
    let prec_per_gb = derived.omega_prec / (trap.g_factor() * trap.bias_field_gauss());
    let omega0_unit = derived.omega0
        / (trap.radial_gradient_gauss_per_cm()
            * (trap.g_factor() / (trap.mass_amu() * trap.bias_field_gauss())).sqrt());
    let prefactor_dev = (prec_per_gb / 8.8e6 - 1.0)
        .abs()
        .max((omega0_unit / 74.6 - 1.0).abs());
    gate("unit_rate_prefactors", 5e-3, prefactor_dev);
    let chi_identity = (derived.chi0 * derived.omega_prec / derived.omega0 - 1.0).abs();
    gate("chi0_identity", 1e-12, chi_identity);

    // The closure oracle: completeness hard gate, then the deviation
    // expectation and trend over decreasing chi0.
    let mut closure_points = Vec::new();
    let mut fitted_slope = None;
    if !fast {
        for &chi in &[1e-2, 3e-3, 1e-3] {
            let sum = second_order_sum(&closure_params(chi), None, DenominatorMode::Exact)?;
            closure_points.push(ClosurePoint {
                chi0: chi,
                ratio_to_closure: sum.ratio_to_closure,
                deviation: (sum.ratio_to_closure - 1.0).abs(),
                completeness: sum.completeness_check,
                ln_amplitude: sum.ln_magnitude,
                ln_closure: sum.closure_ln_magnitude,
                n_used: sum.n_used,
                nodes: sum.nodes,
            });
        }
        let completeness_dev = closure_points
            .iter()
            .map(|p| (p.completeness - 1.0).abs())
            .fold(0.0, f64::max);
        gate("closure_forced_denominator_completeness", 1e-10, completeness_dev);
        gate(
            "closure_deviation_chi0_1e-2",
            0.1,
            closure_points[0].deviation,
        );
        let growth = closure_points
            .windows(2)
            .map(|w| w[1].deviation / w[0].deviation)
            .fold(0.0, f64::max);
        gate("closure_trend_max_growth", 1.0, growth);
        // ln(dev) vs ln(chi0) least squares; recorded, not gated.
        let xs: Vec<f64> = closure_points.iter().map(|p| p.chi0.ln()).collect();
        let ys: Vec<f64> = closure_points.iter().map(|p| p.deviation.ln()).collect();
        let xm = xs.iter().sum::<f64>() / xs.len() as f64;
        let ym = ys.iter().sum::<f64>() / ys.len() as f64;
        let sxx: f64 = xs.iter().map(|x| (x - xm) * (x - xm)).sum();
        let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - xm) * (y - ym)).sum();
        let slope = sxy / sxx;
        fitted_slope = Some(slope);
        checks.push(CheckRow {
            name: "closure_error_fitted_slope",
            tolerance: None,
            measured: slope,
            status: CheckStatus::Recorded,
        });
    }

    let passed = checks
        .iter()
        .all(|c| c.status != CheckStatus::Fail);
    Ok(VerifyReport {
        fast,
        checks,
        closure_points,
        fitted_slope,
        passed,
    })
}

// ---------------------------------------------------------------------
// Rendering.

fn fmt_f64(v: f64) -> String {
    format!("{v:.11e}")
}

fn preamble(meta: &Meta, out: &mut String) {
    let _ = writeln!(out, "# spinflip {}", meta.version);
    let _ = writeln!(out, "# constants: {}", meta.constants);
    let _ = writeln!(out, "# chi0_warning: {}", meta.chi0_warning);
    if meta.momentum_note {
        let _ = writeln!(
            out,
            "# note: momentum-form rate; C_p in the prefactor is the closure \
             average C-bar_p, exact only for the oscillator ground state"
        );
    }
}

pub fn render_csv(report: &Report) -> String {
    let mut out = String::new();
    preamble(&report.meta, &mut out);
    match &report.kind {
        ReportKind::Derive {
            trap,
            derived,
            surface,
            final_wavenumber,
        } => {
            let _ = writeln!(out, "quantity,value");
            for (k, v) in derive_pairs(trap, derived, surface, *final_wavenumber) {
                let _ = writeln!(out, "{k},{v}");
            }
        }
        ReportKind::Rate {
            trap,
            derived,
            breakdown,
        } => {
            let _ = writeln!(out, "quantity,value");
            for (k, v) in rate_pairs(trap, derived, breakdown) {
                let _ = writeln!(out, "{k},{v}");
            }
        }
        ReportKind::Sweep { rows } => {
            let _ = writeln!(
                out,
                "param_name,param_value,omega0_rad_s,omega_prec_rad_s,chi0,p,\
                 angular_factor,c_p,c_semiclassical,exponent,rate_per_s"
            );
            for r in rows {
                let _ = writeln!(
                    out,
                    "{},{},{},{},{},{},{},{},{},{},{}",
                    r.param_name,
                    fmt_f64(r.param_value),
                    fmt_f64(r.omega0_rad_s),
                    fmt_f64(r.omega_prec_rad_s),
                    fmt_f64(r.chi0),
                    r.p,
                    fmt_f64(r.angular_factor),
                    fmt_f64(r.c_p),
                    fmt_f64(r.c_semiclassical),
                    fmt_f64(r.exponent),
                    fmt_f64(r.rate_per_s),
                );
            }
        }
        ReportKind::Table { rows } => {
            let _ = writeln!(out, "p,p2,n_num,n_den,c_p_num,c_p_den");
            for r in rows {
                let _ = writeln!(
                    out,
                    "{},{},{},{},{},{}",
                    r.p,
                    r.p2,
                    r.n.numer(),
                    r.n.denom(),
                    r.c_p.numer(),
                    r.c_p.denom(),
                );
            }
        }
        ReportKind::Verify(v) => {
            let _ = writeln!(out, "# mode: {}", if v.fast { "fast" } else { "full" });
            let _ = writeln!(out, "check,tolerance,measured,status");
            for c in &v.checks {
                let tol = c.tolerance.map_or_else(|| "-".to_string(), fmt_f64);
                let _ = writeln!(
                    out,
                    "{},{},{},{}",
                    c.name,
                    tol,
                    fmt_f64(c.measured),
                    c.status.label()
                );
            }
            for p in &v.closure_points {
                let _ = writeln!(
                    out,
                    "# closure chi0={}: ratio={} completeness={} ln|A|={} ln|A_closure|={} \
                     n_used={} nodes={}",
                    fmt_f64(p.chi0),
                    fmt_f64(p.ratio_to_closure),
                    fmt_f64(p.completeness),
                    fmt_f64(p.ln_amplitude),
                    fmt_f64(p.ln_closure),
                    p.n_used,
                    p.nodes,
                );
            }
            let _ = writeln!(out, "# verdict: {}", if v.passed { "pass" } else { "fail" });
        }
    }
    out
}

fn derive_pairs(
    trap: &TrapConfig,
    derived: &DerivedParams,
    surface: &SurfaceParams,
    k_f: f64,
) -> Vec<(&'static str, String)> {
    vec![
        ("bias_field_gauss", fmt_f64(trap.bias_field_gauss())),
        (
            "radial_gradient_gauss_per_cm",
            fmt_f64(trap.radial_gradient_gauss_per_cm()),
        ),
        (
            "axial_curvature_gauss_per_cm2",
            fmt_f64(trap.axial_curvature_gauss_per_cm2()),
        ),
        ("g_factor", fmt_f64(trap.g_factor())),
        ("mass_amu", fmt_f64(trap.mass_amu())),
        ("two_f", trap.spin().two_f().to_string()),
        ("two_fz", trap.spin().two_fz().to_string()),
        ("omega0_rad_s", fmt_f64(derived.omega0)),
        ("b0_m", fmt_f64(derived.b0)),
        ("chi0", fmt_f64(derived.chi0)),
        ("e0_j", fmt_f64(derived.e0)),
        ("omega_prec_rad_s", fmt_f64(derived.omega_prec)),
        ("mass_kg", fmt_f64(derived.mass_kg)),
        ("surface_omega_i_rad_s", fmt_f64(surface.omega_i)),
        ("surface_b_i_m", fmt_f64(surface.b_i)),
        ("surface_e_i_j", fmt_f64(surface.e_i)),
        ("final_wavenumber_per_m", fmt_f64(k_f)),
    ]
}

fn rate_pairs(
    trap: &TrapConfig,
    derived: &DerivedParams,
    b: &crate::rates::RateBreakdown,
) -> Vec<(&'static str, String)> {
    vec![
        ("two_f", trap.spin().two_f().to_string()),
        ("two_fz", trap.spin().two_fz().to_string()),
        ("omega0_rad_s", fmt_f64(derived.omega0)),
        ("omega_prec_rad_s", fmt_f64(derived.omega_prec)),
        ("chi0", fmt_f64(derived.chi0)),
        ("p", b.p.to_string()),
        ("prefactor_rad_s", fmt_f64(b.prefactor)),
        ("chi_power", fmt_f64(b.chi_power)),
        ("angular_factor", fmt_f64(b.angular)),
        ("c_p_squared", fmt_f64(b.c_p_squared)),
        ("c_exponent_factor", fmt_f64(b.c_exponent_factor)),
        ("exponent", fmt_f64(b.exponent)),
        ("rate_per_s", fmt_f64(b.rate)),
    ]
}

// Minimal JSON writer: enough structure for these reports, deterministic
// key order, floats via fmt_f64, arbitrary-precision integers emitted as
// bare literals.
struct JsonWriter {
    buf: String,
    need_comma: Vec<bool>,
}

impl JsonWriter {
    fn new() -> Self {
        JsonWriter {
            buf: String::new(),
            need_comma: vec![false],
        }
    }

    fn sep(&mut self) {
        if let Some(last) = self.need_comma.last_mut() {
            if *last {
                self.buf.push(',');
            }
            *last = true;
        }
    }

    fn key(&mut self, k: &str) {
        self.sep();
        self.buf.push('"');
        self.buf.push_str(k);
        self.buf.push_str("\":");
        // The upcoming value must not trigger another comma.
        if let Some(last) = self.need_comma.last_mut() {
            *last = false;
        }
    }

    fn open_obj(&mut self) {
        self.sep();
        self.buf.push('{');
        self.need_comma.push(false);
    }

    fn close_obj(&mut self) {
        self.buf.push('}');
        self.need_comma.pop();
        if let Some(last) = self.need_comma.last_mut() {
            *last = true;
        }
    }

    fn open_arr(&mut self) {
        self.sep();
        self.buf.push('[');
        self.need_comma.push(false);
    }

    fn close_arr(&mut self) {
        self.buf.push(']');
        self.need_comma.pop();
        if let Some(last) = self.need_comma.last_mut() {
            *last = true;
        }
    }

    fn string(&mut self, v: &str) {
        self.sep();
        self.buf.push('"');
        for ch in v.chars() {
            match ch {
                '"' => self.buf.push_str("\\\""),
                '\\' => self.buf.push_str("\\\\"),
                '\n' => self.buf.push_str("\\n"),
                c if (c as u32) < 0x20 => {
                    let _ = write!(self.buf, "\\u{:04x}", c as u32);
                }
                c => self.buf.push(c),
            }
        }
        self.buf.push('"');
    }

    fn raw(&mut self, v: &str) {
        self.sep();
        self.buf.push_str(v);
    }

    fn f64(&mut self, v: f64) {
        // JSON has no infinities; the only non-finite value these reports
        // can produce is an overflowed exponent, rendered as a string.
        if v.is_finite() {
            let formatted = fmt_f64(v);
            self.raw(&formatted);
        } else {
            self.string(&v.to_string());
        }
    }
}

pub fn render_json(report: &Report) -> String {
    let mut w = JsonWriter::new();
    w.open_obj();
    w.key("version");
    w.string(report.meta.version);
    w.key("constants");
    w.open_obj();
    w.key("bohr_magneton_j_per_t");
    w.f64(BOHR_MAGNETON);
    w.key("hbar_j_s");
    w.f64(HBAR);
    w.key("atomic_mass_kg");
    w.f64(ATOMIC_MASS);
    w.key("boltzmann_j_per_k");
    w.f64(BOLTZMANN);
    w.close_obj();
    w.key("chi0_warning");
    w.raw(if report.meta.chi0_warning { "true" } else { "false" });
    if report.meta.momentum_note {
        w.key("momentum_note");
        w.string(
            "momentum-form rate: C_p is the closure average C-bar_p, exact only \
             for the oscillator ground state",
        );
    }
    match &report.kind {
        ReportKind::Derive {
            trap,
            derived,
            surface,
            final_wavenumber,
        } => {
            w.key("command");
            w.string("derive");
            w.key("values");
            w.open_obj();
            for (k, v) in derive_pairs(trap, derived, surface, *final_wavenumber) {
                w.key(k);
                w.raw(&json_scalar(&v));
            }
            w.close_obj();
        }
        ReportKind::Rate {
            trap,
            derived,
            breakdown,
        } => {
            w.key("command");
            w.string("rate");
            w.key("values");
            w.open_obj();
            for (k, v) in rate_pairs(trap, derived, breakdown) {
                w.key(k);
                w.raw(&json_scalar(&v));
            }
            w.close_obj();
        }
        ReportKind::Sweep { rows } => {
            w.key("command");
            w.string("sweep");
            w.key("rows");
            w.open_arr();
            for r in rows {
                w.open_obj();
                w.key("param_name");
                w.string(r.param_name);
                w.key("param_value");
                w.f64(r.param_value);
                w.key("omega0_rad_s");
                w.f64(r.omega0_rad_s);
                w.key("omega_prec_rad_s");
                w.f64(r.omega_prec_rad_s);
                w.key("chi0");
                w.f64(r.chi0);
                w.key("p");
                w.raw(&r.p.to_string());
                w.key("angular_factor");
                w.f64(r.angular_factor);
                w.key("c_p");
                w.f64(r.c_p);
                w.key("c_semiclassical");
                w.f64(r.c_semiclassical);
                w.key("exponent");
                w.f64(r.exponent);
                w.key("rate_per_s");
                w.f64(r.rate_per_s);
                w.close_obj();
            }
            w.close_arr();
        }
        ReportKind::Table { rows } => {
            w.key("command");
            w.string("table");
            w.key("rows");
            w.open_arr();
            for r in rows {
                w.open_obj();
                w.key("p");
                w.raw(&r.p.to_string());
                w.key("p2");
                w.raw(&r.p2.to_string());
                w.key("n_num");
                w.raw(&r.n.numer().to_string());
                w.key("n_den");
                w.raw(&r.n.denom().to_string());
                w.key("c_p_num");
                w.raw(&r.c_p.numer().to_string());
                w.key("c_p_den");
                w.raw(&r.c_p.denom().to_string());
                w.close_obj();
            }
            w.close_arr();
        }
        ReportKind::Verify(v) => {
            w.key("command");
            w.string("verify");
            w.key("fast");
            w.raw(if v.fast { "true" } else { "false" });
            w.key("checks");
            w.open_arr();
            for c in &v.checks {
                w.open_obj();
                w.key("name");
                w.string(c.name);
                w.key("tolerance");
                match c.tolerance {
                    Some(t) => w.f64(t),
                    None => w.raw("null"),
                }
                w.key("measured");
                w.f64(c.measured);
                w.key("status");
                w.string(c.status.label());
                w.close_obj();
            }
            w.close_arr();
            w.key("closure_points");
            w.open_arr();
            for p in &v.closure_points {
                w.open_obj();
                w.key("chi0");
                w.f64(p.chi0);
                w.key("ratio_to_closure");
                w.f64(p.ratio_to_closure);
                w.key("deviation");
                w.f64(p.deviation);
                w.key("completeness");
                w.f64(p.completeness);
                w.key("ln_amplitude");
                w.f64(p.ln_amplitude);
                w.key("ln_closure");
                w.f64(p.ln_closure);
                w.key("n_used");
                w.raw(&p.n_used.to_string());
                w.key("nodes");
                w.raw(&p.nodes.to_string());
                w.close_obj();
            }
            w.close_arr();
            w.key("fitted_slope");
            match v.fitted_slope {
                Some(s) => w.f64(s),
                None => w.raw("null"),
            }
            w.key("passed");
            w.raw(if v.passed { "true" } else { "false" });
        }
    }
    w.close_obj();
    w.buf.push('\n');
    w.buf
}

// derive/rate pairs carry preformatted values; integers stay bare, floats
// are already in 12-digit form, so only non-numeric strings need quoting.
fn json_scalar(v: &str) -> String {
    if v.parse::<f64>().is_ok() {
        v.to_string()
    } else {
        format!("\"{v}\"")
    }
}

/// Renders and writes the report; stdout when no path is given.
pub fn write_output(report: &Report, path: Option<&Path>, format: OutputFormat) -> Result<()> {
    let text = match format {
        OutputFormat::Csv => render_csv(report),
        OutputFormat::Json => render_json(report),
    };
    match path {
        Some(p) => std::fs::write(p, text)?,
        None => {
            use std::io::Write as _;
            std::io::stdout().write_all(text.as_bytes())?;
        }
    }
    Ok(())
}
