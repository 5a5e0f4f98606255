//! Numerical verification of the kick identities and of the Floquet/Anderson
//! correspondence on small dense instances.

use std::f64::consts::TAU;
use std::io::Write;

use nalgebra::{Matrix2, SymmetricEigen};
use num_complex::Complex64;
use rand::Rng;

use crate::anderson::{check_instance_with, hopping_matrix_with, StaticSetup, DENSE_LIMIT, EIGEN_TOLERANCE};
use crate::model::{kick_matrix, potential_matrix, tangent_matrix, w_matrix, ModelParams, SpinMatrix2};
use crate::rng::stream;
use crate::{Error, Result};

/// Angle-space hopping `W(θ1, θ2)` at `h_e = 1`.
pub type HoppingFn = fn(f64, f64, &ModelParams) -> SpinMatrix2;

pub const IDENTITY_TOLERANCE: f64 = 1e-10;
pub const POINTS_PER_TRIAL: usize = 200;
/// Second `h_e` for the mapping check, chosen so `tan(V/2h)` has no poles.
pub const GENERAL_H_E: f64 = 1.3;

#[derive(Debug, Clone, PartialEq)]
pub struct VerifyOptions {
    pub sizes: Vec<usize>,
    pub trials: usize,
    pub seed: u64,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        VerifyOptions { sizes: vec![4, 8, 16], trials: 50, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerifyRow {
    pub check: &'static str,
    pub n_trunc: Option<usize>,
    pub h_e: Option<f64>,
    /// Quasi-energy of the worst eigenstate (secular rows only).
    pub epsilon: Option<f64>,
    pub residual: f64,
    pub tolerance: f64,
    pub cases: usize,
}

impl VerifyRow {
    pub fn passed(&self) -> bool {
        self.residual <= self.tolerance
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerifyReport {
    pub rows: Vec<VerifyRow>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.rows.iter().all(VerifyRow::passed)
    }

    pub fn failures(&self) -> Vec<&VerifyRow> {
        self.rows.iter().filter(|r| !r.passed()).collect()
    }

    pub fn write_table(&self, out: &mut dyn Write) -> std::io::Result<()> {
        writeln!(out, "{:<10} {:>4} {:>7} {:>10} {:>12} {:>9} {:>6}  status", "check", "N", "h_e", "epsilon", "residual", "tol", "cases")?;
        for r in &self.rows {
            let opt = |v: Option<f64>, w: usize, p: usize| v.map_or(format!("{:>w$}", "-"), |x| format!("{x:>w$.p$}"));
            let n = r.n_trunc.map_or("-".to_string(), |n| n.to_string());
            writeln!(
                out,
                "{:<10} {:>4} {} {} {:>12.3e} {:>9.1e} {:>6}  {}",
                r.check,
                n,
                opt(r.h_e, 7, 4),
                opt(r.epsilon, 10, 6),
                r.residual,
                r.tolerance,
                r.cases,
                if r.passed() { "PASS" } else { "FAIL" }
            )?;
        }
        Ok(())
    }
}

fn to_na(m: &SpinMatrix2) -> Matrix2<Complex64> {
    Matrix2::new(m.0[0][0], m.0[0][1], m.0[1][0], m.0[1][1])
}

fn from_na(m: &Matrix2<Complex64>) -> SpinMatrix2 {
    SpinMatrix2([[m[(0, 0)], m[(0, 1)]], [m[(1, 0)], m[(1, 1)]]])
}

/// `f(V/h)` through the eigendecomposition of the hermitian 2×2 potential.
fn spectral(v: &SpinMatrix2, h_e: f64, f: impl Fn(f64) -> Complex64) -> SpinMatrix2 {
    let eig = SymmetricEigen::new(to_na(v));
    let q = eig.eigenvectors;
    let d = Matrix2::from_diagonal(&eig.eigenvalues.map(|l| f(l / h_e)));
    from_na(&(q * d * q.adjoint()))
}

/// `max |e^{-iV} - (1 - iW)(1 + iW)^{-1}|` with the supplied `W`.
fn cayley_error(w: &SpinMatrix2, exact: &SpinMatrix2) -> f64 {
    let i = Complex64::i();
    let id = SpinMatrix2::identity();
    match id.add(&w.scale(i)).inverse() {
        Some(inv) => (id.sub(&w.scale(i)) * inv).max_abs_diff(exact),
        None => f64::INFINITY,
    }
}

/// Runs every check. `hopping` replaces [`w_matrix`] for mutation testing.
pub fn run_verify(opts: &VerifyOptions, hopping: HoppingFn) -> Result<VerifyReport> {
    if opts.trials == 0 {
        return Err(Error::InvalidParams("--trials must be positive".into()));
    }
    if opts.sizes.is_empty() {
        return Err(Error::InvalidParams("--sizes must list at least one N".into()));
    }
    for &n in &opts.sizes {
        if n > DENSE_LIMIT {
            return Err(Error::DenseTooLarge { n, limit: DENSE_LIMIT });
        }
        ModelParams::new(1.0, n)?;
    }

    let points = opts.trials * POINTS_PER_TRIAL;
    let mut rng = stream(opts.seed, 0);
    let (mut unitarity, mut cayley, mut tangent, mut tangent_cases) = (0.0f64, 0.0f64, 0.0f64, 0usize);
    let unit = ModelParams::new(1.0, 4)?;
    for _ in 0..points {
        let (t1, t2) = (rng.gen_range(0.0..TAU), rng.gen_range(0.0..TAU));
        let h_e = rng.gen_range(0.2..5.0);
        let p = ModelParams { h_e, ..unit.clone() };
        unitarity = unitarity.max(kick_matrix(t1, t2, &p).unitarity_error());

        let v = potential_matrix(t1, t2, &unit);
        let exact = spectral(&v, 1.0, |x| Complex64::from_polar(1.0, -x));
        let w = hopping(t1, t2, &unit);
        cayley = cayley.max(cayley_error(&w, &exact));
        tangent = tangent.max(w.max_abs_diff(&spectral(&v, 1.0, |x| (x / 2.0).tan().into())));

        // General h_e, away from the poles of tan(V/2h).
        let half_max = v.0[0][0].norm().hypot(v.0[0][1].norm()) / (2.0 * h_e);
        if (std::f64::consts::FRAC_PI_2 - half_max).abs() > 1e-3 {
            if let Ok(t) = tangent_matrix(t1, t2, &p) {
                let oracle = spectral(&v, h_e, |x| (x / 2.0).tan().into());
                tangent = tangent.max(t.max_abs_diff(&oracle) / (1.0 + oracle.0[0][0].norm().max(oracle.0[0][1].norm())));
                tangent_cases += 1;
            }
        }
    }
    let mut rows = vec![
        VerifyRow { check: "unitarity", n_trunc: None, h_e: None, epsilon: None, residual: unitarity, tolerance: IDENTITY_TOLERANCE, cases: points },
        VerifyRow { check: "cayley", n_trunc: None, h_e: Some(1.0), epsilon: None, residual: cayley, tolerance: IDENTITY_TOLERANCE, cases: points },
        VerifyRow {
            check: "tangent",
            n_trunc: None,
            h_e: None,
            epsilon: None,
            residual: tangent,
            tolerance: IDENTITY_TOLERANCE,
            cases: points + tangent_cases,
        },
    ];

    for &n in &opts.sizes {
        for h_e in [1.0, GENERAL_H_E] {
            let params = ModelParams::new(h_e, n)?;
            let (mut secular, mut worst_eps, mut cayley_dense) = (0.0f64, f64::NAN, 0.0f64);
            for _ in 0..opts.trials {
                let setup = StaticSetup::new(params.clone(), rng.gen_range(0.0..1.0), rng.gen_range(0.0..TAU))?;
                let w = if h_e == 1.0 {
                    hopping_matrix_with(&setup, |a, b, p| Ok(hopping(a, b, p)))?
                } else {
                    hopping_matrix_with(&setup, tangent_matrix)?
                };
                let r = check_instance_with(&setup, &w)?;
                if !(r.max_secular_residual <= secular) {
                    secular = r.max_secular_residual;
                    worst_eps = r.worst_epsilon;
                }
                cayley_dense = cayley_dense.max(r.max_cayley_defect);
            }
            rows.push(VerifyRow {
                check: "secular",
                n_trunc: Some(n),
                h_e: Some(h_e),
                epsilon: Some(worst_eps),
                residual: secular,
                tolerance: EIGEN_TOLERANCE,
                cases: opts.trials,
            });
            rows.push(VerifyRow {
                check: "cayley-2d",
                n_trunc: Some(n),
                h_e: Some(h_e),
                epsilon: None,
                residual: cayley_dense,
                tolerance: EIGEN_TOLERANCE,
                cases: opts.trials,
            });
        }
    }
    Ok(VerifyReport { rows })
}

/// The production hopping.
pub fn default_hopping() -> HoppingFn {
    w_matrix
}
