//! One-parameter finite-size scaling of diffusion rates.
//!
//! At fixed `x = t/N²` the rate is modelled as `D = Σ_k a_k y^k` with scaling
//! variable `y = (u - u_c) N^{1/ν}` and `u = h_e⁻¹`. The coefficients enter
//! linearly, so the fit is separable: for every trial `(u_c, ν)` the `a_k` come
//! from a weighted linear least-squares solve, and only the two nonlinear
//! parameters are searched (multi-start Nelder–Mead). The best minimum is then
//! polished with Levenberg–Marquardt on all parameters, which also provides the
//! Gauss-approximation covariance.

mod bootstrap;
pub mod simplex;

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::rng::stream;
use crate::{Error, Result};
use simplex::{nelder_mead, SimplexOptions};

pub use bootstrap::{bootstrap_errors, BootstrapSummary, MIN_BOOT, MIN_POINTS_PER_SIZE};

/// Largest supported polynomial order.
pub const K_MAX_LIMIT: usize = 6;

/// Exponent of the `ν` searched is confined to this open interval.
const NU_BOUNDS: (f64, f64) = (0.05, 50.0);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalingPoint {
    /// `h_e⁻¹`.
    pub u: f64,
    pub n: u32,
    pub d: f64,
    pub sigma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingDataset {
    pub points: Vec<ScalingPoint>,
    /// Common `t/N²` of every point.
    pub x: f64,
}

impl ScalingDataset {
    pub fn new(points: Vec<ScalingPoint>, x: f64) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::Unidentifiable("dataset is empty".into()));
        }
        for p in &points {
            if !(p.sigma > 0.0) || !p.sigma.is_finite() {
                return Err(Error::InvalidParams(format!("sigma_D must be positive, got {} at u = {}", p.sigma, p.u)));
            }
            if !p.u.is_finite() || !p.d.is_finite() || p.n < 1 {
                return Err(Error::InvalidParams(format!("non-finite point at u = {}", p.u)));
            }
        }
        Ok(ScalingDataset { points, x })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Points per system size, sizes ascending.
    pub fn counts_by_size(&self) -> BTreeMap<u32, usize> {
        let mut m = BTreeMap::new();
        for p in &self.points {
            *m.entry(p.n).or_insert(0) += 1;
        }
        m
    }

    pub fn u_range(&self) -> (f64, f64) {
        self.points.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| (lo.min(p.u), hi.max(p.u)))
    }

    /// Points with `lo <= u <= hi`.
    pub fn window(&self, lo: f64, hi: f64) -> Result<Self> {
        let points: Vec<_> = self.points.iter().copied().filter(|p| p.u >= lo && p.u <= hi).collect();
        ScalingDataset::new(points, self.x)
    }

    /// Fails unless at least two sizes are present.
    pub fn check_identifiable(&self) -> Result<()> {
        let sizes = self.counts_by_size();
        if sizes.len() < 2 {
            return Err(Error::Unidentifiable(format!(
                "need at least two system sizes, found {}",
                sizes.len()
            )));
        }
        Ok(())
    }
}

/// Parameters of the scaling function.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitParams {
    pub u_c: f64,
    pub nu: f64,
    /// `a_0 ..= a_kmax`.
    pub coeffs: Vec<f64>,
}

/// `y = (u - u_c) N^{1/ν}`.
pub fn scaling_variable(u: f64, n: u32, u_c: f64, nu: f64) -> f64 {
    (u - u_c) * f64::from(n).powf(1.0 / nu)
}

fn horner(coeffs: &[f64], y: f64) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, a| acc * y + a)
}

/// Predicted rate `Σ a_k y^k`.
pub fn scaling_model(u: f64, n: u32, params: &FitParams) -> f64 {
    horner(&params.coeffs, scaling_variable(u, n, params.u_c, params.nu))
}

/// `ξ = ξ0 |δu|^{-ν}`.
pub fn localization_length(delta_u: f64, nu: f64, xi0: f64) -> Result<f64> {
    if delta_u == 0.0 || !delta_u.is_finite() {
        return Err(Error::InvalidParams("localization length diverges at delta_u = 0".into()));
    }
    Ok(xi0 * delta_u.abs().powf(-nu))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub k_max: usize,
    /// Starting values of `ν`.
    pub nu_grid: Vec<f64>,
    /// Starting values of `u_c`.
    pub u_c_grid: Vec<f64>,
    /// Relative tolerance on `χ²` for the simplex stage.
    pub tolerance: f64,
    pub max_evaluations: usize,
}

impl FitConfig {
    /// Default starts: `ν ∈ {1.5, 2, …, 4}` and five `u_c` values across the data.
    pub fn for_dataset(dataset: &ScalingDataset, k_max: usize) -> Self {
        let (lo, hi) = dataset.u_range();
        FitConfig {
            k_max,
            nu_grid: vec![1.5, 2.0, 2.5, 3.0, 3.5, 4.0],
            u_c_grid: [0.1, 0.3, 0.5, 0.7, 0.9].iter().map(|f| lo + f * (hi - lo)).collect(),
            tolerance: 1e-10,
            max_evaluations: 4000,
        }
    }

    /// A single start at a known optimum.
    pub fn from_start(k_max: usize, u_c: f64, nu: f64) -> Self {
        FitConfig { k_max, nu_grid: vec![nu], u_c_grid: vec![u_c], tolerance: 1e-10, max_evaluations: 4000 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingFit {
    pub u_c: f64,
    pub nu: f64,
    pub coeffs: Vec<f64>,
    /// Critical rate, the `y = 0` value `a_0`.
    pub sigma_star: f64,
    /// Covariance of `(u_c, ν, a_0, …)` from the Gauss approximation.
    pub covariance: Vec<Vec<f64>>,
    /// Square roots of the covariance diagonal.
    pub param_err: Vec<f64>,
    pub bootstrap_err: Option<Vec<f64>>,
    pub chi2: f64,
    pub chi2_dof: f64,
    pub dof: usize,
    pub k_max: usize,
    pub n_points: usize,
}

impl ScalingFit {
    pub fn params(&self) -> FitParams {
        FitParams { u_c: self.u_c, nu: self.nu, coeffs: self.coeffs.clone() }
    }

    /// `(u_c, ν, a_0, …)`.
    pub fn parameter_vector(&self) -> Vec<f64> {
        let mut v = vec![self.u_c, self.nu];
        v.extend_from_slice(&self.coeffs);
        v
    }

    pub fn parameter_names(&self) -> Vec<String> {
        let mut v = vec!["u_c".to_string(), "nu".to_string()];
        v.extend((0..self.coeffs.len()).map(|k| format!("a_{k}")));
        v
    }
}

/// Weighted design matrix `y_i^k / σ_i` and target `D_i / σ_i`.
fn design(dataset: &ScalingDataset, u_c: f64, nu: f64, k_max: usize) -> (DMatrix<f64>, DVector<f64>) {
    let n = dataset.len();
    let mut a = DMatrix::zeros(n, k_max + 1);
    let mut b = DVector::zeros(n);
    for (i, p) in dataset.points.iter().enumerate() {
        let y = scaling_variable(p.u, p.n, u_c, nu);
        let mut yk = 1.0 / p.sigma;
        for k in 0..=k_max {
            a[(i, k)] = yk;
            yk *= y;
        }
        b[i] = p.d / p.sigma;
    }
    (a, b)
}

/// Exact linear subproblem: best `a_k` and `χ²` at fixed `(u_c, ν)`.
///
/// `None` when the design matrix is numerically rank deficient.
pub fn linear_coefficients(dataset: &ScalingDataset, u_c: f64, nu: f64, k_max: usize) -> Option<(Vec<f64>, f64)> {
    let (a, b) = design(dataset, u_c, nu, k_max);
    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if !(smax > 0.0) || !(smin > 1e-13 * smax) {
        return None;
    }
    let x = svd.solve(&b, 0.0).ok()?;
    let r = &a * &x - &b;
    Some((x.iter().copied().collect(), r.norm_squared()))
}

fn profile_chi2(dataset: &ScalingDataset, u_c: f64, nu: f64, k_max: usize) -> f64 {
    if !(nu > NU_BOUNDS.0 && nu < NU_BOUNDS.1) {
        return f64::INFINITY;
    }
    linear_coefficients(dataset, u_c, nu, k_max).map_or(f64::INFINITY, |(_, c)| c)
}

fn chi2_full(dataset: &ScalingDataset, p: &[f64]) -> f64 {
    dataset
        .points
        .iter()
        .map(|pt| {
            let y = scaling_variable(pt.u, pt.n, p[0], p[1]);
            ((horner(&p[2..], y) - pt.d) / pt.sigma).powi(2)
        })
        .sum()
}

/// Jacobian of the weighted residuals `(model - D)/σ` with respect to `(u_c, ν, a…)`.
fn jacobian(dataset: &ScalingDataset, p: &[f64]) -> DMatrix<f64> {
    let (u_c, nu) = (p[0], p[1]);
    let coeffs = &p[2..];
    let mut j = DMatrix::zeros(dataset.len(), p.len());
    for (i, pt) in dataset.points.iter().enumerate() {
        let ln_n = f64::from(pt.n).ln();
        let l = f64::from(pt.n).powf(1.0 / nu);
        let y = (pt.u - u_c) * l;
        let slope = coeffs.iter().enumerate().skip(1).rev().fold(0.0, |acc, (k, a)| acc * y + k as f64 * a);
        let w = 1.0 / pt.sigma;
        j[(i, 0)] = -slope * l * w;
        j[(i, 1)] = -slope * y * ln_n / (nu * nu) * w;
        let mut yk = w;
        for k in 0..coeffs.len() {
            j[(i, 2 + k)] = yk;
            yk *= y;
        }
    }
    j
}

fn residuals(dataset: &ScalingDataset, p: &[f64]) -> DVector<f64> {
    DVector::from_iterator(
        dataset.len(),
        dataset.points.iter().map(|pt| {
            let y = scaling_variable(pt.u, pt.n, p[0], p[1]);
            (horner(&p[2..], y) - pt.d) / pt.sigma
        }),
    )
}

/// Levenberg–Marquardt refinement on all parameters.
fn polish(dataset: &ScalingDataset, start: Vec<f64>) -> (Vec<f64>, f64) {
    let mut p = start;
    let mut chi2 = chi2_full(dataset, &p);
    let mut lambda = 1e-6;
    for _ in 0..500 {
        let j = jacobian(dataset, &p);
        let r = residuals(dataset, &p);
        let jt = j.transpose();
        let a = &jt * &j;
        let g = &jt * &r;
        let max_diag = a.diagonal().max().max(f64::MIN_POSITIVE);
        let mut damped = a.clone();
        for i in 0..p.len() {
            damped[(i, i)] += lambda * (a[(i, i)] + 1e-12 * max_diag);
        }
        let Some(step) = damped.lu().solve(&(-g)) else {
            lambda *= 10.0;
            if lambda > 1e16 {
                break;
            }
            continue;
        };
        let trial: Vec<f64> = p.iter().zip(step.iter()).map(|(a, b)| a + b).collect();
        let trial_chi2 = if trial[1] > NU_BOUNDS.0 && trial[1] < NU_BOUNDS.1 {
            chi2_full(dataset, &trial)
        } else {
            f64::INFINITY
        };
        if trial_chi2 <= chi2 {
            let gain = chi2 - trial_chi2;
            let step_small = step.iter().zip(&p).all(|(s, v)| s.abs() <= 1e-13 * v.abs().max(1e-3));
            p = trial;
            chi2 = trial_chi2;
            lambda = (lambda / 3.0).max(1e-15);
            if step_small || gain <= 1e-16 * chi2 {
                break;
            }
        } else {
            lambda *= 4.0;
            if lambda > 1e16 {
                break;
            }
        }
    }
    (p, chi2)
}

/// Moore–Penrose inverse of a symmetric positive semi-definite matrix.
/// `(JᵀJ)⁺` computed on the column-equilibrated Jacobian, so parameters of very
/// different magnitude (high powers of `y`) are not cut off as "singular".
fn covariance(j: &DMatrix<f64>) -> DMatrix<f64> {
    let n = j.ncols();
    let scale = DVector::from_fn(n, |c, _| {
        let norm = j.column(c).norm();
        if norm > 0.0 { 1.0 / norm } else { 1.0 }
    });
    let s = DMatrix::from_diagonal(&scale);
    let js = j * &s;
    let svd = (js.transpose() * &js).svd(true, true);
    let smax = svd.singular_values.max();
    match svd.pseudo_inverse(1e-14 * smax.max(f64::MIN_POSITIVE)) {
        Ok(inv) => &s * inv * &s,
        Err(_) => DMatrix::from_element(n, n, f64::NAN),
    }
}

/// Minimises `χ² = Σ ((D_i - model_i)/σ_i)²` over `(u_c, ν, a_0..a_kmax)`.
pub fn fit(dataset: &ScalingDataset, config: &FitConfig) -> Result<ScalingFit> {
    dataset.check_identifiable()?;
    let k = config.k_max;
    if !(1..=K_MAX_LIMIT).contains(&k) {
        return Err(Error::InvalidParams(format!("k_max must lie in [1, {K_MAX_LIMIT}], got {k}")));
    }
    let n_params = k + 3;
    if dataset.len() < n_params {
        return Err(Error::Unidentifiable(format!(
            "{} points cannot determine {n_params} parameters",
            dataset.len()
        )));
    }
    if config.nu_grid.is_empty() || config.u_c_grid.is_empty() {
        return Err(Error::InvalidParams("start grids must be non-empty".into()));
    }

    let starts: Vec<[f64; 2]> = config
        .u_c_grid
        .iter()
        .flat_map(|&u| config.nu_grid.iter().map(move |&nu| [u, nu]))
        .collect();
    if starts.iter().all(|s| linear_coefficients(dataset, s[0], s[1], k).is_none()) {
        return Err(Error::RankDeficient);
    }

    let (lo, hi) = dataset.u_range();
    let u_step = if hi > lo { 0.05 * (hi - lo) } else { 1e-3 };
    let opts = SimplexOptions { f_tol: config.tolerance, max_evaluations: config.max_evaluations, ..Default::default() };
    let objective = |x: [f64; 2]| profile_chi2(dataset, x[0], x[1], k);

    let minima: Vec<_> = starts
        .par_iter()
        .map(|&s| {
            let mut m = nelder_mead(objective, s, [u_step, 0.1 * s[1]], &opts);
            // restart from the best vertex until the simplex stops improving
            for _ in 0..3 {
                if !m.converged {
                    break;
                }
                let again = nelder_mead(objective, m.x, [0.1 * u_step, 0.01 * m.x[1]], &opts);
                let improved = again.value < m.value - config.tolerance * m.value.abs();
                let evaluations = m.evaluations + again.evaluations;
                m = if again.value <= m.value { again } else { m };
                m.evaluations = evaluations;
                if !improved {
                    break;
                }
            }
            m
        })
        .collect();

    let best = minima
        .iter()
        .enumerate()
        .filter(|(_, m)| m.converged && m.value.is_finite())
        .min_by(|a, b| a.1.value.total_cmp(&b.1.value).then(a.0.cmp(&b.0)))
        .map(|(_, m)| *m)
        .ok_or_else(|| Error::NoConvergence(format!("none of {} starts converged", starts.len())))?;

    let (coeffs, _) = linear_coefficients(dataset, best.x[0], best.x[1], k).ok_or(Error::RankDeficient)?;
    let mut start = vec![best.x[0], best.x[1]];
    start.extend(coeffs);
    let (p, chi2) = polish(dataset, start);
    let (p, chi2) = if chi2 <= best.value {
        (p, chi2)
    } else {
        let (c, v) = linear_coefficients(dataset, best.x[0], best.x[1], k).ok_or(Error::RankDeficient)?;
        let mut q = vec![best.x[0], best.x[1]];
        q.extend(c);
        (q, v)
    };

    let j = jacobian(dataset, &p);
    let cov = covariance(&j);
    let dof = dataset.len() - n_params;
    Ok(ScalingFit {
        u_c: p[0],
        nu: p[1],
        coeffs: p[2..].to_vec(),
        sigma_star: p[2],
        covariance: (0..n_params).map(|r| (0..n_params).map(|c| cov[(r, c)]).collect()).collect(),
        param_err: (0..n_params).map(|i| cov[(i, i)].max(0.0).sqrt()).collect(),
        bootstrap_err: None,
        chi2,
        chi2_dof: if dof > 0 { chi2 / dof as f64 } else { f64::NAN },
        dof,
        k_max: k,
        n_points: dataset.len(),
    })
}

/// Outcome of the polynomial-order scan.
#[derive(Debug, Clone)]
pub struct KmaxSelection {
    pub k_max: usize,
    pub fit: ScalingFit,
    /// `(k, χ²/dof)` for every order that could be fitted.
    pub scanned: Vec<(usize, f64)>,
}

/// Acceptance threshold `1 + 2√(2/dof)` on `χ²/dof`.
pub fn chi2_dof_threshold(dof: usize) -> f64 {
    1.0 + 2.0 * (2.0 / dof as f64).sqrt()
}

/// Smallest order in `k_range` whose `χ²/dof` passes [`chi2_dof_threshold`],
/// else the order with the smallest `χ²/dof`.
pub fn select_kmax(dataset: &ScalingDataset, k_range: (usize, usize), base: &FitConfig) -> Result<KmaxSelection> {
    let (lo, hi) = k_range;
    if lo < 1 || hi > K_MAX_LIMIT || lo > hi {
        return Err(Error::InvalidParams(format!("k range must lie within [1, {K_MAX_LIMIT}], got [{lo}, {hi}]")));
    }
    dataset.check_identifiable()?;
    let mut scanned = Vec::new();
    let mut fits: Vec<ScalingFit> = Vec::new();
    let mut last_err = None;
    for k in lo..=hi {
        if dataset.len() <= k + 3 {
            break;
        }
        match fit(dataset, &FitConfig { k_max: k, ..base.clone() }) {
            Ok(f) => {
                scanned.push((k, f.chi2_dof));
                let pass = f.chi2_dof < chi2_dof_threshold(f.dof);
                fits.push(f);
                if pass {
                    let fit = fits.pop().expect("just pushed");
                    return Ok(KmaxSelection { k_max: k, fit, scanned });
                }
            }
            Err(e @ (Error::Unidentifiable(_) | Error::InvalidParams(_))) => return Err(e),
            Err(e) => last_err = Some(e),
        }
    }
    let fit = fits
        .into_iter()
        .min_by(|a, b| a.chi2_dof.total_cmp(&b.chi2_dof))
        .ok_or_else(|| last_err.unwrap_or_else(|| Error::Unidentifiable("too few points for any order".into())))?;
    Ok(KmaxSelection { k_max: fit.k_max, fit, scanned })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CollapsePoint {
    pub y: f64,
    pub d: f64,
    pub sigma: f64,
    pub n: u32,
    pub u: f64,
}

/// Every point with its scaling variable under `fit`.
pub fn collapse_export(dataset: &ScalingDataset, fit: &ScalingFit) -> Vec<CollapsePoint> {
    dataset
        .points
        .iter()
        .map(|p| CollapsePoint { y: scaling_variable(p.u, p.n, fit.u_c, fit.nu), d: p.d, sigma: p.sigma, n: p.n, u: p.u })
        .collect()
}

/// Data drawn from the scaling form with gaussian noise of width `noise`
/// (`σ_D = noise`, or 1 when noiseless).
pub fn synthetic_dataset(
    truth: &FitParams,
    sizes: &[u32],
    u_values: &[f64],
    noise: f64,
    seed: u64,
) -> Result<ScalingDataset> {
    let mut rng = stream(seed, 0);
    let normal = Normal::new(0.0, 1.0).map_err(|e| Error::InvalidParams(e.to_string()))?;
    let mut points = Vec::with_capacity(sizes.len() * u_values.len());
    for &n in sizes {
        for &u in u_values {
            let clean = scaling_model(u, n, truth);
            let d = if noise > 0.0 { clean + noise * normal.sample(&mut rng) } else { clean };
            points.push(ScalingPoint { u, n, d, sigma: if noise > 0.0 { noise } else { 1.0 } });
        }
    }
    ScalingDataset::new(points, 0.25)
}

/// `count` evenly spaced values from `lo` to `hi` inclusive.
pub fn linspace(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    match count {
        0 => vec![],
        1 => vec![lo],
        _ => (0..count).map(|i| lo + (hi - lo) * i as f64 / (count - 1) as f64).collect(),
    }
}
