//! Kick potential of the spin-1/2 rotor and the matrices derived from it.
//!
//! The potential is `V = (2 atan(2d) / d) d·σ` with
//! `d = (sin θ1, sin θ2, c (μ - cos θ1 - cos θ2))`, so every spin matrix here is a
//! function of the unit vector `d/|d|` and one scalar angle.

use std::f64::consts::{PI, TAU};
use std::ops::Mul;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Below this `|d|` the kick uses its small-argument form.
pub const SMALL_D: f64 = 1e-8;

/// Which kick is applied. `Free` switches the potential off entirely and is used
/// as a test hook (no spreading, pure free phases).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Potential {
    #[default]
    Qwz,
    Free,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    /// Effective Planck constant.
    pub h_e: f64,
    pub mu: f64,
    /// Frequency of the second (reduced) rotor angle.
    pub omega: f64,
    /// Multiplier of the z component of `d`.
    pub dz_factor: f64,
    /// Momentum truncation: indices span `[-N, N-1]`.
    pub n_trunc: usize,
    #[serde(default)]
    pub potential: Potential,
}

impl ModelParams {
    pub const DEFAULT_MU: f64 = 1.0;
    pub const DEFAULT_DZ_FACTOR: f64 = 0.8;

    /// `2π/√5`.
    pub fn default_omega() -> f64 {
        TAU / 5f64.sqrt()
    }

    pub fn new(h_e: f64, n_trunc: usize) -> Result<Self> {
        let p = ModelParams {
            h_e,
            mu: Self::DEFAULT_MU,
            omega: Self::default_omega(),
            dz_factor: Self::DEFAULT_DZ_FACTOR,
            n_trunc,
            potential: Potential::Qwz,
        };
        p.validate()?;
        Ok(p)
    }

    /// Parameters at `h_e = 1/u`.
    pub fn from_inverse_planck(u: f64, n_trunc: usize) -> Result<Self> {
        if !(u > 0.0) || !u.is_finite() {
            return Err(Error::InvalidParams(format!("h_e^-1 must be positive, got {u}")));
        }
        Self::new(1.0 / u, n_trunc)
    }

    pub fn with_potential(mut self, potential: Potential) -> Self {
        self.potential = potential;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.h_e > 0.0) || !self.h_e.is_finite() {
            return Err(Error::InvalidParams(format!("h_e must be positive, got {}", self.h_e)));
        }
        if self.n_trunc < 2 || !self.n_trunc.is_power_of_two() {
            return Err(Error::InvalidParams(format!(
                "N must be a power of two >= 2, got {}",
                self.n_trunc
            )));
        }
        for (name, v) in [("mu", self.mu), ("omega", self.omega), ("dz_factor", self.dz_factor)] {
            if !v.is_finite() {
                return Err(Error::InvalidParams(format!("{name} must be finite")));
            }
        }
        Ok(())
    }

    /// Number of momentum sites, `2N`.
    pub fn sites(&self) -> usize {
        2 * self.n_trunc
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DVector {
    pub d1: f64,
    pub d2: f64,
    pub d3: f64,
    pub norm: f64,
}

impl DVector {
    pub fn new(d1: f64, d2: f64, d3: f64) -> Self {
        DVector { d1, d2, d3, norm: (d1 * d1 + d2 * d2 + d3 * d3).sqrt() }
    }

    /// Builds `d` from precomputed sines and cosines of both angles.
    #[inline]
    pub fn from_trig(sin1: f64, cos1: f64, sin2: f64, cos2: f64, mu: f64, dz_factor: f64) -> Self {
        Self::new(sin1, sin2, dz_factor * (mu - cos1 - cos2))
    }
}

/// Reduces an angle to `[0, 2π)`.
pub fn canonical_angle(theta: f64) -> f64 {
    let r = theta.rem_euclid(TAU);
    // rem_euclid can round up to exactly TAU for tiny negative inputs
    if r >= TAU {
        0.0
    } else {
        r
    }
}

pub fn d_vector(theta1: f64, theta2_eff: f64, params: &ModelParams) -> DVector {
    let (s1, c1) = canonical_angle(theta1).sin_cos();
    let (s2, c2) = canonical_angle(theta2_eff).sin_cos();
    DVector::from_trig(s1, c1, s2, c2, params.mu, params.dz_factor)
}

/// Row-major complex 2×2 matrix acting on spin.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpinMatrix2(pub [[Complex64; 2]; 2]);

impl SpinMatrix2 {
    pub const fn zero() -> Self {
        let z = Complex64::new(0.0, 0.0);
        SpinMatrix2([[z, z], [z, z]])
    }

    pub const fn identity() -> Self {
        let z = Complex64::new(0.0, 0.0);
        let o = Complex64::new(1.0, 0.0);
        SpinMatrix2([[o, z], [z, o]])
    }

    /// `a·I + b·(n·σ)` for a real 3-vector `n`.
    #[inline]
    pub fn from_pauli(a: Complex64, b: Complex64, n: [f64; 3]) -> Self {
        let [x, y, z] = n;
        SpinMatrix2([
            [a + b * z, b * Complex64::new(x, -y)],
            [b * Complex64::new(x, y), a - b * z],
        ])
    }

    pub fn pauli_x() -> Self {
        Self::from_pauli(0.0.into(), 1.0.into(), [1.0, 0.0, 0.0])
    }

    pub fn pauli_y() -> Self {
        Self::from_pauli(0.0.into(), 1.0.into(), [0.0, 1.0, 0.0])
    }

    pub fn pauli_z() -> Self {
        Self::from_pauli(0.0.into(), 1.0.into(), [0.0, 0.0, 1.0])
    }

    pub fn get(&self, r: usize, c: usize) -> Complex64 {
        self.0[r][c]
    }

    pub fn adjoint(&self) -> Self {
        let m = &self.0;
        SpinMatrix2([[m[0][0].conj(), m[1][0].conj()], [m[0][1].conj(), m[1][1].conj()]])
    }

    pub fn scale(&self, s: Complex64) -> Self {
        let m = &self.0;
        SpinMatrix2([[m[0][0] * s, m[0][1] * s], [m[1][0] * s, m[1][1] * s]])
    }

    pub fn add(&self, other: &Self) -> Self {
        let (a, b) = (&self.0, &other.0);
        SpinMatrix2([[a[0][0] + b[0][0], a[0][1] + b[0][1]], [a[1][0] + b[1][0], a[1][1] + b[1][1]]])
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.add(&other.scale((-1.0).into()))
    }

    pub fn det(&self) -> Complex64 {
        let m = &self.0;
        m[0][0] * m[1][1] - m[0][1] * m[1][0]
    }

    /// Inverse, or `None` when the determinant vanishes.
    pub fn inverse(&self) -> Option<Self> {
        let det = self.det();
        if det.norm() < 1e-300 {
            return None;
        }
        let m = &self.0;
        let inv = det.inv();
        Some(SpinMatrix2([[m[1][1] * inv, -m[0][1] * inv], [-m[1][0] * inv, m[0][0] * inv]]))
    }

    #[inline]
    pub fn apply(&self, v: [Complex64; 2]) -> [Complex64; 2] {
        let m = &self.0;
        [m[0][0] * v[0] + m[0][1] * v[1], m[1][0] * v[0] + m[1][1] * v[1]]
    }

    /// Largest entry-wise modulus of `self - other`.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        let d = self.sub(other);
        d.0.iter().flatten().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// `max |U†U - I|`.
    pub fn unitarity_error(&self) -> f64 {
        (self.adjoint() * *self).max_abs_diff(&Self::identity())
    }

    pub fn hermiticity_error(&self) -> f64 {
        self.max_abs_diff(&self.adjoint())
    }
}

impl Mul for SpinMatrix2 {
    type Output = SpinMatrix2;

    fn mul(self, rhs: SpinMatrix2) -> SpinMatrix2 {
        let (a, b) = (&self.0, &rhs.0);
        let mut out = SpinMatrix2::zero();
        for r in 0..2 {
            for c in 0..2 {
                out.0[r][c] = a[r][0] * b[0][c] + a[r][1] * b[1][c];
            }
        }
        out
    }
}

/// `d·σ`.
pub fn d_dot_sigma(d: &DVector) -> SpinMatrix2 {
    SpinMatrix2::from_pauli(0.0.into(), 1.0.into(), [d.d1, d.d2, d.d3])
}

/// Rotation angle `χ = 2 atan(2|d|) / h_e` of the kick unitary.
#[inline]
pub fn kick_angle(d_norm: f64, h_e: f64) -> f64 {
    2.0 * (2.0 * d_norm).atan() / h_e
}

/// `exp(-i V/h_e) = cos χ I - i sin χ (d/|d|)·σ` for a given `d`.
#[inline]
pub fn kick_from_d(d: &DVector, h_e: f64) -> SpinMatrix2 {
    if d.norm < SMALL_D {
        // atan(2d)/d -> 2, so V/h_e -> (4/h_e) d·σ and exp(-iV/h_e) -> I - i (4/h_e) d·σ
        let b = Complex64::new(0.0, -4.0 / h_e);
        return SpinMatrix2::from_pauli(1.0.into(), b, [d.d1, d.d2, d.d3]);
    }
    let (sin_chi, cos_chi) = kick_angle(d.norm, h_e).sin_cos();
    let inv = 1.0 / d.norm;
    SpinMatrix2::from_pauli(
        Complex64::new(cos_chi, 0.0),
        Complex64::new(0.0, -sin_chi),
        [d.d1 * inv, d.d2 * inv, d.d3 * inv],
    )
}

/// Kick unitary `exp(-i V(θ1, θ2)/h_e)`.
pub fn kick_matrix(theta1: f64, theta2_eff: f64, params: &ModelParams) -> SpinMatrix2 {
    match params.potential {
        Potential::Free => SpinMatrix2::identity(),
        Potential::Qwz => kick_from_d(&d_vector(theta1, theta2_eff, params), params.h_e),
    }
}

/// The potential `V(θ1, θ2) = (2 atan(2d)/d) d·σ` itself (no `1/h_e`).
pub fn potential_matrix(theta1: f64, theta2_eff: f64, params: &ModelParams) -> SpinMatrix2 {
    match params.potential {
        Potential::Free => SpinMatrix2::zero(),
        Potential::Qwz => {
            let d = d_vector(theta1, theta2_eff, params);
            let pref = if d.norm < SMALL_D { 4.0 } else { 2.0 * (2.0 * d.norm).atan() / d.norm };
            d_dot_sigma(&d).scale(pref.into())
        }
    }
}

/// `free_phase(n, q, h_e) = exp(-i h_e (n + q)^2)`, the kinetic factor `exp(-i H0/h_e)`.
#[inline]
pub fn free_phase(n: i64, q: f64, h_e: f64) -> Complex64 {
    let k = n as f64 + q;
    Complex64::from_polar(1.0, -h_e * k * k)
}

/// Anderson hopping matrix `W = 2 d·σ`, equal to `tan(V/2)`.
pub fn w_matrix(theta1: f64, theta2_eff: f64, params: &ModelParams) -> SpinMatrix2 {
    match params.potential {
        Potential::Free => SpinMatrix2::zero(),
        Potential::Qwz => d_dot_sigma(&d_vector(theta1, theta2_eff, params)).scale(2.0.into()),
    }
}

/// Hopping matrix for general `h_e`: `tan(V / (2 h_e)) = tan(χ/2) (d/|d|)·σ`.
///
/// Reduces to [`w_matrix`] at `h_e = 1`. Fails where `χ/2` approaches `π/2`.
pub fn tangent_matrix(theta1: f64, theta2_eff: f64, params: &ModelParams) -> Result<SpinMatrix2> {
    if params.potential == Potential::Free {
        return Ok(SpinMatrix2::zero());
    }
    let d = d_vector(theta1, theta2_eff, params);
    if d.norm < SMALL_D {
        return Ok(d_dot_sigma(&d).scale((2.0 / params.h_e).into()));
    }
    let half = 0.5 * kick_angle(d.norm, params.h_e);
    let cos_half = half.cos();
    if cos_half.abs() < 1e-6 {
        return Err(Error::TangentSingularity { site: 0, cos_abs: cos_half.abs() });
    }
    let t = half.tan() / d.norm;
    Ok(d_dot_sigma(&d).scale(t.into()))
}

/// Uniform angle grid `θ_j = 2π j / m`.
pub fn angle_grid(m: usize) -> Vec<f64> {
    (0..m).map(|j| 2.0 * PI * j as f64 / m as f64).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{Matrix2, SymmetricEigen};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn params(h_e: f64) -> ModelParams {
        ModelParams::new(h_e, 4).unwrap()
    }

    fn to_na(m: &SpinMatrix2) -> Matrix2<Complex64> {
        Matrix2::new(m.0[0][0], m.0[0][1], m.0[1][0], m.0[1][1])
    }

    fn from_na(m: &Matrix2<Complex64>) -> SpinMatrix2 {
        SpinMatrix2([[m[(0, 0)], m[(0, 1)]], [m[(1, 0)], m[(1, 1)]]])
    }

    /// `f(H)` of a Hermitian matrix through its eigendecomposition.
    fn hermitian_fn(h: &SpinMatrix2, f: impl Fn(f64) -> Complex64) -> SpinMatrix2 {
        let eig = SymmetricEigen::new(to_na(h));
        let q = eig.eigenvectors;
        let diag = Matrix2::from_diagonal(&eig.eigenvalues.map(&f));
        from_na(&(q * diag * q.adjoint()))
    }

    #[test]
    fn d_vector_at_origin() {
        let d = d_vector(0.0, 0.0, &params(1.0));
        assert_eq!((d.d1, d.d2), (0.0, 0.0));
        assert!((d.d3 + 0.8).abs() < 1e-15);
        assert!((d.norm - 0.8).abs() < 1e-15);
    }

    #[test]
    fn d_vector_at_half_pi() {
        let h = std::f64::consts::FRAC_PI_2;
        let d = d_vector(h, h, &params(1.0));
        assert!((d.d1 - 1.0).abs() < 1e-15 && (d.d2 - 1.0).abs() < 1e-15);
        assert!((d.d3 - 0.8).abs() < 1e-15);
        assert!((d.norm - 2.64f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn d_vector_extended_precision() {
        // mpmath, 40 digits
        let d = d_vector(1.234, 2.345, &params(1.0));
        assert!((d.d1 - 0.943_818_209_374_633_704_86).abs() < 1e-15);
        assert!((d.d2 - 0.714_978_010_136_492_776_2).abs() < 1e-15);
        assert!((d.d3 - 1.094_945_466_292_042_340_3).abs() < 1e-15);
        assert!((d.norm - 1.612_728_105_254_998_246_2).abs() < 1e-15);
        assert!((d.norm.powi(2) - (d.d1 * d.d1 + d.d2 * d.d2 + d.d3 * d.d3)).abs() < 1e-15);
    }

    #[test]
    fn d_vector_is_periodic() {
        let p = params(1.0);
        let a = d_vector(1.1, 5.9, &p);
        let b = d_vector(1.1 + TAU, 5.9 - 2.0 * TAU, &p);
        assert!((a.d1 - b.d1).abs() < 1e-14);
        assert!((a.d2 - b.d2).abs() < 1e-14);
        assert!((a.d3 - b.d3).abs() < 1e-14);
    }

    #[test]
    fn kick_at_quarter_turn_is_pure_pauli() {
        // |d| = 1/2 and h_e = 1 give χ = π/2
        let d = DVector::new(0.3, 0.0, 0.4);
        let u = kick_from_d(&d, 1.0);
        let expect = d_dot_sigma(&d).scale(Complex64::new(0.0, -2.0));
        assert!(u.max_abs_diff(&expect) < 1e-15);
    }

    #[test]
    fn kick_along_z_is_diagonal() {
        let u = kick_matrix(0.0, 0.0, &params(1.0));
        let chi = 2.0 * 1.6f64.atan();
        assert!((u.get(0, 0) - Complex64::from_polar(1.0, chi)).norm() < 1e-15);
        assert!((u.get(1, 1) - Complex64::from_polar(1.0, -chi)).norm() < 1e-15);
        assert!((u.get(0, 0).norm() - 1.0).abs() < 1e-15);
        assert_eq!(u.get(0, 1), Complex64::new(0.0, 0.0));
    }

    #[test]
    fn kick_matches_extended_precision_expm() {
        // mpmath expm(-i V / h_e) at θ = (0.7, 4.1), h_e = 0.4695
        let u = kick_matrix(0.7, 4.1, &params(0.4695));
        let expect = SpinMatrix2([
            [
                Complex64::new(0.324_124_456_716_852_778_12, 0.499_769_717_756_790_152_95),
                Complex64::new(-0.631_110_077_748_515_953_62, 0.496_863_799_783_769_201_38),
            ],
            [
                Complex64::new(0.631_110_077_748_515_953_62, 0.496_863_799_783_769_201_38),
                Complex64::new(0.324_124_456_716_852_778_12, -0.499_769_717_756_790_152_95),
            ],
        ]);
        assert!(u.max_abs_diff(&expect) < 1e-14);
    }

    #[test]
    fn kick_matches_eigendecomposition_expm() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..500 {
            let p = params(rng.gen_range(0.2..5.0));
            let (t1, t2) = (rng.gen_range(0.0..TAU), rng.gen_range(0.0..TAU));
            let v = potential_matrix(t1, t2, &p);
            let h_e = p.h_e;
            let oracle = hermitian_fn(&v, |x| Complex64::from_polar(1.0, -x / h_e));
            assert!(kick_matrix(t1, t2, &p).max_abs_diff(&oracle) < 1e-12);
        }
    }

    #[test]
    fn small_d_branch_is_continuous() {
        let d_small = DVector::new(3e-9, -2e-9, 4e-9);
        let d_above = DVector::new(3e-8, -2e-8, 4e-8);
        let u = kick_from_d(&d_small, 0.7);
        assert!(u.unitarity_error() < 1e-15);
        assert!(u.max_abs_diff(&SpinMatrix2::identity()) < 1e-7);
        // just above the switch the closed form agrees with the linearisation
        let lin = SpinMatrix2::from_pauli(1.0.into(), Complex64::new(0.0, -4.0 / 0.7), [3e-8, -2e-8, 4e-8]);
        assert!(kick_from_d(&d_above, 0.7).max_abs_diff(&lin) < 1e-13);
        assert_eq!(kick_from_d(&DVector::new(0.0, 0.0, 0.0), 1.0), SpinMatrix2::identity());
    }

    #[test]
    fn kick_is_unitary() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..10_000 {
            let p = params(rng.gen_range(0.2..5.0));
            let u = kick_matrix(rng.gen_range(0.0..TAU), rng.gen_range(0.0..TAU), &p);
            assert!(u.unitarity_error() < 1e-12);
        }
    }

    #[test]
    fn free_phase_values() {
        assert_eq!(free_phase(0, 0.0, 0.37), Complex64::new(1.0, 0.0));
        let z = free_phase(1, 0.0, PI);
        assert!((z - Complex64::new(-1.0, 0.0)).norm() < 1e-15);
        let z = free_phase(-3, 0.37, 0.4695);
        assert!((z.re + 0.994_398_690_074_197_072_48).abs() < 1e-14);
        assert!((z.im - 0.105_694_111_372_019_948_66).abs() < 1e-14);
    }

    #[test]
    fn w_matrix_along_z() {
        let w = w_matrix(0.0, 0.0, &params(1.0));
        assert!((w.get(0, 0).re + 1.6).abs() < 1e-15);
        assert!((w.get(1, 1).re - 1.6).abs() < 1e-15);
        assert!(w.hermiticity_error() == 0.0);
    }

    #[test]
    fn w_matrix_is_matrix_tangent_of_half_potential() {
        let h = std::f64::consts::FRAC_PI_2;
        let p = params(1.0);
        let w = w_matrix(h, h, &p);
        // off-diagonals 2(d1 ∓ i d2) with d = (1, 1, 0.8)
        assert!((w.get(0, 1) - Complex64::new(2.0, -2.0)).norm() < 1e-15);
        assert!((w.get(1, 0) - Complex64::new(2.0, 2.0)).norm() < 1e-15);
        let oracle = hermitian_fn(&potential_matrix(h, h, &p), |x| (x / 2.0).tan().into());
        assert!(w.max_abs_diff(&oracle) < 1e-12);

        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..1000 {
            let (t1, t2) = (rng.gen_range(0.0..TAU), rng.gen_range(0.0..TAU));
            let oracle = hermitian_fn(&potential_matrix(t1, t2, &p), |x| (x / 2.0).tan().into());
            assert!(w_matrix(t1, t2, &p).max_abs_diff(&oracle) < 1e-10);
        }
    }

    #[test]
    fn cayley_identity() {
        let p = params(1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let i = Complex64::new(0.0, 1.0);
        for _ in 0..1000 {
            let (t1, t2) = (rng.gen_range(0.0..TAU), rng.gen_range(0.0..TAU));
            let w = w_matrix(t1, t2, &p);
            let one = SpinMatrix2::identity();
            let cayley = one.sub(&w.scale(i)) * one.add(&w.scale(i)).inverse().unwrap();
            assert!(kick_matrix(t1, t2, &p).max_abs_diff(&cayley) < 1e-10);
        }
    }

    #[test]
    fn tangent_matrix_reduces_to_w_at_unit_planck() {
        let p = params(1.0);
        let t = tangent_matrix(0.4, 2.2, &p).unwrap();
        assert!(t.max_abs_diff(&w_matrix(0.4, 2.2, &p)) < 1e-13);

        let p = params(1.7);
        let t = tangent_matrix(0.4, 2.2, &p).unwrap();
        let h_e = p.h_e;
        let oracle = hermitian_fn(&potential_matrix(0.4, 2.2, &p), |x| (x / (2.0 * h_e)).tan().into());
        assert!(t.max_abs_diff(&oracle) < 1e-12);
    }

    #[test]
    fn free_potential_hooks() {
        let p = params(0.5).with_potential(Potential::Free);
        assert_eq!(kick_matrix(1.0, 2.0, &p), SpinMatrix2::identity());
        assert_eq!(w_matrix(1.0, 2.0, &p), SpinMatrix2::zero());
    }

    #[test]
    fn params_validation() {
        assert!(ModelParams::new(0.0, 8).is_err());
        assert!(ModelParams::new(-1.0, 8).is_err());
        assert!(ModelParams::new(1.0, 6).is_err());
        assert!(ModelParams::new(1.0, 1).is_err());
        assert!(ModelParams::from_inverse_planck(0.0, 8).is_err());
        let p = ModelParams::from_inverse_planck(2.0, 8).unwrap();
        assert_eq!(p.h_e, 0.5);
        assert_eq!(p.sites(), 16);
        assert!((p.omega - TAU / 5f64.sqrt()).abs() == 0.0);
    }

    #[test]
    fn canonical_angle_range() {
        assert_eq!(canonical_angle(-1e-300), 0.0);
        assert!((canonical_angle(-0.5) - (TAU - 0.5)).abs() < 1e-15);
        assert!((canonical_angle(7.0) - (7.0 - TAU)).abs() < 1e-15);
    }
}
