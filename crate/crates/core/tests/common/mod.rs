//! Independent dense references shared by the integration tests.
//!
//! Nothing here goes through the FFT propagator or the closed-form kick: the
//! angle transform is an explicit matrix using the physical momentum `n = j - N`,
//! and the kick is `exp(-iV/h)` from a hermitian eigendecomposition.

#![allow(dead_code)]

use nalgebra::{DMatrix, DVector, Matrix2, SymmetricEigen};
use num_complex::Complex64;
use qkr::evolve::SpinorState;

pub type CMat = DMatrix<Complex64>;
pub type CVec = DVector<Complex64>;

pub struct DenseModel {
    pub n_trunc: usize,
    pub h_e: f64,
    pub mu: f64,
    pub omega: f64,
    pub dz: f64,
    pub q: f64,
    pub alpha: f64,
}

/// `d(θ1, θ2)` straight from its definition.
pub fn d_of(t1: f64, t2: f64, mu: f64, dz: f64) -> [f64; 3] {
    [t1.sin(), t2.sin(), dz * (mu - t1.cos() - t2.cos())]
}

/// `V = (2 atan(2|d|)/|d|) d·σ`.
pub fn potential(d: [f64; 3]) -> Matrix2<Complex64> {
    let r = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt();
    let g = if r == 0.0 { 4.0 } else { 2.0 * (2.0 * r).atan() / r };
    let c = |x: f64, y: f64| Complex64::new(g * x, g * y);
    Matrix2::new(c(d[2], 0.0), c(d[0], -d[1]), c(d[0], d[1]), c(-d[2], 0.0))
}

/// `f(V/h)` via eigendecomposition.
pub fn matrix_function(v: &Matrix2<Complex64>, h: f64, f: impl Fn(f64) -> Complex64) -> Matrix2<Complex64> {
    let e = SymmetricEigen::new(*v);
    let q = e.eigenvectors;
    q * Matrix2::from_diagonal(&e.eigenvalues.map(|l| f(l / h))) * q.adjoint()
}

impl DenseModel {
    pub fn sites(&self) -> usize {
        2 * self.n_trunc
    }

    /// Spin-major vector `[up(n = -N..N-1), down(...)]`.
    pub fn to_vec(state: &SpinorState) -> CVec {
        let m = state.sites();
        CVec::from_fn(2 * m, |i, _| state.component(i / m)[i % m])
    }

    /// One full period at step `s`: free phase, then the kick at `θ2 = ω s + α`.
    pub fn period(&self, s: u64) -> CMat {
        let m = self.sites();
        let n0 = self.n_trunc as f64;
        let norm = 1.0 / (m as f64).sqrt();
        // A[k, j] = e^{i n_j θ_k} / sqrt(m)
        let a = CMat::from_fn(m, m, |k, j| {
            let theta = 2.0 * std::f64::consts::PI * k as f64 / m as f64;
            Complex64::from_polar(norm, (j as f64 - n0) * theta)
        });
        let a_h = a.adjoint();
        let theta2 = self.omega * s as f64 + self.alpha;
        let mut kick_angle_space = CMat::zeros(2 * m, 2 * m);
        for k in 0..m {
            let theta1 = 2.0 * std::f64::consts::PI * k as f64 / m as f64;
            let u = matrix_function(&potential(d_of(theta1, theta2, self.mu, self.dz)), self.h_e, |x| {
                Complex64::from_polar(1.0, -x)
            });
            for r in 0..2 {
                for c in 0..2 {
                    kick_angle_space[(r * m + k, c * m + k)] = u[(r, c)];
                }
            }
        }
        let mut to_angle = CMat::zeros(2 * m, 2 * m);
        let mut to_momentum = CMat::zeros(2 * m, 2 * m);
        for b in 0..2 {
            to_angle.view_mut((b * m, b * m), (m, m)).copy_from(&a);
            to_momentum.view_mut((b * m, b * m), (m, m)).copy_from(&a_h);
        }
        let free = CVec::from_fn(2 * m, |i, _| {
            let n = (i % m) as f64 - n0 + self.q;
            Complex64::from_polar(1.0, -self.h_e * n * n)
        });
        to_momentum * kick_angle_space * to_angle * CMat::from_diagonal(&free)
    }

    /// `t` periods, steps numbered `1..=t`.
    pub fn evolve(&self, mut v: CVec, t: u64) -> CVec {
        for s in 1..=t {
            v = self.period(s) * v;
        }
        v
    }
}

/// `½ Σ n² |ψ_n|²` with Neumaier compensated summation.
pub fn delta_sq_compensated(v: &CVec, n_trunc: usize) -> f64 {
    let m = 2 * n_trunc;
    let (mut sum, mut c) = (0.0f64, 0.0f64);
    for (i, z) in v.iter().enumerate() {
        let n = (i % m) as f64 - n_trunc as f64;
        let x = n * n * z.norm_sqr();
        let t = sum + x;
        c += if sum.abs() >= x.abs() { (sum - t) + x } else { (x - t) + sum };
        sum = t;
    }
    0.5 * (sum + c)
}

pub fn max_abs_diff(a: &CVec, b: &CVec) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}
