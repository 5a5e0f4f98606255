//! Dense small-size check of the correspondence between Floquet eigenstates and a
//! tight-binding (Anderson) problem.
//!
//! With the second angle frozen the one-period operator `F = e^{-iV/h} e^{-iH0/h}`
//! is time independent. For an eigenvector `F a₊ = e^{-iε} a₊` the vectors
//! `a₋ = e^{iε - iH0/h} a₊` and `u = (a₊ + a₋)/2` satisfy
//! `a₊ = (1 - iW) u`, `a₋ = (1 + iW) u` and `W u + tan((H0/h - ε)/2) u = 0`,
//! where `W = tan(V / 2h)` is diagonal in angle space. All matrices here live on
//! the `2·2N`-dimensional truncated space, indexed `s·2N + j` (spin-major).

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::model::{free_phase, kick_matrix, tangent_matrix, ModelParams, SpinMatrix2};
use crate::{Error, Result};

/// Largest `N` accepted for dense matrices.
pub const DENSE_LIMIT: usize = 32;

/// Eigenvector residual above which a vector is rejected.
pub const EIGEN_TOLERANCE: f64 = 1e-8;

/// Sites with `|cos((H0/h - ε)/2)|` below this are tangent singularities.
pub const SINGULAR_COS: f64 = 1e-6;

pub type CMatrix = DMatrix<Complex64>;
pub type CVector = DVector<Complex64>;

/// A time-independent instance: second angle frozen at `theta2`.
#[derive(Debug, Clone, PartialEq)]
pub struct StaticSetup {
    pub params: ModelParams,
    pub q: f64,
    pub theta2: f64,
}

impl StaticSetup {
    pub fn new(params: ModelParams, q: f64, theta2: f64) -> Result<Self> {
        params.validate()?;
        if params.n_trunc > DENSE_LIMIT {
            return Err(Error::DenseTooLarge { n: params.n_trunc, limit: DENSE_LIMIT });
        }
        Ok(StaticSetup { params, q, theta2 })
    }

    pub fn dim(&self) -> usize {
        2 * self.params.sites()
    }

    /// `H0(m)/h_e = h_e (m + q)²` for every basis index (spin-major).
    pub fn kinetic_phases(&self) -> Vec<f64> {
        let m = self.params.sites();
        let n = self.params.n_trunc as i64;
        let h = self.params.h_e;
        (0..2 * m)
            .map(|i| {
                let k = ((i % m) as i64 - n) as f64 + self.q;
                h * k * k
            })
            .collect()
    }
}

/// Unitary momentum→angle transform for one spin component,
/// `A[k, j] = e^{i n_j θ_k} / √(2N)` with `n_j = j - N`, `θ_k = 2πk/(2N)`.
fn angle_transform(n_trunc: usize) -> CMatrix {
    let m = 2 * n_trunc;
    let norm = 1.0 / (m as f64).sqrt();
    CMatrix::from_fn(m, m, |k, j| {
        let n = j as f64 - n_trunc as f64;
        let theta = std::f64::consts::TAU * k as f64 / m as f64;
        Complex64::from_polar(norm, n * theta)
    })
}

/// `T† · diag_k(f(θ_k)) · T` where `T` transforms both spin components.
fn from_angle_diagonal<F>(n_trunc: usize, f: F) -> Result<CMatrix>
where
    F: Fn(f64) -> Result<SpinMatrix2>,
{
    let m = 2 * n_trunc;
    let a = angle_transform(n_trunc);
    let mut t = CMatrix::zeros(2 * m, 2 * m);
    t.view_mut((0, 0), (m, m)).copy_from(&a);
    t.view_mut((m, m), (m, m)).copy_from(&a);
    let mut k_mat = CMatrix::zeros(2 * m, 2 * m);
    for k in 0..m {
        let theta = std::f64::consts::TAU * k as f64 / m as f64;
        let blk = f(theta).map_err(|e| match e {
            Error::TangentSingularity { cos_abs, .. } => Error::TangentSingularity { site: k, cos_abs },
            other => other,
        })?;
        for r in 0..2 {
            for c in 0..2 {
                k_mat[(r * m + k, c * m + k)] = blk.get(r, c);
            }
        }
    }
    Ok(t.adjoint() * k_mat * t)
}

/// Dense one-period operator `e^{-iV(θ, θ2)/h} e^{-iH0/h}`.
pub fn static_floquet_matrix(setup: &StaticSetup) -> Result<CMatrix> {
    let p = &setup.params;
    let kick = from_angle_diagonal(p.n_trunc, |theta| Ok(kick_matrix(theta, setup.theta2, p)))?;
    let m = p.sites();
    let n = p.n_trunc as i64;
    let phases = CVector::from_fn(2 * m, |i, _| free_phase((i % m) as i64 - n, setup.q, p.h_e));
    Ok(kick * CMatrix::from_diagonal(&phases))
}

/// Momentum-space hopping matrix `W = tan(V / 2h)`.
pub fn hopping_matrix(setup: &StaticSetup) -> Result<CMatrix> {
    hopping_matrix_with(setup, tangent_matrix)
}

/// As [`hopping_matrix`], with the angle-space hopping supplied by the caller.
pub fn hopping_matrix_with<F>(setup: &StaticSetup, hopping: F) -> Result<CMatrix>
where
    F: Fn(f64, f64, &ModelParams) -> Result<SpinMatrix2>,
{
    from_angle_diagonal(setup.params.n_trunc, |theta| hopping(theta, setup.theta2, &setup.params))
}

/// Quasi-energy and eigenvector of the static Floquet operator.
#[derive(Debug, Clone)]
pub struct Eigenstate {
    /// `F a = e^{-iε} a`, `ε ∈ (-π, π]`.
    pub epsilon: f64,
    pub vector: CVector,
}

/// Eigenpairs of a unitary matrix through its complex Schur form, which is
/// diagonal for normal matrices.
pub fn floquet_eigenstates(f: &CMatrix) -> Result<Vec<Eigenstate>> {
    let schur = nalgebra::Schur::try_new(f.clone(), 1e-15, 10_000)
        .ok_or_else(|| Error::NoConvergence("Schur decomposition of the Floquet matrix".into()))?;
    let (q, t) = schur.unpack();
    Ok((0..f.nrows())
        .map(|i| Eigenstate { epsilon: -t[(i, i)].arg(), vector: q.column(i).into_owned() })
        .collect())
}

/// `‖F a - e^{-iε} a‖ / ‖a‖`.
pub fn eigen_residual(f: &CMatrix, a: &CVector, epsilon: f64) -> f64 {
    let lambda = Complex64::from_polar(1.0, -epsilon);
    (f * a - a * lambda).norm() / a.norm()
}

/// Returns `(a₋, u)` for an eigenvector `a₊` with quasi-energy `ε`.
pub fn cayley_pair(setup: &StaticSetup, a_plus: &CVector, epsilon: f64) -> Result<(CVector, CVector)> {
    let f = static_floquet_matrix(setup)?;
    cayley_pair_with(setup, &f, a_plus, epsilon)
}

/// As [`cayley_pair`] with a prebuilt Floquet matrix.
pub fn cayley_pair_with(
    setup: &StaticSetup,
    f: &CMatrix,
    a_plus: &CVector,
    epsilon: f64,
) -> Result<(CVector, CVector)> {
    let res = eigen_residual(f, a_plus, epsilon);
    if !(res <= EIGEN_TOLERANCE) {
        return Err(Error::NotEigenvector(res));
    }
    let phases = setup.kinetic_phases();
    let a_minus = CVector::from_fn(a_plus.len(), |i, _| a_plus[i] * Complex64::from_polar(1.0, epsilon - phases[i]));
    let u = (a_plus + &a_minus) * Complex64::new(0.5, 0.0);
    Ok((a_minus, u))
}

/// Max-norm defects of `a₊ = (1 - iW) u` and `a₋ = (1 + iW) u`.
pub fn cayley_defects(w: &CMatrix, a_plus: &CVector, a_minus: &CVector, u: &CVector) -> (f64, f64) {
    let iw_u = w * u * Complex64::new(0.0, 1.0);
    ((u - &iw_u - a_plus).camax(), (u + &iw_u - a_minus).camax())
}

/// Tight-binding form of the eigenproblem at one quasi-energy.
#[derive(Debug, Clone)]
pub struct SecularProblem {
    pub w_hop: CMatrix,
    /// `tan((H0(m)/h - ε)/2)` per basis index.
    pub diag_pot: Vec<f64>,
    pub epsilon: f64,
}

impl SecularProblem {
    pub fn new(setup: &StaticSetup, epsilon: f64) -> Result<Self> {
        Self::with_hopping(setup, hopping_matrix(setup)?, epsilon)
    }

    pub fn with_hopping(setup: &StaticSetup, w_hop: CMatrix, epsilon: f64) -> Result<Self> {
        let mut diag_pot = Vec::with_capacity(setup.dim());
        for (site, phi) in setup.kinetic_phases().into_iter().enumerate() {
            let half = 0.5 * (phi - epsilon);
            let cos_abs = half.cos().abs();
            if cos_abs <= SINGULAR_COS {
                return Err(Error::TangentSingularity { site, cos_abs });
            }
            diag_pot.push(half.tan());
        }
        Ok(SecularProblem { w_hop, diag_pot, epsilon })
    }

    /// `‖W u + tan((H0/h - ε)/2) u‖ / ‖u‖`.
    pub fn residual(&self, u: &CVector) -> f64 {
        let mut r = &self.w_hop * u;
        for (i, t) in self.diag_pot.iter().enumerate() {
            r[i] += u[i] * *t;
        }
        r.norm() / u.norm()
    }
}

/// Relative residual of the tight-binding equation for `u` at quasi-energy `ε`.
pub fn secular_residual(setup: &StaticSetup, u: &CVector, epsilon: f64) -> Result<f64> {
    Ok(SecularProblem::new(setup, epsilon)?.residual(u))
}

/// Summary of the mapping check over every eigenstate of one instance.
#[derive(Debug, Clone, PartialEq)]
pub struct InstanceReport {
    pub n_trunc: usize,
    pub states: usize,
    /// Eigenstates skipped because a diagonal tangent is singular.
    pub singular: usize,
    pub max_eigen_residual: f64,
    pub max_cayley_defect: f64,
    pub max_secular_residual: f64,
    /// Quasi-energy at which the largest secular residual occurred.
    pub worst_epsilon: f64,
}

/// Runs the full mapping check for one static instance.
pub fn check_instance(setup: &StaticSetup) -> Result<InstanceReport> {
    let w = hopping_matrix(setup)?;
    check_instance_with(setup, &w)
}

/// As [`check_instance`] with a caller-supplied hopping matrix.
pub fn check_instance_with(setup: &StaticSetup, w: &CMatrix) -> Result<InstanceReport> {
    let f = static_floquet_matrix(setup)?;
    let states = floquet_eigenstates(&f)?;
    let mut report = InstanceReport {
        n_trunc: setup.params.n_trunc,
        states: states.len(),
        singular: 0,
        max_eigen_residual: 0.0,
        max_cayley_defect: 0.0,
        max_secular_residual: 0.0,
        worst_epsilon: f64::NAN,
    };
    for st in &states {
        report.max_eigen_residual = report.max_eigen_residual.max(eigen_residual(&f, &st.vector, st.epsilon));
        let (a_minus, u) = cayley_pair_with(setup, &f, &st.vector, st.epsilon)?;
        let (dp, dm) = cayley_defects(w, &st.vector, &a_minus, &u);
        report.max_cayley_defect = report.max_cayley_defect.max(dp).max(dm);
        match SecularProblem::with_hopping(setup, w.clone(), st.epsilon) {
            Ok(problem) => {
                let r = problem.residual(&u);
                if !(r <= report.max_secular_residual) {
                    report.max_secular_residual = r;
                    report.worst_epsilon = st.epsilon;
                }
            }
            Err(Error::TangentSingularity { .. }) => report.singular += 1,
            Err(e) => return Err(e),
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{w_matrix, Potential};

    fn setup(h_e: f64, n: usize) -> StaticSetup {
        StaticSetup::new(ModelParams::new(h_e, n).unwrap(), 0.37, 1.3).unwrap()
    }

    fn unitarity_error(f: &CMatrix) -> f64 {
        (f.adjoint() * f - CMatrix::identity(f.nrows(), f.ncols())).camax()
    }

    #[test]
    fn dense_size_guard() {
        let p = ModelParams::new(1.0, 64).unwrap();
        assert!(matches!(StaticSetup::new(p, 0.1, 0.0), Err(Error::DenseTooLarge { n: 64, limit: 32 })));
    }

    #[test]
    fn floquet_matrix_is_unitary() {
        for n in [4, 8, 16] {
            let f = static_floquet_matrix(&setup(1.0, n)).unwrap();
            assert!(unitarity_error(&f) < 1e-12);
        }
    }

    #[test]
    fn free_floquet_matrix_is_diagonal_phases() {
        let mut s = setup(0.8, 4);
        s.params.potential = Potential::Free;
        let f = static_floquet_matrix(&s).unwrap();
        for i in 0..16 {
            for j in 0..16 {
                let expect = if i == j {
                    free_phase((i % 8) as i64 - 4, s.q, 0.8)
                } else {
                    Complex64::new(0.0, 0.0)
                };
                assert!((f[(i, j)] - expect).norm() < 1e-14);
            }
        }
    }

    #[test]
    fn free_eigenvector_maps_to_itself() {
        let mut s = setup(1.0, 4);
        s.params.potential = Potential::Free;
        let phases = s.kinetic_phases();
        let mut a = CVector::zeros(16);
        a[5] = Complex64::new(1.0, 0.0);
        let eps = phases[5];
        let (a_minus, u) = cayley_pair(&s, &a, eps).unwrap();
        assert!((&a_minus - &a).camax() < 1e-14);
        assert!((&u - &a).camax() < 1e-14);
        assert!(secular_residual(&s, &u, eps).unwrap() < 1e-14);
    }

    #[test]
    fn rejects_non_eigenvectors() {
        let s = setup(1.0, 4);
        let a = CVector::from_element(16, Complex64::new(0.25, 0.0));
        assert!(matches!(cayley_pair(&s, &a, 0.3), Err(Error::NotEigenvector(_))));
    }

    #[test]
    fn cayley_identities_at_n4_and_n8() {
        for n in [4, 8] {
            let s = setup(1.0, n);
            let f = static_floquet_matrix(&s).unwrap();
            let w = hopping_matrix(&s).unwrap();
            for st in floquet_eigenstates(&f).unwrap() {
                let (a_minus, u) = cayley_pair_with(&s, &f, &st.vector, st.epsilon).unwrap();
                let (dp, dm) = cayley_defects(&w, &st.vector, &a_minus, &u);
                assert!(dp < 1e-10, "N={n}: (1-iW)u - a+ = {dp:e}");
                assert!(dm < 1e-10, "N={n}: (1+iW)u - a- = {dm:e}");
            }
        }
    }

    #[test]
    fn secular_residual_small_for_eigenstates() {
        let s = setup(1.0, 4);
        let report = check_instance(&s).unwrap();
        assert_eq!(report.states, 16);
        assert!(report.max_eigen_residual < 1e-12);
        assert!(report.max_secular_residual < 1e-8, "{report:?}");
    }

    #[test]
    fn perturbed_u_is_detected() {
        let s = setup(1.0, 4);
        let f = static_floquet_matrix(&s).unwrap();
        let st = &floquet_eigenstates(&f).unwrap()[3];
        let (_, u) = cayley_pair_with(&s, &f, &st.vector, st.epsilon).unwrap();
        let mut noisy = u.clone();
        for (i, z) in noisy.iter_mut().enumerate() {
            *z += Complex64::new(1e-3 * ((i as f64) * 0.7).sin(), 1e-3 * ((i as f64) * 1.3).cos());
        }
        assert!(secular_residual(&s, &noisy, st.epsilon).unwrap() > 1e-4);
    }

    #[test]
    fn tangent_singularity_is_reported() {
        let s = setup(1.0, 4);
        // ε = H0(m)/h - π makes the tangent at site m singular
        let eps = s.kinetic_phases()[2] - std::f64::consts::PI;
        assert!(matches!(SecularProblem::new(&s, eps), Err(Error::TangentSingularity { site: 2, .. })));
    }

    #[test]
    fn hopping_matches_w_at_unit_planck() {
        let s = setup(1.0, 8);
        let a = hopping_matrix(&s).unwrap();
        let b = hopping_matrix_with(&s, |t1, t2, p| Ok(w_matrix(t1, t2, p))).unwrap();
        assert!((&a - &b).camax() < 1e-12);
        assert!((&a - a.adjoint()).camax() < 1e-12);
    }

    #[test]
    fn general_planck_constant_mapping() {
        let report = check_instance(&setup(1.3, 8)).unwrap();
        assert!(report.max_cayley_defect < 1e-10);
        assert!(report.max_secular_residual < 1e-8, "{report:?}");
    }
}
