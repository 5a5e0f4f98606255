//! Split-step spectral Floquet evolution of a truncated momentum-space spinor.
//!
//! One period applies the kinetic phases in momentum space, transforms both spin
//! components to the `2N`-point angle grid, applies the 2×2 kick at every grid
//! point and transforms back. Site `j` of a component holds momentum `n = j - N`.

use std::f64::consts::TAU;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::model::{free_phase, kick_angle, kick_from_d, DVector, ModelParams, Potential, SMALL_D};
use crate::{Error, Result};

/// Per-step norm drift beyond which evolution aborts.
pub const NORM_ABORT: f64 = 1e-8;

/// Edge weight above which a run is flagged as truncation-contaminated.
pub const EDGE_WEIGHT_LIMIT: f64 = 1e-6;

/// Fraction of sites counted as the truncation edge.
pub const EDGE_FRACTION: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpinorState {
    n_trunc: usize,
    /// `[up, down]`, each of length `2N`.
    amps: [Vec<Complex64>; 2],
}

/// Initial momentum profile.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InitialKind {
    Delta,
    Gaussian { n0: f64, sigma: f64 },
}

impl InitialKind {
    /// Wavepacket centred at zero with unit width.
    pub const GAUSSIAN_DEFAULT: InitialKind = InitialKind::Gaussian { n0: 0.0, sigma: 1.0 };
}

/// Bloch-sphere angles `(φ, θ)` of the initial spinor(s).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum SpinAngles {
    Global { phi: f64, theta: f64 },
    /// One pair per momentum site `j = 0..2N`.
    PerSite(Vec<(f64, f64)>),
}

impl SpinAngles {
    fn at(&self, site: usize) -> (f64, f64) {
        match self {
            SpinAngles::Global { phi, theta } => (*phi, *theta),
            SpinAngles::PerSite(v) => v[site],
        }
    }
}

/// `(e^{-iφ/2} cos(θ/2), e^{iφ/2} sin(θ/2))`.
pub fn bloch_spinor(phi: f64, theta: f64) -> [Complex64; 2] {
    let (s, c) = (0.5 * theta).sin_cos();
    [Complex64::from_polar(c, -0.5 * phi), Complex64::from_polar(s, 0.5 * phi)]
}

impl SpinorState {
    pub fn zeros(n_trunc: usize) -> Self {
        let z = vec![Complex64::new(0.0, 0.0); 2 * n_trunc];
        SpinorState { n_trunc, amps: [z.clone(), z] }
    }

    pub fn from_components(n_trunc: usize, up: Vec<Complex64>, down: Vec<Complex64>) -> Result<Self> {
        if up.len() != 2 * n_trunc || down.len() != 2 * n_trunc {
            return Err(Error::InvalidState(format!(
                "components must have length {}, got {} and {}",
                2 * n_trunc,
                up.len(),
                down.len()
            )));
        }
        Ok(SpinorState { n_trunc, amps: [up, down] })
    }

    pub fn n_trunc(&self) -> usize {
        self.n_trunc
    }

    pub fn sites(&self) -> usize {
        2 * self.n_trunc
    }

    /// Momentum index of site `j`.
    pub fn momentum(&self, site: usize) -> i64 {
        site as i64 - self.n_trunc as i64
    }

    /// Site holding momentum `n`, if inside the truncation.
    pub fn site(&self, n: i64) -> Option<usize> {
        let j = n + self.n_trunc as i64;
        (0..self.sites() as i64).contains(&j).then_some(j as usize)
    }

    pub fn component(&self, spin: usize) -> &[Complex64] {
        &self.amps[spin]
    }

    pub fn component_mut(&mut self, spin: usize) -> &mut [Complex64] {
        &mut self.amps[spin]
    }

    pub fn amplitude(&self, n: i64, spin: usize) -> Complex64 {
        self.site(n).map_or(Complex64::new(0.0, 0.0), |j| self.amps[spin][j])
    }

    /// `Σ |ψ|²`.
    pub fn norm_sqr(&self) -> f64 {
        self.amps.iter().flatten().map(|z| z.norm_sqr()).sum()
    }

    pub fn normalize(&mut self) -> Result<()> {
        let n = self.norm_sqr().sqrt();
        if !(n > 0.0) || !n.is_finite() {
            return Err(Error::InvalidState("cannot normalize a zero state".into()));
        }
        let inv = 1.0 / n;
        self.amps.iter_mut().flatten().for_each(|z| *z *= inv);
        Ok(())
    }

    /// Probability weight on the outermost `EDGE_FRACTION` of sites (both ends together).
    pub fn edge_weight(&self) -> f64 {
        let m = self.sites();
        let band = ((m as f64 * EDGE_FRACTION * 0.5).ceil() as usize).max(1);
        self.amps
            .iter()
            .flat_map(|c| c[..band].iter().chain(&c[m - band..]))
            .map(|z| z.norm_sqr())
            .sum()
    }

    /// Flattened `[up..., down...]` copy.
    pub fn to_vec(&self) -> Vec<Complex64> {
        self.amps.iter().flatten().copied().collect()
    }

    pub fn max_abs_diff(&self, other: &SpinorState) -> f64 {
        self.amps
            .iter()
            .flatten()
            .zip(other.amps.iter().flatten())
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }
}

/// Builds a normalized initial state.
pub fn init_state(kind: InitialKind, spin: &SpinAngles, n_trunc: usize) -> Result<SpinorState> {
    let mut state = SpinorState::zeros(n_trunc);
    if let SpinAngles::PerSite(v) = spin {
        if v.len() != state.sites() {
            return Err(Error::InvalidState(format!(
                "expected {} per-site spin angles, got {}",
                state.sites(),
                v.len()
            )));
        }
    }
    match kind {
        InitialKind::Delta => {
            let j = state.site(0).expect("n = 0 is always inside the truncation");
            let (phi, theta) = spin.at(j);
            let s = bloch_spinor(phi, theta);
            state.amps[0][j] = s[0];
            state.amps[1][j] = s[1];
        }
        InitialKind::Gaussian { n0, sigma } => {
            if !(sigma > 0.0) || !sigma.is_finite() || !n0.is_finite() {
                return Err(Error::InvalidState(format!("gaussian width must be positive, got {sigma}")));
            }
            let tail = gaussian_tail_mass(n0, sigma, n_trunc);
            if tail > 1e-12 {
                return Err(Error::InvalidState(format!(
                    "N = {n_trunc} too small for gaussian (n0 = {n0}, sigma = {sigma}): tail mass {tail:.3e}"
                )));
            }
            for j in 0..state.sites() {
                let n = state.momentum(j) as f64;
                let env = (-(n - n0).powi(2) / (2.0 * sigma * sigma)).exp();
                let (phi, theta) = spin.at(j);
                let s = bloch_spinor(phi, theta);
                state.amps[0][j] = s[0] * env;
                state.amps[1][j] = s[1] * env;
            }
            state.normalize()?;
        }
    }
    Ok(state)
}

/// Probability mass of the discrete gaussian envelope that falls outside `[-N, N-1]`.
fn gaussian_tail_mass(n0: f64, sigma: f64, n_trunc: usize) -> f64 {
    let weight = |n: i64| (-((n as f64 - n0) / sigma).powi(2)).exp();
    let reach = (n0.abs() + 40.0 * sigma).ceil() as i64 + n_trunc as i64;
    let lo = -(n_trunc as i64);
    let hi = n_trunc as i64 - 1;
    let (mut inside, mut outside) = (0.0, 0.0);
    for n in -reach..=reach {
        if (lo..=hi).contains(&n) {
            inside += weight(n);
        } else {
            outside += weight(n);
        }
    }
    outside / (inside + outside)
}

/// Drive realisation shared by all steps of one trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriveContext {
    /// Bloch quasimomentum in `[0, 1)`.
    pub q: f64,
    /// Phase offset of the second angle, `[0, 2π)`.
    pub alpha: f64,
    pub params: ModelParams,
}

impl DriveContext {
    pub fn new(params: ModelParams, q: f64, alpha: f64) -> Result<Self> {
        params.validate()?;
        if !(0.0..1.0).contains(&q) {
            return Err(Error::InvalidParams(format!("q must lie in [0, 1), got {q}")));
        }
        if !(0.0..TAU).contains(&alpha) {
            return Err(Error::InvalidParams(format!("alpha must lie in [0, 2π), got {alpha}")));
        }
        Ok(DriveContext { q, alpha, params })
    }

    /// Second-angle phase of the kick at step `s`: `ω s + α`.
    pub fn kick_phase(&self, step: u64) -> f64 {
        self.params.omega * step as f64 + self.alpha
    }
}

/// Reusable split-step propagator for one drive context.
pub struct Propagator {
    ctx: DriveContext,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    scratch: Vec<Complex64>,
    phases: Vec<Complex64>,
    sin1: Vec<f64>,
    cos1: Vec<f64>,
    scale: f64,
}

impl Propagator {
    pub fn new(ctx: DriveContext) -> Result<Self> {
        ctx.params.validate()?;
        let m = ctx.params.sites();
        let n = ctx.params.n_trunc as i64;
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(m);
        let inverse = planner.plan_fft_inverse(m);
        let scratch_len = forward.get_inplace_scratch_len().max(inverse.get_inplace_scratch_len());
        let phases = (0..m as i64).map(|j| free_phase(j - n, ctx.q, ctx.params.h_e)).collect();
        let (sin1, cos1) = (0..m).map(|j| (TAU * j as f64 / m as f64).sin_cos()).unzip();
        Ok(Propagator {
            ctx,
            forward,
            inverse,
            scratch: vec![Complex64::new(0.0, 0.0); scratch_len],
            phases,
            sin1,
            cos1,
            scale: 1.0 / (m as f64).sqrt(),
        })
    }

    pub fn context(&self) -> &DriveContext {
        &self.ctx
    }

    /// One Floquet period with the kick phase of step `s`. Does not check the norm.
    pub fn apply(&mut self, state: &mut SpinorState, step: u64) {
        let [up, down] = &mut state.amps;
        for (z, p) in up.iter_mut().zip(&self.phases) {
            *z *= p;
        }
        for (z, p) in down.iter_mut().zip(&self.phases) {
            *z *= p;
        }
        if self.ctx.params.potential == Potential::Free {
            return;
        }

        // momentum -> angle: ψ(θ_k) = Σ_j ψ_j e^{+i j θ_k}. The e^{-iNθ_k} factor from
        // n = j - N multiplies in and out again around the diagonal kick, so it is dropped.
        self.inverse.process_with_scratch(up, &mut self.scratch);
        self.inverse.process_with_scratch(down, &mut self.scratch);

        let p = &self.ctx.params;
        let (sin2, cos2) = self.ctx.kick_phase(step).sin_cos();
        // both unitary 1/sqrt(2N) factors applied together
        let s2 = self.scale * self.scale;
        let (mu, dz, h_e) = (p.mu, p.dz_factor, p.h_e);
        for (k, (a, b)) in up.iter_mut().zip(down.iter_mut()).enumerate() {
            let d = DVector::from_trig(self.sin1[k], self.cos1[k], sin2, cos2, mu, dz);
            if d.norm < SMALL_D {
                let [x, y] = kick_from_d(&d, h_e).apply([*a, *b]);
                *a = x * s2;
                *b = y * s2;
                continue;
            }
            // cos χ ψ - i sin χ (d̂·σ) ψ, written out on real parts
            let (sin_chi, cos_chi) = kick_angle(d.norm, h_e).sin_cos();
            let c = cos_chi * s2;
            let f = sin_chi * s2 / d.norm;
            let (x1, y1, z) = (d.d1 * f, d.d2 * f, d.d3 * f);
            let (ua, ub) = (*a, *b);
            // (d̂·σ ψ) scaled: [z a + (x - i y) b, (x + i y) a - z b]
            let ta = Complex64::new(z * ua.re + x1 * ub.re + y1 * ub.im, z * ua.im + x1 * ub.im - y1 * ub.re);
            let tb = Complex64::new(x1 * ua.re - y1 * ua.im - z * ub.re, x1 * ua.im + y1 * ua.re - z * ub.im);
            // -i t = (t.im, -t.re)
            *a = Complex64::new(c * ua.re + ta.im, c * ua.im - ta.re);
            *b = Complex64::new(c * ub.re + tb.im, c * ub.im - tb.re);
        }

        self.forward.process_with_scratch(up, &mut self.scratch);
        self.forward.process_with_scratch(down, &mut self.scratch);
    }

    /// One Floquet period followed by a norm check against `reference`.
    pub fn step_checked(&mut self, state: &mut SpinorState, step: u64, reference: f64) -> Result<()> {
        self.apply(state, step);
        let drift = (state.norm_sqr() - reference).abs();
        if drift > NORM_ABORT || !drift.is_finite() {
            return Err(Error::NormDrift { step, drift });
        }
        Ok(())
    }
}

/// Applies a single Floquet period (kick phase `ω s + α`) to `state`.
pub fn floquet_step(state: &mut SpinorState, ctx: &DriveContext, step: u64) -> Result<()> {
    if state.n_trunc != ctx.params.n_trunc {
        return Err(Error::InvalidState("state truncation does not match parameters".into()));
    }
    let mut prop = Propagator::new(ctx.clone())?;
    let norm = state.norm_sqr();
    prop.step_checked(state, step, norm)
}

/// `½ Σ n² |ψ_n^s|²`.
pub fn delta_sq(state: &SpinorState) -> f64 {
    let n0 = state.n_trunc as f64;
    let mut acc = 0.0;
    for j in 0..state.sites() {
        let n = j as f64 - n0;
        let w = state.amps[0][j].norm_sqr() + state.amps[1][j].norm_sqr();
        acc += n * n * w;
    }
    0.5 * acc
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub times: Vec<u64>,
    pub delta_sq: Vec<f64>,
    /// Largest edge weight seen at the recorded times.
    pub max_edge_weight: f64,
    pub final_state: Option<SpinorState>,
}

impl Trajectory {
    pub fn truncation_flagged(&self) -> bool {
        self.max_edge_weight > EDGE_WEIGHT_LIMIT
    }
}

/// Powers of two below `t_final`, followed by `t_final` itself.
pub fn default_record_times(t_final: u64) -> Vec<u64> {
    let mut times: Vec<u64> = std::iter::successors(Some(1u64), |t| t.checked_mul(2))
        .take_while(|&t| t < t_final)
        .collect();
    if t_final > 0 {
        times.push(t_final);
    }
    times
}

/// Iterates the Floquet step `s = 1..=t_max`, recording `Δ²` at the requested times.
///
/// The state is evolved in place; `keep_state` stores a copy of the final state
/// in the returned trajectory.
pub fn evolve(
    state: &mut SpinorState,
    ctx: &DriveContext,
    t_max: u64,
    record: &[u64],
    keep_state: bool,
) -> Result<Trajectory> {
    let mut times = record.to_vec();
    times.sort_unstable();
    times.dedup();
    if let Some(&t) = times.iter().find(|&&t| t == 0 || t > t_max) {
        return Err(Error::InvalidParams(format!("record time {t} outside [1, {t_max}]")));
    }
    if state.n_trunc != ctx.params.n_trunc {
        return Err(Error::InvalidState("state truncation does not match parameters".into()));
    }
    let mut traj = Trajectory {
        times: Vec::with_capacity(times.len()),
        delta_sq: Vec::with_capacity(times.len()),
        max_edge_weight: 0.0,
        final_state: None,
    };
    if t_max > 0 {
        let mut prop = Propagator::new(ctx.clone())?;
        let norm = state.norm_sqr();
        let mut next = times.iter().peekable();
        for s in 1..=t_max {
            prop.step_checked(state, s, norm)?;
            if next.peek() == Some(&&s) {
                next.next();
                traj.times.push(s);
                traj.delta_sq.push(delta_sq(state));
                traj.max_edge_weight = traj.max_edge_weight.max(state.edge_weight());
            }
        }
    }
    if keep_state {
        traj.final_state = Some(state.clone());
    }
    Ok(traj)
}
