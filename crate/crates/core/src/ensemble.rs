//! Seeded ensembles over quasimomentum, drive phase and initial spin, reduced to
//! diffusion curves `D(t) = Δ²(t)/t`.
//!
//! Members are evaluated in parallel but reduced in member-index order with
//! pairwise summation, so a curve depends on `(params, spec)` only and not on the
//! number of worker threads.

use std::f64::consts::TAU;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::evolve::{default_record_times, evolve, init_state, DriveContext, InitialKind, SpinAngles, Trajectory};
use crate::model::ModelParams;
use crate::rng::stream;
use crate::summation::{mean_and_stderr, pairwise_sum};
use crate::{Error, MemberFailure, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSpec {
    pub n_samples: usize,
    pub master_seed: u64,
    pub init_kind: InitialKind,
    /// Recording times; `None` uses the geometric ladder ending at the final time.
    #[serde(default)]
    pub record_times: Option<Vec<u64>>,
    /// Final time; `None` uses `N²/4`.
    #[serde(default)]
    pub t_final: Option<u64>,
}

impl EnsembleSpec {
    pub fn new(n_samples: usize, master_seed: u64, init_kind: InitialKind) -> Self {
        EnsembleSpec { n_samples, master_seed, init_kind, record_times: None, t_final: None }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_samples < 2 {
            return Err(Error::InvalidParams(format!(
                "an ensemble needs at least 2 samples, got {}",
                self.n_samples
            )));
        }
        Ok(())
    }

    /// Final evolution time for truncation `N`.
    pub fn final_time(&self, n_trunc: usize) -> u64 {
        self.t_final.unwrap_or_else(|| default_final_time(n_trunc))
    }

    pub fn times(&self, n_trunc: usize) -> Vec<u64> {
        match &self.record_times {
            Some(t) => {
                let mut t = t.clone();
                t.sort_unstable();
                t.dedup();
                t
            }
            None => default_record_times(self.final_time(n_trunc)),
        }
    }
}

/// `t = N²/4`, i.e. a fixed scaling argument `t/N² = 1/4`.
pub fn default_final_time(n_trunc: usize) -> u64 {
    (n_trunc as u64 * n_trunc as u64) / 4
}

/// Random inputs of one ensemble member.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemberDraw {
    pub q: f64,
    pub alpha: f64,
    pub spin: SpinAngles,
}

fn bloch_angles<R: Rng>(rng: &mut R) -> (f64, f64) {
    let phi = rng.gen::<f64>() * TAU;
    let cos_theta = 2.0 * rng.gen::<f64>() - 1.0;
    (phi, cos_theta.clamp(-1.0, 1.0).acos())
}

/// Deterministic draw for member `index`: `q ~ U[0,1)`, `α ~ U[0,2π)` and spin
/// angles uniform on the Bloch sphere (one pair per site for gaussian states).
pub fn sample_member(master_seed: u64, index: usize, init_kind: InitialKind, n_trunc: usize) -> MemberDraw {
    let mut rng = stream(master_seed, index as u64);
    let q = rng.gen::<f64>();
    let alpha = rng.gen::<f64>() * TAU;
    let spin = match init_kind {
        InitialKind::Delta => {
            let (phi, theta) = bloch_angles(&mut rng);
            SpinAngles::Global { phi, theta }
        }
        InitialKind::Gaussian { .. } => {
            SpinAngles::PerSite((0..2 * n_trunc).map(|_| bloch_angles(&mut rng)).collect())
        }
    };
    MemberDraw { q, alpha, spin }
}

/// Runs member `index` to the spec's final time.
pub fn run_member(params: &ModelParams, spec: &EnsembleSpec, index: usize) -> Result<Trajectory> {
    let n = params.n_trunc;
    let draw = sample_member(spec.master_seed, index, spec.init_kind, n);
    let ctx = DriveContext::new(params.clone(), draw.q, draw.alpha)?;
    let mut state = init_state(spec.init_kind, &draw.spin, n)?;
    let times = spec.times(n);
    let t_max = times.last().copied().unwrap_or(0).max(spec.final_time(n));
    evolve(&mut state, &ctx, t_max, &times, false)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiffusionCurve {
    pub params: ModelParams,
    pub init_kind: InitialKind,
    pub times: Vec<u64>,
    /// Ensemble mean of `Δ²(t)/t`.
    pub d_mean: Vec<f64>,
    pub d_stderr: Vec<f64>,
    /// Ensemble mean of `h_e² Δ²(t)`.
    pub e_mean: Vec<f64>,
    pub n_samples: usize,
    pub master_seed: u64,
    /// Members whose edge weight exceeded the truncation guard.
    pub truncation_flagged: usize,
    pub max_edge_weight: f64,
}

impl DiffusionCurve {
    /// `(t, D, σ_D)` at the last recorded time.
    pub fn final_point(&self) -> Option<(u64, f64, f64)> {
        let i = self.times.len().checked_sub(1)?;
        Some((self.times[i], self.d_mean[i], self.d_stderr[i]))
    }

    /// Inverse Planck constant `h_e⁻¹`.
    pub fn u(&self) -> f64 {
        1.0 / self.params.h_e
    }
}

/// Reduces member trajectories (in index order) to a curve.
pub fn reduce(params: &ModelParams, spec: &EnsembleSpec, members: &[Trajectory]) -> DiffusionCurve {
    let times = members.first().map(|t| t.times.clone()).unwrap_or_default();
    let h2 = params.h_e * params.h_e;
    let mut curve = DiffusionCurve {
        params: params.clone(),
        init_kind: spec.init_kind,
        times: times.clone(),
        d_mean: Vec::with_capacity(times.len()),
        d_stderr: Vec::with_capacity(times.len()),
        e_mean: Vec::with_capacity(times.len()),
        n_samples: members.len(),
        master_seed: spec.master_seed,
        truncation_flagged: members.iter().filter(|m| m.truncation_flagged()).count(),
        max_edge_weight: members.iter().map(|m| m.max_edge_weight).fold(0.0, f64::max),
    };
    for (k, &t) in times.iter().enumerate() {
        let spread: Vec<f64> = members.iter().map(|m| m.delta_sq[k]).collect();
        let rate: Vec<f64> = spread.iter().map(|d| d / t as f64).collect();
        let (d, se) = mean_and_stderr(&rate);
        curve.d_mean.push(d);
        curve.d_stderr.push(se);
        curve.e_mean.push(h2 * pairwise_sum(&spread) / spread.len() as f64);
    }
    curve
}

/// Runs `spec.n_samples` members on `pool` and reduces them.
pub fn run_ensemble(params: &ModelParams, spec: &EnsembleSpec, pool: &rayon::ThreadPool) -> Result<DiffusionCurve> {
    params.validate()?;
    spec.validate()?;
    let results: Vec<Result<Trajectory>> =
        pool.install(|| (0..spec.n_samples).into_par_iter().map(|i| run_member(params, spec, i)).collect());
    let mut members = Vec::with_capacity(results.len());
    let mut failures = Vec::new();
    for (index, r) in results.into_iter().enumerate() {
        match r {
            Ok(t) => members.push(t),
            Err(e) => failures.push(MemberFailure { index, reason: e.to_string() }),
        }
    }
    if !failures.is_empty() {
        return Err(Error::EnsembleFailed(failures));
    }
    Ok(reduce(params, spec, &members))
}

/// Thread pool with exactly `workers` threads (at least one).
pub fn worker_pool(workers: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::InvalidParams(format!("cannot build worker pool: {e}")))
}

/// Identifies one sweep point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurveKey {
    pub u: f64,
    pub n_trunc: usize,
}

/// Storage for completed curves, used to resume interrupted sweeps.
pub trait CurveStore: Sync {
    fn load(&self, key: &CurveKey, spec: &EnsembleSpec, params: &ModelParams) -> Option<DiffusionCurve>;
    fn save(&self, key: &CurveKey, spec: &EnsembleSpec, curve: &DiffusionCurve) -> Result<()>;
}

#[derive(Debug)]
pub struct SweepOutcome {
    pub key: CurveKey,
    pub result: Result<DiffusionCurve>,
    /// True when the curve came from the store instead of a fresh run.
    pub resumed: bool,
}

/// One curve per `(u, N)` pair, ordered by `N` then `u`. Failures are reported per
/// pair; the sweep itself never aborts.
pub fn sweep(
    template: &ModelParams,
    u_grid: &[f64],
    sizes: &[usize],
    spec: &EnsembleSpec,
    pool: &rayon::ThreadPool,
    store: Option<&dyn CurveStore>,
) -> Vec<SweepOutcome> {
    let mut out = Vec::with_capacity(u_grid.len() * sizes.len());
    for &n_trunc in sizes {
        for &u in u_grid {
            let key = CurveKey { u, n_trunc };
            let params = ModelParams { h_e: 1.0 / u, n_trunc, ..template.clone() };
            if let Some(curve) = store.and_then(|s| s.load(&key, spec, &params)) {
                out.push(SweepOutcome { key, result: Ok(curve), resumed: true });
                continue;
            }
            let result = if u > 0.0 && u.is_finite() {
                run_ensemble(&params, spec, pool)
            } else {
                Err(Error::InvalidParams(format!("h_e^-1 must be positive, got {u}")))
            };
            let result = match (result, store) {
                (Ok(curve), Some(s)) => s.save(&key, spec, &curve).map(|_| curve),
                (r, _) => r,
            };
            out.push(SweepOutcome { key, result, resumed: false });
        }
    }
    out
}
