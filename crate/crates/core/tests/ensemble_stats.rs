use std::f64::consts::TAU;

use qkr::ensemble::{run_ensemble, sample_member, sweep, worker_pool, EnsembleSpec};
use qkr::evolve::{InitialKind, SpinAngles};
use qkr::model::ModelParams;

/// Kolmogorov–Smirnov distance of `xs` from U[0, 1).
fn ks_uniform(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    xs.iter()
        .enumerate()
        .map(|(i, &x)| (x - i as f64 / n).max((i + 1) as f64 / n - x))
        .fold(0.0, f64::max)
}

#[test]
fn member_draws_are_uniform() {
    let n = 100_000;
    let draws: Vec<_> = (0..n).map(|i| sample_member(77, i, InitialKind::Delta, 8)).collect();
    // 1% critical value of the KS statistic
    let critical = 1.628 / (n as f64).sqrt();
    let q = ks_uniform(draws.iter().map(|d| d.q).collect());
    let alpha = ks_uniform(draws.iter().map(|d| d.alpha / TAU).collect());
    let (phi, cos_theta): (Vec<f64>, Vec<f64>) = draws
        .iter()
        .map(|d| match d.spin {
            SpinAngles::Global { phi, theta } => (phi / TAU, 0.5 * (1.0 + theta.cos())),
            _ => unreachable!(),
        })
        .unzip();
    for (name, ks) in [("q", q), ("alpha", alpha), ("phi", ks_uniform(phi)), ("cos theta", ks_uniform(cos_theta))] {
        assert!(ks < critical, "{name}: KS {ks} >= {critical}");
    }
}

#[test]
fn curves_do_not_depend_on_worker_count() {
    let params = ModelParams::new(0.47, 32).unwrap();
    let spec = EnsembleSpec::new(24, 5, InitialKind::GAUSSIAN_DEFAULT);
    let reference = run_ensemble(&params, &spec, &worker_pool(1).unwrap()).unwrap();
    for workers in [3, 16] {
        let curve = run_ensemble(&params, &spec, &worker_pool(workers).unwrap()).unwrap();
        assert_eq!(serde_json::to_string(&curve).unwrap(), serde_json::to_string(&reference).unwrap());
    }
}

#[test]
fn sweep_reports_failures_per_point() {
    let template = ModelParams::new(1.0, 8).unwrap();
    let spec = EnsembleSpec::new(2, 1, InitialKind::Delta);
    let out = sweep(&template, &[2.0, -1.0], &[8, 16], &spec, &worker_pool(2).unwrap(), None);
    assert_eq!(out.len(), 4);
    assert_eq!(out.iter().map(|o| (o.key.n_trunc, o.result.is_ok())).collect::<Vec<_>>(), [(8, true), (8, false), (16, true), (16, false)]);
}
