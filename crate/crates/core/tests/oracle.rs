mod common;

use common::{delta_sq_compensated, max_abs_diff, DenseModel};
use qkr::anderson::{static_floquet_matrix, StaticSetup};
use qkr::evolve::{delta_sq, evolve, init_state, DriveContext, InitialKind, Propagator, SpinAngles};
use qkr::model::ModelParams;

fn setup(h_e: f64, n: usize, q: f64, alpha: f64) -> (DriveContext, DenseModel) {
    let p = ModelParams::new(h_e, n).unwrap();
    let dense = DenseModel { n_trunc: n, h_e, mu: p.mu, omega: p.omega, dz: p.dz_factor, q, alpha };
    (DriveContext::new(p, q, alpha).unwrap(), dense)
}

#[test]
fn single_step_matches_dense_n4() {
    let (ctx, dense) = setup(0.4695, 4, 0.37, 2.2);
    let mut state = init_state(InitialKind::Delta, &SpinAngles::Global { phi: 0.4, theta: 1.1 }, 4).unwrap();
    let v0 = DenseModel::to_vec(&state);
    Propagator::new(ctx).unwrap().apply(&mut state, 1);
    let diff = max_abs_diff(&DenseModel::to_vec(&state), &(dense.period(1) * v0));
    assert!(diff < 1e-12, "{diff:e}");
}

#[test]
fn sixty_four_steps_match_dense_n16() {
    for (h_e, kind) in [(0.4695, InitialKind::Delta), (1.3, InitialKind::GAUSSIAN_DEFAULT), (0.25, InitialKind::Delta)] {
        let (ctx, dense) = setup(h_e, 16, 0.81, 5.0);
        let mut state = init_state(kind, &SpinAngles::Global { phi: 2.0, theta: 0.3 }, 16).unwrap();
        let v0 = DenseModel::to_vec(&state);
        let traj = evolve(&mut state, &ctx, 64, &[64], false).unwrap();
        let reference = dense.evolve(v0, 64);
        let diff = max_abs_diff(&DenseModel::to_vec(&state), &reference);
        assert!(diff < 1e-10, "h_e={h_e}: {diff:e}");
        let exact = delta_sq_compensated(&reference, 16);
        assert!((traj.delta_sq[0] - exact).abs() <= 1e-10 * exact.max(1.0), "{} vs {exact}", traj.delta_sq[0]);
    }
}

#[test]
fn delta_sq_matches_compensated_sum() {
    let (ctx, _) = setup(0.4695, 64, 0.2, 0.9);
    let mut state = init_state(InitialKind::GAUSSIAN_DEFAULT, &SpinAngles::Global { phi: 0.1, theta: 2.0 }, 64).unwrap();
    evolve(&mut state, &ctx, 300, &[300], false).unwrap();
    let exact = delta_sq_compensated(&DenseModel::to_vec(&state), 64);
    assert!((delta_sq(&state) - exact).abs() <= 1e-13 * exact);
}

#[test]
fn static_floquet_matrix_matches_dense_period() {
    for n in [4, 8] {
        let params = ModelParams::new(0.77, n).unwrap();
        let f = static_floquet_matrix(&StaticSetup::new(params.clone(), 0.3, 1.9).unwrap()).unwrap();
        // ω = 0 freezes the second angle at α.
        let dense = DenseModel { n_trunc: n, h_e: 0.77, mu: params.mu, omega: 0.0, dz: params.dz_factor, q: 0.3, alpha: 1.9 };
        let diff = (f - dense.period(7)).map(|z| z.norm()).max();
        assert!(diff < 1e-12, "N={n}: {diff:e}");
    }
}

#[test]
fn norm_is_conserved_over_n2_over_4_steps() {
    let (ctx, _) = setup(1.0 / 2.1294, 128, 0.55, 4.4);
    let mut state = init_state(InitialKind::Delta, &SpinAngles::Global { phi: 1.0, theta: 2.5 }, 128).unwrap();
    let mut prop = Propagator::new(ctx).unwrap();
    let mut worst = 0.0f64;
    for s in 1..=4096 {
        prop.apply(&mut state, s);
        worst = worst.max((state.norm_sqr() - 1.0).abs());
    }
    assert!(worst < 1e-10, "{worst:e}");
}
