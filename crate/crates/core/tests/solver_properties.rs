mod common;

use mixemu::pde::{build_mesh, solve_on, DispersionParams, FlowParams, SimulationConfig};
use mixemu::qoi::normalized_qois;

#[test]
fn reaction_free_diffusion_converges_to_cosine_series() {
    let e = common::cosine_series_rel_l2(1e-2, 41);
    assert!(e < 0.01, "relative L2 error {e:e}");
    // At d_m = 1e-3 the front is thinner than the 41-node spacing.
    let coarse = common::cosine_series_rel_l2(1e-3, 41);
    let fine = common::cosine_series_rel_l2(1e-3, 81);
    assert!(fine < 0.01 && fine < 0.5 * coarse, "41: {coarse:e}, 81: {fine:e}");
}

#[test]
fn strong_diffusion_decays_like_the_first_mode() {
    let cfg = common::diffusion_config(0.1, 200);
    let mesh = build_mesh::<f64>(cfg.mesh_n_side).unwrap();
    let traj = solve_on(&mesh, &cfg, 200).unwrap();
    let a = &traj.last().conc[0];
    let (lo, hi) = a.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &v| (l.min(v), h.max(v)));
    let exact = common::step_series(0.0, 0.1, 1.0, 2000) - common::step_series(1.0, 0.1, 1.0, 2000);
    assert!(((hi - lo) - exact).abs() < 0.01 * exact, "spread {} vs {exact}", hi - lo);

    // Horizon 10, where the series predicts a spread far below 1e-3.
    let mut long = cfg;
    long.dt = 0.05;
    let traj = solve_on(&mesh, &long, 200).unwrap();
    let a = &traj.last().conc[0];
    let (lo, hi) = a.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &v| (l.min(v), h.max(v)));
    assert!(hi - lo < 1e-3, "spread {}", hi - lo);
}

#[test]
fn symmetric_reacting_run_mirrors_species() {
    let mut cfg: SimulationConfig<f64> = SimulationConfig::desk_scale(FlowParams { v0: 0.0, kappa_f_l: 1, t_osc: 1e-4 }, DispersionParams::isotropic(1e-2, 0.0));
    cfg.n_steps = 40;
    let mesh = build_mesh::<f64>(cfg.mesh_n_side).unwrap();
    let traj = solve_on(&mesh, &cfg, 5).unwrap();
    for f in &traj.frames {
        for k in 0..mesh.node_count() {
            assert!((f.conc[0][k] - f.conc[1][mesh.mirror_x(k)]).abs() < 1e-8);
        }
    }
}

#[test]
fn reaction_free_variance_is_non_increasing() {
    let cfg = common::diffusion_config(1e-3, 60);
    let traj = mixemu::pde::solve(&cfg, 1).unwrap();
    let q = normalized_qois(&traj, 0).unwrap();
    assert_eq!(q.degree_of_mixing[0][0], 1.0);
    for w in q.degree_of_mixing[0].windows(2) {
        assert!(w[1] <= w[0] + 1e-10);
    }
}
