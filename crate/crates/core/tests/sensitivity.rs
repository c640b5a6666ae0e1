use tumorctl_core::adjoint::{duality_residual, solve_adjoint};
use tumorctl_core::control::{fd_directional, smooth_direction, Problem};
use tumorctl_core::grid::Grid;
use tumorctl_core::linearized::{assemble_coefficients, solve_linearized};
use tumorctl_core::scenario::{default_control, default_cost, default_spec};
use tumorctl_core::state::{solve_state, SolverSettings, TimeGrid};

#[test]
fn duality_residual_decreases_along_three_level_ladder() {
    let settings = SolverSettings::default();
    let mut res = Vec::new();
    for (n, k) in [(8, 10), (16, 20), (32, 40)] {
        let g = Grid::new(n, n, 1.0, 1.0).unwrap();
        let spec = default_spec(g);
        let time = TimeGrid::new(spec.t_final, k).unwrap();
        let control = default_control(g, &time);
        let traj = solve_state(&spec, &control, k, &settings).unwrap();
        let coeffs = assemble_coefficients(&spec, &traj, &control).unwrap();
        let cost = default_cost(g, &time);
        let adj = solve_adjoint(&spec, &traj, &coeffs, &cost, &settings).unwrap();
        let h = smooth_direction(g, &time, 11);
        let lin = solve_linearized(&spec, &coeffs, &traj, &h, &settings).unwrap();
        res.push(duality_residual(&spec, &traj, &lin, &adj, &coeffs, &cost, &h).unwrap());
    }
    assert!(res[0] > res[1] && res[1] > res[2], "{res:?}");
    assert!(res[2] < 5e-2, "{res:?}");
}

#[test]
fn gradient_error_shrinks_with_refinement() {
    let settings = SolverSettings::default();
    let mut errs = Vec::new();
    for (n, k) in [(10, 16), (20, 32)] {
        let g = Grid::new(n, n, 1.0, 1.0).unwrap();
        let spec = default_spec(g);
        let time = TimeGrid::new(spec.t_final, k).unwrap();
        let problem = Problem { spec, cost: default_cost(g, &time), steps: k, settings };
        let control = default_control(g, &time);
        let ev = problem.gradient(&control).unwrap();
        let h = smooth_direction(g, &time, 2);
        let adj = ev.gradient.inner(&h, &time).unwrap();
        let fd = fd_directional(&problem, &control, &h, 1e-3).unwrap();
        errs.push((adj - fd).abs() / fd.abs());
    }
    assert!(errs[0] / errs[1] >= 1.5, "{errs:?}");
}
