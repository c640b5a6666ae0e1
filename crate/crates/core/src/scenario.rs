//! Ready-made problem instances used by the tests, the acceptance suite and
//! the command-line defaults.

use alloc::sync::Arc;

use crate::expr::FieldExpr;
use crate::grid::{Grid, ScalarField, VectorField};
use crate::model::{DefaultLogisticFamily, LogPotential, ModelSpec, Nonlinearities};
use crate::control::{AdmissibleBox, CostSpec, Problem};
use crate::state::{solve_state, Control, SolverSettings, TimeGrid};
use crate::Result;

fn gauss(amplitude: f64, x0: f64, y0: f64, width: f64) -> FieldExpr {
    FieldExpr::Gaussian { amplitude, x0, y0, width }
}

fn plus(c: f64, e: FieldExpr) -> FieldExpr {
    FieldExpr::Sum(alloc::vec![FieldExpr::Constant(c), e])
}

/// Unit square, unit horizon, logistic family, a Gaussian tumour seed in a
/// lactate bath and a localized body force.
pub fn default_spec(grid: Grid) -> ModelSpec {
    spec_with_family(grid, Arc::new(DefaultLogisticFamily::default()))
}

pub fn spec_with_family(grid: Grid, nl: Arc<dyn Nonlinearities>) -> ModelSpec {
    let bounds = nl.declared_bounds();
    let fx = gauss(2.0, 0.45, 0.5, 0.2).sample(grid);
    let fy = gauss(1.0, 0.5, 0.55, 0.2).sample(grid);
    ModelSpec {
        grid,
        n_cap: 1.0,
        nl,
        a_mu: 0.5,
        a_lam: 0.25,
        potential: LogPotential { c1: 0.5, c2: 0.2 },
        f: VectorField::from_components(fx, fy).expect("same grid"),
        iota: ScalarField::constant(grid, 0.2),
        sigma_gamma: ScalarField::constant(grid, 0.5),
        gamma_weight: ScalarField::constant(grid, 1.0),
        phi0: gauss(0.6, 0.5, 0.5, 0.15).sample(grid),
        sigma0: plus(0.5, gauss(0.3, 0.5, 0.5, 0.2)).sample(grid),
        u0: VectorField::zeros(grid),
        z0: plus(0.35, gauss(0.1, 0.5, 0.5, 0.2)).sample(grid),
        m0: 1.0,
        t_final: 1.0,
        bounds,
    }
}

/// Smooth, strictly interior control used around which derivatives are checked.
pub fn default_control(grid: Grid, time: &TimeGrid) -> Control {
    let pi = core::f64::consts::PI;
    let (lx, ly, t_end) = (grid.lx(), grid.ly(), time.t_final());
    Control::from_fn(grid, time, |x, y, t| {
        let s = t / t_end;
        let c1 = 0.3 + 0.15 * libm::cos(pi * x / lx) * libm::cos(pi * y / ly) * (1.0 - 0.5 * s);
        let c2 = 0.5 + 0.2 * libm::cos(pi * x / lx) * s;
        (c1, c2)
    })
}

/// Spatially homogeneous data for which the PDE system collapses to ODEs:
/// no lactate consumption, lactate at its boundary value, no force, constant
/// initial data.
pub fn homogeneous_spec(grid: Grid) -> ModelSpec {
    let fam = DefaultLogisticFamily { k1_star: 0.0, ..DefaultLogisticFamily::default() };
    let mut spec = spec_with_family(grid, Arc::new(fam));
    spec.f = VectorField::zeros(grid);
    spec.phi0 = ScalarField::constant(grid, 0.2);
    spec.sigma0 = ScalarField::constant(grid, 0.5);
    spec.sigma_gamma = ScalarField::constant(grid, 0.5);
    spec.z0 = ScalarField::constant(grid, 0.3);
    spec
}

/// Tracking cost around the default scenario: every weight active, mild
/// Tikhonov term, Gaussian tumour targets and flat lactate and damage targets.
pub fn default_cost(grid: Grid, time: &TimeGrid) -> CostSpec {
    let phi_target = gauss(0.3, 0.5, 0.5, 0.2).sample(grid);
    let sigma_target = ScalarField::constant(grid, 0.6);
    CostSpec {
        alpha: [1.0, 1.0, 0.1, 1.0, 1.0, 0.1, 1.0, 0.1, 1e-3],
        phi_q: alloc::vec![phi_target.clone(); time.levels()],
        sigma_q: alloc::vec![sigma_target.clone(); time.levels()],
        z_q: alloc::vec![ScalarField::constant(grid, 0.4); time.levels()],
        phi_omega: phi_target,
        sigma_omega: sigma_target,
    }
}

/// `[0, 1]` for both drugs with a slack ball.
pub fn default_box(grid: Grid, time: &TimeGrid) -> AdmissibleBox {
    AdmissibleBox::constant(grid, time, (0.0, 1.0), (0.0, 1.0), 100.0).expect("valid constant box")
}

/// Drug levels used to generate the synthetic targets; they lie above the
/// default box, so the constrained optimum sits on its upper face.
pub const SYNTHETIC_TRUTH: (f64, f64) = (1.3, 1.3);

/// Tracking problem whose targets are the trajectory driven by
/// [`SYNTHETIC_TRUTH`].
pub fn synthetic_inverse(grid: Grid, steps: usize, settings: SolverSettings) -> Result<Problem> {
    let spec = default_spec(grid);
    let time = TimeGrid::new(spec.t_final, steps)?;
    let truth = Control::constant(grid, &time, SYNTHETIC_TRUTH.0, SYNTHETIC_TRUTH.1);
    let traj = solve_state(&spec, &truth, steps, &settings)?;
    let kt = time.steps();
    let cost = CostSpec {
        alpha: [1.0, 1.0, 0.0, 1.0, 1.0, 0.0, 1.0, 0.0, 1e-4],
        phi_omega: traj.phi[kt].clone(),
        sigma_omega: traj.sigma[kt].clone(),
        phi_q: traj.phi,
        sigma_q: traj.sigma,
        z_q: traj.z,
    };
    Ok(Problem { spec, cost, steps, settings })
}
