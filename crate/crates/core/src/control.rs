//! Cost functional, reduced gradient, admissible set, projected-gradient
//! optimizer and the finite-difference oracle.

use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::adjoint::{solve_adjoint, AdjointTrajectory};
use crate::grid::{Grid, ScalarField};
use crate::linearized::assemble_coefficients;
use crate::math::cos;
use crate::model::ModelSpec;
use crate::state::{solve_state, Control, SolverSettings, StateTrajectory, TimeGrid};
use crate::{Error, Result};

/// Weights `α1..α9` (stored zero-based) and the tracking targets.
#[derive(Clone, Debug, PartialEq)]
pub struct CostSpec {
    pub alpha: [f64; 9],
    pub phi_q: Vec<ScalarField>,
    pub sigma_q: Vec<ScalarField>,
    pub z_q: Vec<ScalarField>,
    pub phi_omega: ScalarField,
    pub sigma_omega: ScalarField,
}

impl CostSpec {
    /// All weights zero, all targets zero.
    pub fn zero(grid: Grid, time: &TimeGrid) -> Self {
        let z = ScalarField::zeros(grid);
        Self {
            alpha: [0.0; 9],
            phi_q: vec![z.clone(); time.levels()],
            sigma_q: vec![z.clone(); time.levels()],
            z_q: vec![z.clone(); time.levels()],
            phi_omega: z.clone(),
            sigma_omega: z,
        }
    }

    pub fn check(&self, grid: &Grid, time: &TimeGrid) -> Result<()> {
        if self.alpha.iter().any(|a| !(a.is_finite() && *a >= 0.0)) {
            return Err(Error::InvalidParameter("cost weights must be finite and nonnegative"));
        }
        for (what, t) in [("phi_q", &self.phi_q), ("sigma_q", &self.sigma_q), ("z_q", &self.z_q)] {
            if t.len() != time.levels() {
                return Err(Error::TimeGridMismatch { expected: time.levels(), found: t.len() });
            }
            for (level, f) in t.iter().enumerate() {
                check_field(f, grid, what, level)?;
            }
        }
        check_field(&self.phi_omega, grid, "phi_omega", 0)?;
        check_field(&self.sigma_omega, grid, "sigma_omega", 0)
    }

    pub fn all_weights_zero(&self) -> bool {
        self.alpha.iter().all(|a| *a == 0.0)
    }
}

fn check_field(f: &ScalarField, grid: &Grid, what: &'static str, level: usize) -> Result<()> {
    if f.grid() != grid {
        return Err(Error::GridMismatch);
    }
    match f.values().iter().position(|v| !v.is_finite()) {
        Some(node) => Err(Error::NonFinite { what, level, node }),
        None => Ok(()),
    }
}

/// The nine addends of the cost, in order.
pub fn cost_terms(spec: &ModelSpec, traj: &StateTrajectory, control: &Control, cost: &CostSpec) -> Result<[f64; 9]> {
    let g = spec.grid;
    let time = traj.time;
    cost.check(&g, &time)?;
    control.check(&g, &time)?;
    let w = g.weights();
    let nn = g.node_count();
    let a = &cost.alpha;
    let mut t = [0.0; 9];
    let integral = |f: &dyn Fn(usize) -> f64| (0..nn).map(|k| w[k] * f(k)).sum::<f64>();
    for n in 0..time.levels() {
        let wt = time.weight(n);
        let (phi, sigma, z) = (traj.phi[n].values(), traj.sigma[n].values(), traj.z[n].values());
        let (pq, sq, zq) = (cost.phi_q[n].values(), cost.sigma_q[n].values(), cost.z_q[n].values());
        let eps = &traj.eps_u[n];
        let (c1, c2) = (control.chi1[n].values(), control.chi2[n].values());
        t[0] += wt * integral(&|k| (phi[k] - pq[k]) * (phi[k] - pq[k]));
        t[3] += wt * integral(&|k| (sigma[k] - sq[k]) * (sigma[k] - sq[k]));
        t[5] += wt * integral(&|k| {
            let e = eps.at(k);
            spec.eval_gamma(k, phi[k]).0 * e.ddot(&e)
        });
        t[6] += wt * integral(&|k| (z[k] - zq[k]) * (z[k] - zq[k]));
        t[8] += wt * integral(&|k| c1[k] * c1[k] + c2[k] * c2[k]);
    }
    let kt = time.steps();
    let (phi, sigma, z) = (traj.phi[kt].values(), traj.sigma[kt].values(), traj.z[kt].values());
    let (po, so) = (cost.phi_omega.values(), cost.sigma_omega.values());
    t[1] = integral(&|k| (phi[k] - po[k]) * (phi[k] - po[k]));
    t[2] = integral(&|k| phi[k]);
    t[4] = integral(&|k| (sigma[k] - so[k]) * (sigma[k] - so[k]));
    t[7] = integral(&|k| z[k]);
    for (i, v) in t.iter_mut().enumerate() {
        let half = if i == 2 || i == 7 { 1.0 } else { 0.5 };
        *v *= half * a[i];
    }
    Ok(t)
}

pub fn eval_cost(spec: &ModelSpec, traj: &StateTrajectory, control: &Control, cost: &CostSpec) -> Result<f64> {
    Ok(cost_terms(spec, traj, control, cost)?.iter().sum())
}

/// `g1 = a4 q + α9 χ1`, `g2 = b4 r + α9 χ2`, nodewise at every level.
pub fn reduced_gradient(
    spec: &ModelSpec,
    traj: &StateTrajectory,
    adj: &AdjointTrajectory,
    control: &Control,
    cost: &CostSpec,
) -> Result<Control> {
    let g = spec.grid;
    let time = traj.time;
    control.check(&g, &time)?;
    if adj.levels() != time.levels() {
        return Err(Error::TimeGridMismatch { expected: time.levels(), found: adj.levels() });
    }
    let a9 = cost.alpha[8];
    let n_cap = spec.n_cap;
    let mut chi1 = Vec::with_capacity(time.levels());
    let mut chi2 = Vec::with_capacity(time.levels());
    for n in 0..time.levels() {
        let (phi, z) = (traj.phi[n].values(), traj.z[n].values());
        let (q, r) = (adj.q[n].values(), adj.r[n].values());
        let (c1, c2) = (control.chi1[n].values(), control.chi2[n].values());
        let g1 = (0..phi.len()).map(|k| -phi[k] * (1.0 - phi[k] / n_cap) * q[k] + a9 * c1[k]).collect();
        let g2 = (0..phi.len()).map(|k| spec.nl.s(phi[k], z[k]).value * r[k] + a9 * c2[k]).collect();
        chi1.push(ScalarField::from_raw(g, g1));
        chi2.push(ScalarField::from_raw(g, g2));
    }
    Ok(Control { chi1, chi2 })
}

/// Everything needed to evaluate the reduced cost `J(χ) = cost(S(χ), χ)`.
#[derive(Clone, Debug)]
pub struct Problem {
    pub spec: ModelSpec,
    pub cost: CostSpec,
    pub steps: usize,
    pub settings: SolverSettings,
}

/// One reduced-cost evaluation with its gradient.
#[derive(Clone, Debug)]
pub struct GradientEval {
    pub cost: f64,
    pub gradient: Control,
    pub traj: StateTrajectory,
    pub adjoint: AdjointTrajectory,
}

impl Problem {
    pub fn time(&self) -> Result<TimeGrid> {
        TimeGrid::new(self.spec.t_final, self.steps)
    }

    pub fn solve(&self, control: &Control) -> Result<StateTrajectory> {
        solve_state(&self.spec, control, self.steps, &self.settings)
    }

    pub fn reduced_cost(&self, control: &Control) -> Result<f64> {
        let traj = self.solve(control)?;
        eval_cost(&self.spec, &traj, control, &self.cost)
    }

    pub fn gradient(&self, control: &Control) -> Result<GradientEval> {
        let traj = self.solve(control)?;
        self.gradient_along(control, traj)
    }

    /// Gradient reusing an already computed trajectory for `control`.
    pub fn gradient_along(&self, control: &Control, traj: StateTrajectory) -> Result<GradientEval> {
        let cost = eval_cost(&self.spec, &traj, control, &self.cost)?;
        let coeffs = assemble_coefficients(&self.spec, &traj, control)?;
        let adjoint = solve_adjoint(&self.spec, &traj, &coeffs, &self.cost, &self.settings)?;
        let gradient = reduced_gradient(&self.spec, &traj, &adjoint, control, &self.cost)?;
        Ok(GradientEval { cost, gradient, traj, adjoint })
    }
}

/// Central difference `(J(χ+εh) − J(χ−εh)) / 2ε`.
pub fn fd_directional(problem: &Problem, control: &Control, h: &Control, eps: f64) -> Result<f64> {
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::InvalidParameter("finite-difference step must be positive"));
    }
    if h.max_abs() == 0.0 {
        return Ok(0.0);
    }
    let plus = problem.reduced_cost(&control.axpy(eps, h)?)?;
    let minus = problem.reduced_cost(&control.axpy(-eps, h)?)?;
    Ok((plus - minus) / (2.0 * eps))
}

/// Smooth random dose perturbation: per component, three positive Gaussian
/// bumps with random centres and widths, each modulated by a positive
/// time profile; normalized to unit `L²(Q)` norm.
pub fn smooth_direction(grid: Grid, time: &TimeGrid, seed: u64) -> Control {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pi = core::f64::consts::PI;
    let mut bumps = [[0.0f64; 7]; 6];
    for b in bumps.iter_mut() {
        *b = [
            rng.random_range(0.5..1.5),
            rng.random_range(0.15..0.85) * grid.lx(),
            rng.random_range(0.15..0.85) * grid.ly(),
            rng.random_range(0.1..0.3) * grid.lx().min(grid.ly()),
            rng.random_range(0.0..0.6),
            rng.random_range(0..3) as f64,
            rng.random_range(0.0..2.0 * pi),
        ];
    }
    let tf = time.t_final();
    let h = Control::from_fn(grid, time, |x, y, t| {
        let eval = |bs: &[[f64; 7]]| {
            bs.iter()
                .map(|b| {
                    let r2 = (x - b[1]) * (x - b[1]) + (y - b[2]) * (y - b[2]);
                    b[0] * crate::math::exp(-r2 / (2.0 * b[3] * b[3])) * (1.0 + b[4] * cos(b[5] * pi * t / tf + b[6]))
                })
                .sum::<f64>()
        };
        (eval(&bumps[..3]), eval(&bumps[3..]))
    });
    let n = h.norm(time);
    if n > 0.0 {
        h.scaled(1.0 / n)
    } else {
        h
    }
}

/// `{χ : lo ≤ χ ≤ hi pointwise, ‖χ1‖_{L²(V)} ≤ C_ad}`.
#[derive(Clone, Debug, PartialEq)]
pub struct AdmissibleBox {
    pub chi1_low: Vec<ScalarField>,
    pub chi1_high: Vec<ScalarField>,
    pub chi2_low: Vec<ScalarField>,
    pub chi2_high: Vec<ScalarField>,
    pub c_ad: f64,
}

impl AdmissibleBox {
    pub fn new(
        chi1_low: Vec<ScalarField>,
        chi1_high: Vec<ScalarField>,
        chi2_low: Vec<ScalarField>,
        chi2_high: Vec<ScalarField>,
        c_ad: f64,
    ) -> Result<Self> {
        if !(c_ad > 0.0) {
            return Err(Error::InvalidBox("ball radius must be positive"));
        }
        let levels = chi1_low.len();
        if [chi1_high.len(), chi2_low.len(), chi2_high.len()].iter().any(|l| *l != levels) {
            return Err(Error::InvalidBox("bounds disagree on the number of time levels"));
        }
        for (lo, hi) in chi1_low.iter().zip(&chi1_high).chain(chi2_low.iter().zip(&chi2_high)) {
            if lo.grid() != hi.grid() {
                return Err(Error::GridMismatch);
            }
            if lo.values().iter().zip(hi.values()).any(|(l, h)| !(l <= h)) {
                return Err(Error::InvalidBox("lower bound exceeds upper bound"));
            }
        }
        Ok(Self { chi1_low, chi1_high, chi2_low, chi2_high, c_ad })
    }

    pub fn constant(grid: Grid, time: &TimeGrid, chi1: (f64, f64), chi2: (f64, f64), c_ad: f64) -> Result<Self> {
        let f = |c: f64| vec![ScalarField::constant(grid, c); time.levels()];
        Self::new(f(chi1.0), f(chi1.1), f(chi2.0), f(chi2.1), c_ad)
    }

    /// Box membership (exact) and ball membership up to `ball_tol`.
    pub fn contains(&self, control: &Control, time: &TimeGrid, ball_tol: f64) -> bool {
        let inside = |c: &[ScalarField], lo: &[ScalarField], hi: &[ScalarField]| {
            c.iter().zip(lo).zip(hi).all(|((c, l), h)| {
                c.values().iter().zip(l.values()).zip(h.values()).all(|((v, l), h)| l <= v && v <= h)
            })
        };
        control.levels() == self.chi1_low.len()
            && inside(&control.chi1, &self.chi1_low, &self.chi1_high)
            && inside(&control.chi2, &self.chi2_low, &self.chi2_high)
            && control.chi1_v_norm(time) <= self.c_ad + ball_tol
    }

    fn check(&self, control: &Control) -> Result<()> {
        if control.levels() != self.chi1_low.len() {
            return Err(Error::TimeGridMismatch { expected: self.chi1_low.len(), found: control.levels() });
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Projection {
    pub control: Control,
    pub ball_active: bool,
}

fn clamp_levels(c: &[ScalarField], lo: &[ScalarField], hi: &[ScalarField]) -> Vec<ScalarField> {
    c.iter()
        .zip(lo)
        .zip(hi)
        .map(|((c, l), h)| {
            let v = c.values().iter().zip(l.values()).zip(h.values()).map(|((v, l), h)| v.max(*l).min(*h)).collect();
            ScalarField::from_raw(*c.grid(), v)
        })
        .collect()
}

/// Clamp to the box, rescale χ1 onto the ball if needed, clamp once more.
pub fn project_admissible(control: &Control, adm: &AdmissibleBox, time: &TimeGrid) -> Result<Projection> {
    adm.check(control)?;
    let mut chi1 = clamp_levels(&control.chi1, &adm.chi1_low, &adm.chi1_high);
    let chi2 = clamp_levels(&control.chi2, &adm.chi2_low, &adm.chi2_high);
    let norm = Control { chi1: chi1.clone(), chi2: Vec::new() }.chi1_v_norm(time);
    let ball_active = norm > adm.c_ad;
    if ball_active {
        let s = adm.c_ad / norm;
        let scaled: Vec<ScalarField> = chi1.iter().map(|f| f.scaled(s)).collect();
        chi1 = clamp_levels(&scaled, &adm.chi1_low, &adm.chi1_high);
    }
    Ok(Projection { control: Control { chi1, chi2 }, ball_active })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OptimizerSettings {
    pub lambda0: f64,
    pub shrink: f64,
    pub armijo: f64,
    pub max_iter: usize,
    pub max_backtracks: usize,
    /// Stop when stationarity < `tol_rel` × initial stationarity ...
    pub tol_rel: f64,
    /// ... or below this absolute level.
    pub tol_abs: f64,
}

impl Default for OptimizerSettings {
    fn default() -> Self {
        Self { lambda0: 1.0, shrink: 0.5, armijo: 1e-4, max_iter: 200, max_backtracks: 30, tol_rel: 1e-6, tol_abs: 1e-14 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HistoryRecord {
    pub iteration: usize,
    pub cost: f64,
    pub stationarity: f64,
    /// Accepted step length (0 on the final record).
    pub step: f64,
    pub ball_active: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StopReason {
    Converged,
    MaxIterations,
    LineSearchFailed,
}

#[derive(Clone, Debug)]
pub struct OptimizeResult {
    pub control: Control,
    pub history: Vec<HistoryRecord>,
    pub stop: StopReason,
    /// Gradient data at the returned control.
    pub last: GradientEval,
}

/// `‖χ − P(χ − g)‖_{L²(Q)}`.
pub fn stationarity(control: &Control, gradient: &Control, adm: &AdmissibleBox, time: &TimeGrid) -> Result<(f64, bool)> {
    let p = project_admissible(&control.axpy(-1.0, gradient)?, adm, time)?;
    Ok((control.axpy(-1.0, &p.control)?.norm(time), p.ball_active))
}

/// Projected gradient descent with Armijo backtracking on the reduced cost.
pub fn optimize(problem: &Problem, initial: &Control, adm: &AdmissibleBox, settings: &OptimizerSettings) -> Result<OptimizeResult> {
    let time = problem.time()?;
    let mut control = project_admissible(initial, adm, &time)?.control;
    let mut eval = problem.gradient(&control)?;
    let mut history = Vec::new();
    let (s0, mut ball) = stationarity(&control, &eval.gradient, adm, &time)?;
    let tol = (settings.tol_rel * s0).max(settings.tol_abs);
    let mut stat = s0;
    let mut iteration = 0;
    let stop = loop {
        if stat <= tol {
            break StopReason::Converged;
        }
        if iteration >= settings.max_iter {
            break StopReason::MaxIterations;
        }
        let mut lambda = settings.lambda0;
        let mut accepted = None;
        for _ in 0..=settings.max_backtracks {
            let trial = project_admissible(&control.axpy(-lambda, &eval.gradient)?, adm, &time)?;
            let step = trial.control.axpy(-1.0, &control)?;
            let decrease = eval.gradient.inner(&step, &time)?;
            let traj = problem.solve(&trial.control)?;
            let j = eval_cost(&problem.spec, &traj, &trial.control, &problem.cost)?;
            if j <= eval.cost + settings.armijo * decrease && j <= eval.cost {
                accepted = Some((trial, traj));
                break;
            }
            lambda *= settings.shrink;
        }
        let Some((trial, traj)) = accepted else {
            break StopReason::LineSearchFailed;
        };
        history.push(HistoryRecord { iteration, cost: eval.cost, stationarity: stat, step: lambda, ball_active: ball || trial.ball_active });
        control = trial.control;
        eval = problem.gradient_along(&control, traj)?;
        (stat, ball) = stationarity(&control, &eval.gradient, adm, &time)?;
        iteration += 1;
    };
    history.push(HistoryRecord { iteration, cost: eval.cost, stationarity: stat, step: 0.0, ball_active: ball });
    Ok(OptimizeResult { control, history, stop, last: eval })
}

/// Minimum over the probes of both forms of the first-order inequality.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ViReport {
    /// With `α9 ∫∫ χ·(χ − χ*)`, the form as printed.
    pub printed: f64,
    /// With `α9 ∫∫ χ*·(χ − χ*)`, i.e. `⟨∇J(χ*), χ − χ*⟩`.
    pub star: f64,
    pub probes: usize,
    /// `‖∇J(χ*)‖ · max ‖χ − χ*‖` over the probes; bounds both residuals in size.
    pub scale: f64,
}

/// Probe controls: the candidate, the four box corners and `random` smooth
/// draws inside the box, all mapped into the admissible set.
pub fn probe_set(candidate: &Control, adm: &AdmissibleBox, time: &TimeGrid, random: usize, seed: u64) -> Result<Vec<Control>> {
    adm.check(candidate)?;
    let mut probes = vec![candidate.clone()];
    for (a, b) in [(false, false), (false, true), (true, false), (true, true)] {
        let pick = |hi: bool, lo: &Vec<ScalarField>, up: &Vec<ScalarField>| if hi { up.clone() } else { lo.clone() };
        let c = Control { chi1: pick(a, &adm.chi1_low, &adm.chi1_high), chi2: pick(b, &adm.chi2_low, &adm.chi2_high) };
        probes.push(project_admissible(&c, adm, time)?.control);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pi = core::f64::consts::PI;
    for _ in 0..random {
        let mut p = [[0.0f64; 5]; 2];
        for m in p.iter_mut() {
            *m = [
                rng.random_range(0.0..1.0),
                rng.random_range(0.0..0.5),
                rng.random_range(0..3) as f64,
                rng.random_range(0..3) as f64,
                rng.random_range(0..2) as f64,
            ];
        }
        let blend = |m: &[f64; 5], lo: &[ScalarField], hi: &[ScalarField]| -> Vec<ScalarField> {
            (0..time.levels())
                .map(|n| {
                    let g = *lo[n].grid();
                    let t = time.time(n) / time.t_final();
                    let v = (0..g.node_count())
                        .map(|k| {
                            let (i, j) = g.ij(k);
                            let s = m[0] + m[1] * cos(m[2] * pi * g.x(i) / g.lx()) * cos(m[3] * pi * g.y(j) / g.ly()) * cos(m[4] * pi * t);
                            let s = s.clamp(0.0, 1.0);
                            lo[n].values()[k] + s * (hi[n].values()[k] - lo[n].values()[k])
                        })
                        .collect();
                    ScalarField::from_raw(g, v)
                })
                .collect()
        };
        let c = Control { chi1: blend(&p[0], &adm.chi1_low, &adm.chi1_high), chi2: blend(&p[1], &adm.chi2_low, &adm.chi2_high) };
        probes.push(project_admissible(&c, adm, time)?.control);
    }
    Ok(probes)
}

/// Evaluates the first-order inequality at `candidate` against each probe.
pub fn vi_residual(
    spec: &ModelSpec,
    traj: &StateTrajectory,
    adj: &AdjointTrajectory,
    candidate: &Control,
    cost: &CostSpec,
    probes: &[Control],
) -> Result<ViReport> {
    let time = traj.time;
    let zero_cost = CostSpec { alpha: { let mut a = cost.alpha; a[8] = 0.0; a }, ..cost.clone() };
    // state part of the gradient: a4 q, b4 r
    let pairing = reduced_gradient(spec, traj, adj, candidate, &zero_cost)?;
    let a9 = cost.alpha[8];
    let grad_norm = pairing.axpy(a9, candidate)?.norm(&time);
    let mut printed = f64::INFINITY;
    let mut star = f64::INFINITY;
    let mut reach: f64 = 0.0;
    for p in probes {
        let d = p.axpy(-1.0, candidate)?;
        reach = reach.max(d.norm(&time));
        let base = pairing.inner(&d, &time)?;
        printed = printed.min(base + a9 * p.inner(&d, &time)?);
        star = star.min(base + a9 * candidate.inner(&d, &time)?);
    }
    if probes.is_empty() {
        printed = 0.0;
        star = 0.0;
    }
    Ok(ViReport { printed, star, probes: probes.len(), scale: grad_norm * reach })
}
