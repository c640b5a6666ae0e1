//! Forward solver: semi-implicit splitting φ → σ → u → z on a uniform time grid.

use alloc::vec;
use alloc::vec::Vec;

use crate::cg::{self, CgSettings, CgStats};
use crate::grid::{
    grad_norm_sq_raw, robin_source, sym_grad, time_weight, weighted_dot, Grid, ScalarField, SymTensorField, VectorField,
};
use crate::math::sqrt;
use crate::model::{separation_bounds, ModelSpec, SeparationBounds};
use crate::ops::{stress_load, weighted, ElasticOp, InteriorMap, ScalarOp};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TimeGrid {
    steps: usize,
    tau: f64,
}

impl TimeGrid {
    pub fn new(t_final: f64, steps: usize) -> Result<Self> {
        if steps == 0 || !(t_final > 0.0) || !t_final.is_finite() {
            return Err(Error::InvalidParameter("time grid needs a positive horizon and at least one step"));
        }
        Ok(Self { steps, tau: t_final / steps as f64 })
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    /// Number of time nodes, `steps + 1`.
    pub fn levels(&self) -> usize {
        self.steps + 1
    }

    pub fn t_final(&self) -> f64 {
        self.tau * self.steps as f64
    }

    pub fn time(&self, n: usize) -> f64 {
        self.tau * n as f64
    }

    /// Composite trapezoid weight of level `n`.
    pub fn weight(&self, n: usize) -> f64 {
        time_weight(n, self.levels(), self.tau)
    }

    pub fn refined(&self) -> Self {
        Self { steps: 2 * self.steps, tau: 0.5 * self.tau }
    }
}

/// The pair (χ1, χ2), one field per time node. On step `n → n+1` the solver
/// uses level `n` (piecewise constant in time).
#[derive(Clone, Debug, PartialEq)]
pub struct Control {
    pub chi1: Vec<ScalarField>,
    pub chi2: Vec<ScalarField>,
}

impl Control {
    pub fn constant(grid: Grid, time: &TimeGrid, c1: f64, c2: f64) -> Self {
        Self {
            chi1: vec![ScalarField::constant(grid, c1); time.levels()],
            chi2: vec![ScalarField::constant(grid, c2); time.levels()],
        }
    }

    pub fn zeros(grid: Grid, time: &TimeGrid) -> Self {
        Self::constant(grid, time, 0.0, 0.0)
    }

    pub fn from_fn(grid: Grid, time: &TimeGrid, f: impl Fn(f64, f64, f64) -> (f64, f64)) -> Self {
        let mut chi1 = Vec::with_capacity(time.levels());
        let mut chi2 = Vec::with_capacity(time.levels());
        for n in 0..time.levels() {
            let t = time.time(n);
            chi1.push(ScalarField::from_fn(grid, |x, y| f(x, y, t).0));
            chi2.push(ScalarField::from_fn(grid, |x, y| f(x, y, t).1));
        }
        Self { chi1, chi2 }
    }

    pub fn levels(&self) -> usize {
        self.chi1.len()
    }

    /// Confirms shape and finiteness against a grid and time grid.
    pub fn check(&self, grid: &Grid, time: &TimeGrid) -> Result<()> {
        for c in [&self.chi1, &self.chi2] {
            if c.len() != time.levels() {
                return Err(Error::TimeGridMismatch { expected: time.levels(), found: c.len() });
            }
            for (level, f) in c.iter().enumerate() {
                if f.grid() != grid {
                    return Err(Error::GridMismatch);
                }
                if let Some(node) = f.values().iter().position(|v| !v.is_finite()) {
                    return Err(Error::NonFinite { what: "control", level, node });
                }
            }
        }
        Ok(())
    }

    fn zip(&self, other: &Control, f: impl Fn(&ScalarField, &ScalarField) -> Result<ScalarField>) -> Result<Control> {
        if self.levels() != other.levels() {
            return Err(Error::TimeGridMismatch { expected: self.levels(), found: other.levels() });
        }
        let chi1 = self.chi1.iter().zip(&other.chi1).map(|(a, b)| f(a, b)).collect::<Result<_>>()?;
        let chi2 = self.chi2.iter().zip(&other.chi2).map(|(a, b)| f(a, b)).collect::<Result<_>>()?;
        Ok(Control { chi1, chi2 })
    }

    /// `self + a · other`.
    pub fn axpy(&self, a: f64, other: &Control) -> Result<Control> {
        self.zip(other, |x, y| x.axpy(a, y))
    }

    pub fn scaled(&self, a: f64) -> Control {
        Control {
            chi1: self.chi1.iter().map(|f| f.scaled(a)).collect(),
            chi2: self.chi2.iter().map(|f| f.scaled(a)).collect(),
        }
    }

    /// `L²(Q)` inner product of both components, trapezoidal in space and time.
    pub fn inner(&self, other: &Control, time: &TimeGrid) -> Result<f64> {
        if self.levels() != time.levels() || other.levels() != time.levels() {
            return Err(Error::TimeGridMismatch { expected: time.levels(), found: other.levels().min(self.levels()) });
        }
        let mut s = 0.0;
        for n in 0..time.levels() {
            let a = crate::grid::inner(&self.chi1[n], &other.chi1[n])?;
            let b = crate::grid::inner(&self.chi2[n], &other.chi2[n])?;
            s += time.weight(n) * (a + b);
        }
        Ok(s)
    }

    pub fn norm(&self, time: &TimeGrid) -> f64 {
        self.inner(self, time).map(sqrt).unwrap_or(f64::NAN)
    }

    /// `‖χ1‖_{L²(V)}`, trapezoidal in time.
    pub fn chi1_v_norm(&self, time: &TimeGrid) -> f64 {
        let mut s = 0.0;
        for (n, f) in self.chi1.iter().enumerate() {
            let g = f.grid();
            s += time.weight(n) * (weighted_dot(g, f.values(), f.values()) + grad_norm_sq_raw(g, f.values()));
        }
        sqrt(s)
    }

    pub fn max_abs(&self) -> f64 {
        self.chi1.iter().chain(&self.chi2).fold(0.0, |m, f| m.max(f.max_abs()))
    }

    pub fn chi2_max(&self) -> f64 {
        self.chi2.iter().fold(f64::NEG_INFINITY, |m, f| m.max(f.max()))
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolverSettings {
    pub cg: CgSettings,
    pub newton_tol: f64,
    pub newton_max_iter: usize,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self { cg: CgSettings::default(), newton_tol: 1e-10, newton_max_iter: 50 }
    }
}

/// Runtime monitoring of the bounds the continuous problem guarantees.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Diagnostics {
    /// Largest excursion of φ outside `[0, N]` before clamping.
    pub phi_clamp: f64,
    /// Largest excursion of σ outside `[0, M]` before clamping.
    pub sigma_clamp: f64,
    /// Post-clamp violations (zero unless something is badly wrong).
    pub phi_violation: f64,
    pub sigma_violation: f64,
    /// Monitored lactate cap M; a heuristic, not a proven bound.
    pub sigma_cap: f64,
    pub separation: Option<SeparationBounds>,
    pub z_min: f64,
    pub z_max: f64,
    /// Largest distance of z outside `[r_low, r_high]`.
    pub separation_violation: f64,
    pub u_boundary: f64,
    /// Total CG iterations for the φ, σ, u and z substeps.
    pub cg_iterations: [usize; 4],
    pub cg_max: [usize; 4],
    pub newton_total: usize,
    pub newton_max: usize,
}

impl Diagnostics {
    pub const BOUND_TOL: f64 = 1e-9;
    pub const SEPARATION_TOL: f64 = 1e-12;

    pub fn invariants_ok(&self) -> bool {
        self.phi_violation <= Self::BOUND_TOL
            && self.sigma_violation <= Self::BOUND_TOL
            && self.separation.is_some()
            && self.separation_violation <= Self::SEPARATION_TOL
            && self.u_boundary == 0.0
    }

    fn cg(&mut self, slot: usize, s: CgStats) {
        self.cg_iterations[slot] += s.iterations;
        self.cg_max[slot] = self.cg_max[slot].max(s.iterations);
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StateTrajectory {
    pub time: TimeGrid,
    pub phi: Vec<ScalarField>,
    pub sigma: Vec<ScalarField>,
    pub u: Vec<VectorField>,
    pub eps_u: Vec<SymTensorField>,
    pub z: Vec<ScalarField>,
    pub diagnostics: Diagnostics,
}

impl StateTrajectory {
    pub fn grid(&self) -> &Grid {
        self.phi[0].grid()
    }

    pub fn levels(&self) -> usize {
        self.phi.len()
    }

    /// Keeps every `stride`-th level, giving a trajectory on the coarser time grid.
    pub fn subsample(&self, stride: usize) -> Result<StateTrajectory> {
        if stride == 0 || self.time.steps() % stride != 0 {
            return Err(Error::InvalidParameter("stride must divide the step count"));
        }
        let time = TimeGrid::new(self.time.t_final(), self.time.steps() / stride)?;
        fn pick<T: Clone>(v: &[T], stride: usize) -> Vec<T> {
            v.iter().step_by(stride).cloned().collect()
        }
        Ok(StateTrajectory {
            time,
            phi: pick(&self.phi, stride),
            sigma: pick(&self.sigma, stride),
            u: pick(&self.u, stride),
            eps_u: pick(&self.eps_u, stride),
            z: pick(&self.z, stride),
            diagnostics: self.diagnostics.clone(),
        })
    }
}

/// Result of one substep.
#[derive(Clone, Debug, PartialEq)]
pub struct Step<T> {
    pub value: T,
    /// Largest clamp applied (φ, σ) or zero.
    pub clamp: f64,
    /// CG iterations (linear substeps) or Newton iterations (damage).
    pub iterations: usize,
    /// Total CG iterations (equal to `iterations` for linear substeps).
    pub cg_iterations: usize,
}

fn check_finite(values: &[f64], what: &'static str, level: usize) -> Result<()> {
    match values.iter().position(|v| !v.is_finite()) {
        Some(node) => Err(Error::NonFinite { what, level, node }),
        None => Ok(()),
    }
}

fn clamp_into(values: &mut [f64], lo: f64, hi: f64) -> f64 {
    let mut worst: f64 = 0.0;
    for v in values.iter_mut() {
        if *v < lo {
            worst = worst.max(lo - *v);
            *v = lo;
        } else if *v > hi {
            worst = worst.max(*v - hi);
            *v = hi;
        }
    }
    worst
}

/// Solves `(I − τ L) δ = τ r` for the increment (`L` Neumann or Robin-linear)
/// and returns `x + δ`, with `r` already containing `L x`.
pub(crate) fn implicit_increment(
    grid: &Grid,
    weights: &[f64],
    tau: f64,
    robin: bool,
    reaction: Option<&[f64]>,
    x: &[f64],
    mut r: Vec<f64>,
    settings: CgSettings,
) -> Result<(Vec<f64>, CgStats)> {
    let op = ScalarOp { grid, weights, tau, robin, reaction };
    for v in r.iter_mut() {
        *v *= tau;
    }
    weighted(weights, &mut r);
    let mut delta = vec![0.0; x.len()];
    let stats = cg::solve(&op, &r, &mut delta, settings)?;
    Ok((x.iter().zip(&delta).map(|(a, d)| a + d).collect(), stats))
}

/// `(I − τΔ)φⁿ⁺¹ = φⁿ + τ U(φⁿ, σⁿ, zⁿ, χ1ⁿ)`, then clamp to `[0, N]`.
pub fn step_phi(
    spec: &ModelSpec,
    phi: &ScalarField,
    sigma: &ScalarField,
    z: &ScalarField,
    chi1: &ScalarField,
    tau: f64,
    settings: &SolverSettings,
) -> Result<Step<ScalarField>> {
    let g = spec.grid;
    let w = g.weights();
    let mut r = vec![0.0; g.node_count()];
    crate::grid::apply_neumann(&g, phi.values(), &mut r);
    for k in 0..r.len() {
        r[k] += spec.eval_u(phi.values()[k], sigma.values()[k], z.values()[k], chi1.values()[k]);
    }
    let (mut next, stats) = implicit_increment(&g, &w, tau, false, None, phi.values(), r, settings.cg)?;
    check_finite(&next, "phi", 0)?;
    let clamp = clamp_into(&mut next, 0.0, spec.n_cap);
    Ok(Step { value: ScalarField::from_raw(g, next), clamp, iterations: stats.iterations, cg_iterations: stats.iterations })
}

/// `(I − τL_R)σⁿ⁺¹ = σⁿ + τ(χ2ⁿ S(φⁿ, zⁿ) − K(φⁿ, σⁿ, zⁿ)) + τ·RobinSource(σ_Γ)`, then clamp to `[0, cap]`.
#[allow(clippy::too_many_arguments)]
pub fn step_sigma(
    spec: &ModelSpec,
    sigma: &ScalarField,
    phi: &ScalarField,
    z: &ScalarField,
    chi2: &ScalarField,
    tau: f64,
    cap: f64,
    settings: &SolverSettings,
) -> Result<Step<ScalarField>> {
    let g = spec.grid;
    let w = g.weights();
    let mut r = vec![0.0; g.node_count()];
    crate::grid::apply_robin_linear(&g, sigma.values(), &mut r);
    let src = robin_source(&spec.sigma_gamma);
    for k in 0..r.len() {
        let (p, s, zz) = (phi.values()[k], sigma.values()[k], z.values()[k]);
        r[k] += chi2.values()[k] * spec.nl.s(p, zz).value - spec.eval_k(p, s, zz)? + src.values()[k];
    }
    let (mut next, stats) = implicit_increment(&g, &w, tau, true, None, sigma.values(), r, settings.cg)?;
    check_finite(&next, "sigma", 0)?;
    let clamp = clamp_into(&mut next, 0.0, cap);
    Ok(Step { value: ScalarField::from_raw(g, next), clamp, iterations: stats.iterations, cg_iterations: stats.iterations })
}

/// Viscous operator with lagged elastic moduli at each node.
pub(crate) fn elastic_moduli(spec: &ModelSpec, phi: &ScalarField, z: &ScalarField) -> (Vec<f64>, Vec<f64>) {
    phi.values().iter().zip(z.values()).map(|(&p, &zz)| spec.eval_b(p, zz)).unzip()
}

/// Solves `(𝒜/τ + ℬ) ε(δ) = load` weakly on interior DOFs with `ℬ = (mu, lam)`;
/// `load` is the interior DOF vector of the right-hand side.
pub(crate) fn elastic_solve(
    spec: &ModelSpec,
    map: &InteriorMap,
    weights: &[f64],
    mu: &[f64],
    lam: &[f64],
    tau: f64,
    load: &[f64],
    settings: CgSettings,
) -> Result<(VectorField, CgStats)> {
    let g = &spec.grid;
    let mt: Vec<f64> = mu.iter().map(|m| spec.a_mu / tau + m).collect();
    let lt: Vec<f64> = lam.iter().map(|l| spec.a_lam / tau + l).collect();
    let op = ElasticOp::new(g, weights, map, mt, lt);
    let mut x = vec![0.0; load.len()];
    let stats = cg::solve(&op, load, &mut x, settings)?;
    let n = g.node_count();
    let (mut a, mut b) = (vec![0.0; n], vec![0.0; n]);
    map.scatter(&x, &mut a, &mut b);
    Ok((VectorField::from_raw(*g, a, b), stats))
}

/// `−div[(𝒜/τ + ℬ(φⁿ⁺¹, zⁿ)) ε(uⁿ⁺¹)] = f − div[(𝒜/τ) ε(uⁿ)]` on Dirichlet-zero fields.
pub fn step_u(
    spec: &ModelSpec,
    u: &VectorField,
    phi_next: &ScalarField,
    z: &ScalarField,
    tau: f64,
    settings: &SolverSettings,
) -> Result<Step<VectorField>> {
    let g = spec.grid;
    let w = g.weights();
    let map = InteriorMap::new(&g);
    let (mu, lam) = elastic_moduli(spec, phi_next, z);
    let e = sym_grad(u);
    let n = g.node_count();
    let (mut sxx, mut syy, mut sxy) = (vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    for k in 0..n {
        let s = crate::model::isotropic_stress(mu[k], lam[k], &e.at(k));
        sxx[k] = s.xx;
        syy[k] = s.yy;
        sxy[k] = s.xy;
    }
    // Increment form: (𝒜/τ + ℬ)ε(δ) = f − ℬ ε(uⁿ).
    let mut load = vec![0.0; 2 * map.len()];
    stress_load(&g, &w, &map, &sxx, &syy, &sxy, &mut load);
    let m = map.len();
    for (d, &k) in map.nodes.iter().enumerate() {
        load[d] += w[k] * spec.f.x()[k];
        load[m + d] += w[k] * spec.f.y()[k];
    }
    let (delta, stats) = elastic_solve(spec, &map, &w, &mu, &lam, tau, &load, settings.cg)?;
    let next = u.axpy(1.0, &delta)?;
    if !next.is_finite() {
        return Err(Error::NonFinite { what: "displacement", level: 0, node: 0 });
    }
    Ok(Step { value: next, clamp: 0.0, iterations: stats.iterations, cg_iterations: stats.iterations })
}

/// Implicit damage step `z − τΔz + τ(β(z) + π(z)) = zⁿ + τ(ι − Ψ(φⁿ⁺¹, ε(uⁿ⁺¹)))` by damped Newton.
pub fn step_z(
    spec: &ModelSpec,
    z: &ScalarField,
    phi_next: &ScalarField,
    eps_next: &SymTensorField,
    tau: f64,
    settings: &SolverSettings,
) -> Result<Step<ScalarField>> {
    let g = spec.grid;
    let n = g.node_count();
    let w = g.weights();
    let pot = spec.potential;
    if let Some(k) = z.values().iter().position(|&v| !(v > 0.0 && v < 1.0)) {
        return Err(Error::Domain { what: "damage before the implicit step", value: z.values()[k] });
    }
    let rhs: Vec<f64> = (0..n)
        .map(|k| {
            let psi = spec.nl.psi(phi_next.values()[k], &eps_next.at(k)).value;
            z.values()[k] + tau * (spec.iota.values()[k] - psi)
        })
        .collect();
    let mut x = z.values().to_vec();
    let mut lap = vec![0.0; n];
    let mut resid = vec![0.0; n];
    let mut history = Vec::new();
    let mut cg_total = 0;
    let residual = |x: &[f64], lap: &mut [f64], resid: &mut [f64]| {
        crate::grid::apply_neumann(&g, x, lap);
        let mut sup: f64 = 0.0;
        for k in 0..n {
            resid[k] = x[k] - tau * lap[k] + tau * (pot.beta_unchecked(x[k]) + pot.pi(x[k])) - rhs[k];
            sup = sup.max(resid[k].abs());
        }
        sup
    };
    let mut sup = residual(&x, &mut lap, &mut resid);
    let mut it = 0;
    while sup > settings.newton_tol {
        if it >= settings.newton_max_iter || !sup.is_finite() {
            history.push(sup);
            return Err(Error::NewtonNotConverged { iterations: it, residuals: history });
        }
        history.push(sup);
        let react: Vec<f64> = x.iter().map(|&v| pot.beta_prime_unchecked(v) + pot.pi_prime()).collect();
        let op = ScalarOp { grid: &g, weights: &w, tau, robin: false, reaction: Some(&react) };
        let b: Vec<f64> = (0..n).map(|k| -w[k] * resid[k]).collect();
        let mut delta = vec![0.0; n];
        let stats = cg::solve(&op, &b, &mut delta, settings.cg)?;
        cg_total += stats.iterations;
        let mut lambda = 1.0;
        let mut halvings = 0;
        while delta.iter().zip(&x).any(|(d, v)| {
            let t = v + lambda * d;
            !(t > 0.0 && t < 1.0)
        }) {
            lambda *= 0.5;
            halvings += 1;
            if halvings > 60 {
                return Err(Error::NewtonNotConverged { iterations: it, residuals: history });
            }
        }
        for (v, d) in x.iter_mut().zip(&delta) {
            *v += lambda * d;
        }
        sup = residual(&x, &mut lap, &mut resid);
        it += 1;
    }
    Ok(Step { value: ScalarField::from_raw(g, x), clamp: 0.0, iterations: it, cg_iterations: cg_total })
}

/// Marches the state system over `steps` uniform steps on `[0, spec.t_final]`.
pub fn solve_state(spec: &ModelSpec, control: &Control, steps: usize, settings: &SolverSettings) -> Result<StateTrajectory> {
    spec.validate()?;
    let time = TimeGrid::new(spec.t_final, steps)?;
    control.check(&spec.grid, &time)?;
    let tau = time.tau();
    let cap = spec.sigma_cap(control.chi2_max());
    let separation = separation_bounds(spec).ok();
    let mut diag = Diagnostics { sigma_cap: cap, separation, ..Default::default() };

    let mut phi = Vec::with_capacity(time.levels());
    let mut sigma = Vec::with_capacity(time.levels());
    let mut u = Vec::with_capacity(time.levels());
    let mut eps_u = Vec::with_capacity(time.levels());
    let mut z = Vec::with_capacity(time.levels());
    let mut u0 = spec.u0.clone();
    u0.mask_boundary();
    phi.push(spec.phi0.clone());
    sigma.push(spec.sigma0.clone());
    eps_u.push(sym_grad(&u0));
    u.push(u0);
    z.push(spec.z0.clone());

    for n in 0..steps {
        let ps = step_phi(spec, &phi[n], &sigma[n], &z[n], &control.chi1[n], tau, settings).map_err(|e| at_level(e, n + 1))?;
        diag.phi_clamp = diag.phi_clamp.max(ps.clamp);
        diag.cg(0, CgStats { iterations: ps.iterations, rel_residual: 0.0 });
        let ss = step_sigma(spec, &sigma[n], &phi[n], &z[n], &control.chi2[n], tau, cap, settings)
            .map_err(|e| at_level(e, n + 1))?;
        diag.sigma_clamp = diag.sigma_clamp.max(ss.clamp);
        diag.cg(1, CgStats { iterations: ss.iterations, rel_residual: 0.0 });
        let us = step_u(spec, &u[n], &ps.value, &z[n], tau, settings).map_err(|e| at_level(e, n + 1))?;
        diag.cg(2, CgStats { iterations: us.iterations, rel_residual: 0.0 });
        let e = sym_grad(&us.value);
        let zs = step_z(spec, &z[n], &ps.value, &e, tau, settings).map_err(|e| at_level(e, n + 1))?;
        diag.cg(3, CgStats { iterations: zs.cg_iterations, rel_residual: 0.0 });
        diag.newton_total += zs.iterations;
        diag.newton_max = diag.newton_max.max(zs.iterations);
        phi.push(ps.value);
        sigma.push(ss.value);
        u.push(us.value);
        eps_u.push(e);
        z.push(zs.value);
    }

    let n_cap = spec.n_cap;
    for f in &phi {
        diag.phi_violation = diag.phi_violation.max(-f.min()).max(f.max() - n_cap);
    }
    for f in &sigma {
        diag.sigma_violation = diag.sigma_violation.max(-f.min()).max(f.max() - cap);
    }
    diag.z_min = z.iter().fold(f64::INFINITY, |m, f| m.min(f.min()));
    diag.z_max = z.iter().fold(f64::NEG_INFINITY, |m, f| m.max(f.max()));
    if let Some(s) = separation {
        diag.separation_violation = (s.r_low - diag.z_min).max(diag.z_max - s.r_high).max(0.0);
    }
    diag.u_boundary = u.iter().fold(0.0, |m, v| m.max(v.boundary_max_abs()));
    Ok(StateTrajectory { time, phi, sigma, u, eps_u, z, diagnostics: diag })
}

fn at_level(e: Error, level: usize) -> Error {
    match e {
        Error::NonFinite { what, node, .. } => Error::NonFinite { what, level, node },
        other => other,
    }
}

/// Distance of two trajectories in `L∞(H) ∩ L²(V)`, summed over the four fields.
pub fn state_distance(a: &StateTrajectory, b: &StateTrajectory) -> Result<f64> {
    if a.levels() != b.levels() {
        return Err(Error::TimeGridMismatch { expected: a.levels(), found: b.levels() });
    }
    let g = *a.grid();
    if *b.grid() != g {
        return Err(Error::GridMismatch);
    }
    let time = a.time;
    let mut total = 0.0;
    let scalar_pairs = [(&a.phi, &b.phi), (&a.sigma, &b.sigma), (&a.z, &b.z)];
    for (x, y) in scalar_pairs {
        let (mut linf, mut l2v) = (0.0f64, 0.0);
        for n in 0..time.levels() {
            let d: Vec<f64> = x[n].values().iter().zip(y[n].values()).map(|(p, q)| p - q).collect();
            let l2 = weighted_dot(&g, &d, &d);
            linf = linf.max(sqrt(l2));
            l2v += time.weight(n) * (l2 + grad_norm_sq_raw(&g, &d));
        }
        total += linf + sqrt(l2v);
    }
    let (mut linf, mut l2v) = (0.0f64, 0.0);
    for n in 0..time.levels() {
        let d = a.u[n].axpy(-1.0, &b.u[n])?;
        let l2 = weighted_dot(&g, d.x(), d.x()) + weighted_dot(&g, d.y(), d.y());
        linf = linf.max(sqrt(l2));
        l2v += time.weight(n) * crate::grid::vector_h1_sq(&d);
    }
    Ok(total + linf + sqrt(l2v))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::LogPotential;
    use crate::scenario;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn small() -> ModelSpec {
        scenario::default_spec(Grid::new(12, 12, 1.0, 1.0).unwrap())
    }

    #[test]
    fn phi_zero_stays_zero() {
        let spec = small();
        let g = spec.grid;
        let zero = ScalarField::zeros(g);
        let s = step_phi(&spec, &zero, &spec.sigma0, &spec.z0, &ScalarField::constant(g, 0.3), 0.01, &SolverSettings::default())
            .unwrap();
        assert_eq!(s.value.max_abs(), 0.0);
    }

    #[test]
    fn phi_constant_matches_explicit_euler() {
        let spec = small();
        let g = spec.grid;
        let (c, s0, z0, chi) = (0.3, 0.6, 0.4, 0.2);
        let tau = 0.05;
        let out = step_phi(
            &spec,
            &ScalarField::constant(g, c),
            &ScalarField::constant(g, s0),
            &ScalarField::constant(g, z0),
            &ScalarField::constant(g, chi),
            tau,
            &SolverSettings::default(),
        )
        .unwrap();
        // scalar oracle written out from the family definition
        let f = crate::model::DefaultLogisticFamily::default();
        let lg = |x: f64| 1.0 / (1.0 + (-x).exp());
        let p = f.p_star * lg(f.eta_p * s0 - 2.0 * z0);
        let gg = f.g_star * lg(f.eta_g * z0 - s0 - 1.0);
        let expected = c + tau * ((p - chi) * c * (1.0 - c / f.n_cap) - c * gg);
        for v in out.value.values() {
            assert!((v - expected).abs() < 1e-10, "{v} vs {expected}");
        }
    }

    #[test]
    fn sigma_trivial_cases() {
        let mut spec = small();
        let g = spec.grid;
        let zero = ScalarField::zeros(g);
        spec.sigma_gamma = zero.clone();
        let s = step_sigma(&spec, &zero, &spec.phi0, &spec.z0, &zero, 0.01, 10.0, &SolverSettings::default()).unwrap();
        assert_eq!(s.value.max_abs(), 0.0);

        // K ≡ 0 and σ ≡ σ_Γ ≡ M0 is steady
        let mut fam = crate::model::DefaultLogisticFamily::default();
        fam.k1_star = 0.0;
        spec.nl = alloc::sync::Arc::new(fam);
        let m0 = spec.m0;
        spec.sigma_gamma = ScalarField::constant(g, m0);
        let s = step_sigma(&spec, &ScalarField::constant(g, m0), &spec.phi0, &spec.z0, &zero, 0.01, 10.0, &SolverSettings::default())
            .unwrap();
        for v in s.value.values() {
            assert!((v - m0).abs() < 1e-12);
        }
    }

    #[test]
    fn u_trivial_and_operator_positive() {
        let mut spec = small();
        let g = spec.grid;
        spec.f = VectorField::zeros(g);
        let s = step_u(&spec, &VectorField::zeros(g), &spec.phi0, &spec.z0, 0.01, &SolverSettings::default()).unwrap();
        assert_eq!(s.value.max_abs(), 0.0);

        let w = g.weights();
        let map = InteriorMap::new(&g);
        let (mu, lam) = elastic_moduli(&spec, &spec.phi0, &spec.z0);
        let op = ElasticOp::new(&g, &w, &map, mu, lam);
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        use crate::cg::SymOperator;
        for _ in 0..20 {
            let x: Vec<f64> = (0..op.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
            let mut y = vec![0.0; x.len()];
            op.apply(&x, &mut y);
            assert!(crate::math::dot(&x, &y) > 0.0);
        }
    }

    #[test]
    fn z_stationary_point_is_kept() {
        let mut spec = small();
        let g = spec.grid;
        spec.potential = LogPotential { c1: 0.5, c2: 0.2 };
        let zbar: f64 = 0.35;
        let pot = spec.potential;
        let phi = ScalarField::zeros(g);
        let eps = SymTensorField::zeros(g);
        let psi0 = spec.nl.psi(0.0, &crate::grid::Sym2::ZERO).value;
        // ι − Ψ = β(z̄) + π(z̄)
        spec.iota = ScalarField::constant(g, pot.beta(zbar).unwrap() + pot.pi(zbar) + psi0);
        let s = step_z(&spec, &ScalarField::constant(g, zbar), &phi, &eps, 0.1, &SolverSettings::default()).unwrap();
        for v in s.value.values() {
            assert!((v - zbar).abs() < 1e-12);
        }
    }

    #[test]
    fn z_constant_matches_scalar_newton() {
        let spec = small();
        let g = spec.grid;
        let pot = spec.potential;
        let (z0, phi0, tau) = (0.3, 0.4, 0.05);
        let psi = spec.nl.psi(phi0, &crate::grid::Sym2::ZERO).value;
        let iota = spec.iota.values()[0];
        let rhs = z0 + tau * (iota - psi);
        let mut r: f64 = z0;
        for _ in 0..100 {
            let f = r + tau * (pot.beta(r).unwrap() + pot.pi(r)) - rhs;
            r -= f / (1.0 + tau * (pot.beta_prime(r).unwrap() + pot.pi_prime()));
        }
        let s = step_z(
            &spec,
            &ScalarField::constant(g, z0),
            &ScalarField::constant(g, phi0),
            &SymTensorField::zeros(g),
            tau,
            &SolverSettings::default(),
        )
        .unwrap();
        for v in s.value.values() {
            assert!((v - r).abs() < 1e-10);
        }
    }

    #[test]
    fn z_stays_inside_unit_interval() {
        let spec = small();
        let g = spec.grid;
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for _ in 0..100 {
            let z = ScalarField::from_values(g, (0..g.node_count()).map(|_| rng.random_range(0.01..0.99)).collect()).unwrap();
            let phi = ScalarField::from_values(g, (0..g.node_count()).map(|_| rng.random_range(0.0..1.0)).collect()).unwrap();
            let tau = rng.random_range(0.001..0.2);
            let s = step_z(&spec, &z, &phi, &SymTensorField::zeros(g), tau, &SolverSettings::default()).unwrap();
            assert!(s.value.min() > 0.0 && s.value.max() < 1.0);
        }
    }

    #[test]
    fn trivial_fixed_point_trajectory() {
        let mut spec = small();
        let g = spec.grid;
        let zero = ScalarField::zeros(g);
        spec.phi0 = zero.clone();
        spec.sigma0 = zero.clone();
        spec.sigma_gamma = zero.clone();
        spec.f = VectorField::zeros(g);
        spec.u0 = VectorField::zeros(g);
        let zbar: f64 = 0.4;
        let pot = spec.potential;
        let psi0 = spec.nl.psi(0.0, &crate::grid::Sym2::ZERO).value;
        spec.iota = ScalarField::constant(g, pot.beta(zbar).unwrap() + pot.pi(zbar) + psi0);
        spec.z0 = ScalarField::constant(g, zbar);
        let time = TimeGrid::new(spec.t_final, 10).unwrap();
        let traj = solve_state(&spec, &Control::zeros(g, &time), 10, &SolverSettings::default()).unwrap();
        for n in 0..traj.levels() {
            assert_eq!(traj.phi[n].max_abs(), 0.0);
            assert_eq!(traj.sigma[n].max_abs(), 0.0);
            assert_eq!(traj.u[n].max_abs(), 0.0);
            assert!(traj.z[n].values().iter().all(|v| (v - zbar).abs() < 1e-12));
        }
    }

    #[test]
    fn default_trajectory_respects_invariants() {
        let spec = small();
        let time = TimeGrid::new(spec.t_final, 20).unwrap();
        let control = scenario::default_control(spec.grid, &time);
        let traj = solve_state(&spec, &control, 20, &SolverSettings::default()).unwrap();
        let d = &traj.diagnostics;
        assert!(d.invariants_ok(), "{d:?}");
        assert_eq!(traj.phi[0], spec.phi0);
        assert_eq!(traj.z[0], spec.z0);
        assert!(traj.u.last().unwrap().max_abs() > 0.0);
    }

    #[test]
    fn mismatched_control_is_rejected() {
        let spec = small();
        let time = TimeGrid::new(spec.t_final, 5).unwrap();
        let control = Control::zeros(spec.grid, &time);
        assert!(matches!(
            solve_state(&spec, &control, 6, &SolverSettings::default()),
            Err(Error::TimeGridMismatch { expected: 7, found: 6 })
        ));
    }
}
