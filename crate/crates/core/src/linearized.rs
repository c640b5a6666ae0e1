//! Sensitivity system around a stored trajectory: the coefficient table and
//! the frozen-coefficient solve mirroring the forward splitting.

use alloc::vec;
use alloc::vec::Vec;

use crate::cg::CgSettings;
use crate::grid::{apply_neumann, apply_robin_linear, grad_norm_sq_raw, sym_grad, weighted_dot, Grid, ScalarField, Sym2, SymTensorField, VectorField};
use crate::math::{ln, sqrt};
use crate::model::{isotropic_stress, ModelSpec};
use crate::ops::{stress_load, InteriorMap};
use crate::state::{elastic_solve, implicit_increment, solve_state, Control, SolverSettings, StateTrajectory, TimeGrid};
use crate::{Error, Result};

/// Partial derivatives of the right-hand sides along a trajectory, one field per time node.
///
/// `mu_lag`, `lam_lag`, `c1_lag`, `c2_lag` are the elastic moduli and the
/// `c1`, `c2` couplings evaluated with the arguments the forward elasticity
/// substep actually uses at level `n` (`φⁿ`, `zⁿ⁻¹`, `ε(uⁿ)`; level 0 uses `z⁰`).
#[derive(Clone, Debug, PartialEq)]
pub struct LinearizedCoefficients {
    pub a1: Vec<ScalarField>,
    pub a2: Vec<ScalarField>,
    pub a3: Vec<ScalarField>,
    pub a4: Vec<ScalarField>,
    pub b1: Vec<ScalarField>,
    pub b2: Vec<ScalarField>,
    pub b3: Vec<ScalarField>,
    pub b4: Vec<ScalarField>,
    pub c1: Vec<SymTensorField>,
    pub c2: Vec<SymTensorField>,
    pub d1: Vec<ScalarField>,
    pub d2: Vec<SymTensorField>,
    pub d3: Vec<ScalarField>,
    pub mu_lag: Vec<ScalarField>,
    pub lam_lag: Vec<ScalarField>,
    pub c1_lag: Vec<SymTensorField>,
    pub c2_lag: Vec<SymTensorField>,
}

/// All coefficients at one point.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct PointCoefficients {
    pub a1: f64,
    pub a2: f64,
    pub a3: f64,
    pub a4: f64,
    pub b1: f64,
    pub b2: f64,
    pub b3: f64,
    pub b4: f64,
    pub c1: Sym2,
    pub c2: Sym2,
    pub d1: f64,
    pub d2: Sym2,
    pub d3: f64,
}

/// Evaluates the coefficient table at one state value.
pub fn point_coefficients(spec: &ModelSpec, phi: f64, sigma: f64, z: f64, eps: &Sym2, chi1: f64, chi2: f64) -> PointCoefficients {
    let nl = &*spec.nl;
    let n = spec.n_cap;
    let p = nl.p(sigma, z);
    let g = nl.g(sigma, z);
    let k1 = nl.k1(phi, z);
    let k2 = nl.k2(phi, z);
    let s = nl.s(phi, z);
    let m = nl.moduli(phi, z);
    let psi = nl.psi(phi, eps);
    let logi = phi * (1.0 - phi / n);
    let den = k2.value + sigma;
    let den2 = den * den;
    PointCoefficients {
        a1: (p.value - chi1) * (1.0 - 2.0 * phi / n) - g.value,
        a2: p.d1 * logi - phi * g.d1,
        a3: p.d2 * logi - phi * g.d2,
        a4: -logi,
        b1: -k1.d1 * sigma / den + k1.value * sigma * k2.d1 / den2 + chi2 * s.d1,
        b2: -k1.value / den + k1.value * sigma / den2,
        b3: -k1.d2 * sigma / den + k1.value * sigma * k2.d2 / den2 + chi2 * s.d2,
        b4: s.value,
        c1: m.stress_phi(eps).scale(-1.0),
        c2: m.stress_z(eps).scale(-1.0),
        d1: -psi.d_phi,
        d2: psi.d_eps.scale(-1.0),
        d3: -spec.potential.beta_prime_unchecked(z) - spec.potential.pi_prime(),
    }
}

fn finite_or_err(f: &ScalarField, what: &'static str, level: usize) -> Result<()> {
    match f.values().iter().position(|v| !v.is_finite()) {
        Some(node) => Err(Error::NonFinite { what, level, node }),
        None => Ok(()),
    }
}

fn tensor_finite_or_err(f: &SymTensorField, what: &'static str, level: usize) -> Result<()> {
    let n = f.grid().node_count();
    match (0..n).find(|&k| {
        let s = f.at(k);
        !(s.xx.is_finite() && s.yy.is_finite() && s.xy.is_finite())
    }) {
        Some(node) => Err(Error::NonFinite { what, level, node }),
        None => Ok(()),
    }
}

pub fn assemble_coefficients(spec: &ModelSpec, traj: &StateTrajectory, control: &Control) -> Result<LinearizedCoefficients> {
    let g = spec.grid;
    control.check(&g, &traj.time)?;
    let levels = traj.levels();
    let nn = g.node_count();
    let mut out = LinearizedCoefficients {
        a1: Vec::with_capacity(levels),
        a2: Vec::with_capacity(levels),
        a3: Vec::with_capacity(levels),
        a4: Vec::with_capacity(levels),
        b1: Vec::with_capacity(levels),
        b2: Vec::with_capacity(levels),
        b3: Vec::with_capacity(levels),
        b4: Vec::with_capacity(levels),
        c1: Vec::with_capacity(levels),
        c2: Vec::with_capacity(levels),
        d1: Vec::with_capacity(levels),
        d2: Vec::with_capacity(levels),
        d3: Vec::with_capacity(levels),
        mu_lag: Vec::with_capacity(levels),
        lam_lag: Vec::with_capacity(levels),
        c1_lag: Vec::with_capacity(levels),
        c2_lag: Vec::with_capacity(levels),
    };
    for n in 0..levels {
        let (phi, sigma, z, eps) = (traj.phi[n].values(), traj.sigma[n].values(), traj.z[n].values(), &traj.eps_u[n]);
        let z_lag = traj.z[n.saturating_sub(1)].values();
        let (chi1, chi2) = (control.chi1[n].values(), control.chi2[n].values());
        let mut sc = vec![vec![0.0; nn]; 12];
        let mut tc = [SymTensorField::zeros(g), SymTensorField::zeros(g), SymTensorField::zeros(g)];
        let mut lag_t = [SymTensorField::zeros(g), SymTensorField::zeros(g)];
        for k in 0..nn {
            let e = eps.at(k);
            let c = point_coefficients(spec, phi[k], sigma[k], z[k], &e, chi1[k], chi2[k]);
            for (slot, v) in [c.a1, c.a2, c.a3, c.a4, c.b1, c.b2, c.b3, c.b4, c.d1, c.d3].into_iter().enumerate() {
                sc[slot][k] = v;
            }
            tc[0].set(k, c.c1);
            tc[1].set(k, c.c2);
            tc[2].set(k, c.d2);
            let m = spec.nl.moduli(phi[k], z_lag[k]);
            sc[10][k] = m.mu;
            sc[11][k] = m.lam;
            lag_t[0].set(k, m.stress_phi(&e).scale(-1.0));
            lag_t[1].set(k, m.stress_z(&e).scale(-1.0));
        }
        let mut it = sc.into_iter().map(|v| ScalarField::from_raw(g, v));
        let mut next = || it.next().expect("twelve scalar coefficients");
        let names = ["a1", "a2", "a3", "a4", "b1", "b2", "b3", "b4", "d1", "d3", "mu_lag", "lam_lag"];
        let fields: Vec<ScalarField> = (0..12).map(|_| next()).collect();
        for (f, name) in fields.iter().zip(names) {
            finite_or_err(f, name, n)?;
        }
        for (f, name) in tc.iter().zip(["c1", "c2", "d2"]).chain(lag_t.iter().zip(["c1_lag", "c2_lag"])) {
            tensor_finite_or_err(f, name, n)?;
        }
        let mut fields = fields.into_iter();
        out.a1.push(fields.next().unwrap());
        out.a2.push(fields.next().unwrap());
        out.a3.push(fields.next().unwrap());
        out.a4.push(fields.next().unwrap());
        out.b1.push(fields.next().unwrap());
        out.b2.push(fields.next().unwrap());
        out.b3.push(fields.next().unwrap());
        out.b4.push(fields.next().unwrap());
        out.d1.push(fields.next().unwrap());
        out.d3.push(fields.next().unwrap());
        out.mu_lag.push(fields.next().unwrap());
        out.lam_lag.push(fields.next().unwrap());
        let [c1, c2, d2] = tc;
        out.c1.push(c1);
        out.c2.push(c2);
        out.d2.push(d2);
        let [c1l, c2l] = lag_t;
        out.c1_lag.push(c1l);
        out.c2_lag.push(c2l);
    }
    Ok(out)
}

/// Sensitivities (ξ, ρ, ω, ζ) of (φ, σ, u, z) in a control direction.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearizedTrajectory {
    pub xi: Vec<ScalarField>,
    pub rho: Vec<ScalarField>,
    pub omega: Vec<VectorField>,
    pub zeta: Vec<ScalarField>,
}

impl LinearizedTrajectory {
    pub fn levels(&self) -> usize {
        self.xi.len()
    }

    /// `L∞(H) ∩ L²(V)` norm summed over the four components.
    pub fn norm(&self, time: &TimeGrid) -> f64 {
        let g = *self.xi[0].grid();
        let mut total = 0.0;
        for comp in [&self.xi, &self.rho, &self.zeta] {
            let (mut linf, mut l2v) = (0.0f64, 0.0);
            for (n, f) in comp.iter().enumerate() {
                let l2 = weighted_dot(&g, f.values(), f.values());
                linf = linf.max(sqrt(l2));
                l2v += time.weight(n) * (l2 + grad_norm_sq_raw(&g, f.values()));
            }
            total += linf + sqrt(l2v);
        }
        let (mut linf, mut l2v) = (0.0f64, 0.0);
        for (n, v) in self.omega.iter().enumerate() {
            let l2 = weighted_dot(&g, v.x(), v.x()) + weighted_dot(&g, v.y(), v.y());
            linf = linf.max(sqrt(l2));
            l2v += time.weight(n) * crate::grid::vector_h1_sq(v);
        }
        total + linf + sqrt(l2v)
    }

    /// `a + s·b` componentwise.
    pub fn axpy(&self, s: f64, b: &LinearizedTrajectory) -> Result<LinearizedTrajectory> {
        let sc = |x: &Vec<ScalarField>, y: &Vec<ScalarField>| -> Result<Vec<ScalarField>> {
            x.iter().zip(y).map(|(p, q)| p.axpy(s, q)).collect()
        };
        Ok(LinearizedTrajectory {
            xi: sc(&self.xi, &b.xi)?,
            rho: sc(&self.rho, &b.rho)?,
            zeta: sc(&self.zeta, &b.zeta)?,
            omega: self.omega.iter().zip(&b.omega).map(|(p, q)| p.axpy(s, q)).collect::<Result<_>>()?,
        })
    }

    /// `S(χ + εh) − S(χ)` laid out as a sensitivity trajectory.
    pub fn difference(pert: &StateTrajectory, base: &StateTrajectory) -> Result<LinearizedTrajectory> {
        let sc = |x: &Vec<ScalarField>, y: &Vec<ScalarField>| -> Result<Vec<ScalarField>> {
            x.iter().zip(y).map(|(p, q)| p.axpy(-1.0, q)).collect()
        };
        Ok(LinearizedTrajectory {
            xi: sc(&pert.phi, &base.phi)?,
            rho: sc(&pert.sigma, &base.sigma)?,
            zeta: sc(&pert.z, &base.z)?,
            omega: pert.u.iter().zip(&base.u).map(|(p, q)| p.axpy(-1.0, q)).collect::<Result<_>>()?,
        })
    }
}

fn stress_parts(mu: &[f64], lam: &[f64], e: &SymTensorField, extra: impl Fn(usize) -> Sym2) -> [Vec<f64>; 3] {
    let n = mu.len();
    let (mut a, mut b, mut c) = (vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    for k in 0..n {
        let s = isotropic_stress(mu[k], lam[k], &e.at(k)).add(&extra(k));
        a[k] = s.xx;
        b[k] = s.yy;
        c[k] = s.xy;
    }
    [a, b, c]
}

/// Weak load of `−div S` for the increment elasticity solve.
pub(crate) fn load_of(grid: &Grid, weights: &[f64], map: &InteriorMap, parts: &[Vec<f64>; 3]) -> Vec<f64> {
    let mut load = vec![0.0; 2 * map.len()];
    stress_load(grid, weights, map, &parts[0], &parts[1], &parts[2], &mut load);
    load
}

/// Marches the sensitivity system with zero initial data in direction `h`.
pub fn solve_linearized(
    spec: &ModelSpec,
    coeffs: &LinearizedCoefficients,
    traj: &StateTrajectory,
    h: &Control,
    settings: &SolverSettings,
) -> Result<LinearizedTrajectory> {
    let g = spec.grid;
    let time = traj.time;
    h.check(&g, &time)?;
    let tau = time.tau();
    let nn = g.node_count();
    let w = g.weights();
    let map = InteriorMap::new(&g);
    let cg: CgSettings = settings.cg;
    let zero = ScalarField::zeros(g);
    let mut out = LinearizedTrajectory {
        xi: vec![zero.clone()],
        rho: vec![zero.clone()],
        omega: vec![VectorField::zeros(g)],
        zeta: vec![zero],
    };
    let mut lap = vec![0.0; nn];
    for n in 0..time.steps() {
        let (xi, rho, zeta) = (out.xi[n].values(), out.rho[n].values(), out.zeta[n].values());
        let (h1, h2) = (h.chi1[n].values(), h.chi2[n].values());

        apply_neumann(&g, xi, &mut lap);
        let r: Vec<f64> = (0..nn)
            .map(|k| {
                lap[k]
                    + coeffs.a1[n].values()[k] * xi[k]
                    + coeffs.a2[n].values()[k] * rho[k]
                    + coeffs.a3[n].values()[k] * zeta[k]
                    + coeffs.a4[n].values()[k] * h1[k]
            })
            .collect();
        let (xi_next, _) = implicit_increment(&g, &w, tau, false, None, xi, r, cg)?;

        apply_robin_linear(&g, rho, &mut lap);
        let r: Vec<f64> = (0..nn)
            .map(|k| {
                lap[k]
                    + coeffs.b1[n].values()[k] * xi[k]
                    + coeffs.b2[n].values()[k] * rho[k]
                    + coeffs.b3[n].values()[k] * zeta[k]
                    + coeffs.b4[n].values()[k] * h2[k]
            })
            .collect();
        let (rho_next, _) = implicit_increment(&g, &w, tau, true, None, rho, r, cg)?;

        let m = n + 1;
        let (mu, lam) = (coeffs.mu_lag[m].values(), coeffs.lam_lag[m].values());
        let e_old = sym_grad(&out.omega[n]);
        let (c1, c2) = (&coeffs.c1_lag[m], &coeffs.c2_lag[m]);
        let parts = stress_parts(mu, lam, &e_old, |k| c1.at(k).scale(-xi_next[k]).add(&c2.at(k).scale(-zeta[k])));
        let load = load_of(&g, &w, &map, &parts);
        let (delta, _) = elastic_solve(spec, &map, &w, mu, lam, tau, &load, cg)?;
        let omega_next = out.omega[n].axpy(1.0, &delta)?;

        let e_new = sym_grad(&omega_next);
        let react: Vec<f64> = coeffs.d3[m].values().iter().map(|d| -d).collect();
        apply_neumann(&g, zeta, &mut lap);
        let r: Vec<f64> = (0..nn)
            .map(|k| {
                lap[k] - react[k] * zeta[k]
                    + coeffs.d1[m].values()[k] * xi_next[k]
                    + coeffs.d2[m].at(k).ddot(&e_new.at(k))
            })
            .collect();
        let (zeta_next, _) = implicit_increment(&g, &w, tau, false, Some(&react), zeta, r, cg)?;

        out.xi.push(ScalarField::from_raw(g, xi_next));
        out.rho.push(ScalarField::from_raw(g, rho_next));
        out.omega.push(omega_next);
        out.zeta.push(ScalarField::from_raw(g, zeta_next));
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq)]
pub struct TaylorReport {
    pub epsilons: Vec<f64>,
    /// `‖S(χ+εh) − S(χ) − ε Dh‖`.
    pub remainder: Vec<f64>,
    /// `‖S(χ+εh) − S(χ)‖`.
    pub first_order: Vec<f64>,
    pub slope: f64,
    pub first_order_slope: f64,
}

/// Least-squares slope of `log y` against `log x`, skipping zero entries.
pub fn fitted_slope(x: &[f64], y: &[f64]) -> f64 {
    let pts: Vec<(f64, f64)> = x.iter().zip(y).filter(|(a, b)| **a > 0.0 && **b > 0.0).map(|(a, b)| (ln(*a), ln(*b))).collect();
    if pts.len() < 2 {
        return f64::NAN;
    }
    let n = pts.len() as f64;
    let (mx, my) = (pts.iter().map(|p| p.0).sum::<f64>() / n, pts.iter().map(|p| p.1).sum::<f64>() / n);
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    sxy / sxx
}

/// Remainder study of the control-to-state map along `h`.
pub fn taylor_test(
    spec: &ModelSpec,
    control: &Control,
    h: &Control,
    epsilons: &[f64],
    steps: usize,
    settings: &SolverSettings,
) -> Result<TaylorReport> {
    let base = solve_state(spec, control, steps, settings)?;
    let coeffs = assemble_coefficients(spec, &base, control)?;
    let lin = solve_linearized(spec, &coeffs, &base, h, settings)?;
    let mut remainder = Vec::with_capacity(epsilons.len());
    let mut first_order = Vec::with_capacity(epsilons.len());
    for &eps in epsilons {
        let pert = solve_state(spec, &control.axpy(eps, h)?, steps, settings)?;
        let diff = LinearizedTrajectory::difference(&pert, &base)?;
        first_order.push(diff.norm(&base.time));
        remainder.push(diff.axpy(-eps, &lin)?.norm(&base.time));
    }
    Ok(TaylorReport {
        epsilons: epsilons.to_vec(),
        slope: fitted_slope(epsilons, &remainder),
        first_order_slope: fitted_slope(epsilons, &first_order),
        remainder,
        first_order,
    })
}
