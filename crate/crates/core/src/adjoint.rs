//! Backward adjoint system and the duality pairing with the sensitivity system.

use alloc::vec;
use alloc::vec::Vec;

use crate::control::CostSpec;
use crate::grid::{apply_neumann, apply_robin_linear, sym_grad, ScalarField, Sym2, VectorField};
use crate::linearized::{load_of, LinearizedCoefficients, LinearizedTrajectory};
use crate::model::{isotropic_stress, ModelSpec};
use crate::ops::InteriorMap;
use crate::state::{elastic_solve, implicit_increment, Control, SolverSettings, StateTrajectory};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct AdjointTrajectory {
    pub q: Vec<ScalarField>,
    pub r: Vec<ScalarField>,
    pub v: Vec<VectorField>,
    pub s: Vec<ScalarField>,
}

impl AdjointTrajectory {
    pub fn levels(&self) -> usize {
        self.q.len()
    }
}

fn check_levels(expected: usize, found: usize) -> Result<()> {
    if expected != found {
        return Err(Error::TimeGridMismatch { expected, found });
    }
    Ok(())
}

/// Marches the adjoint system from the terminal conditions back to `t = 0`.
///
/// Diffusion (and the damage reaction `d3`) is implicit; couplings to `q`, `r`
/// use the later level, couplings to `s`, `v` use the level just computed.
pub fn solve_adjoint(
    spec: &ModelSpec,
    traj: &StateTrajectory,
    coeffs: &LinearizedCoefficients,
    cost: &CostSpec,
    settings: &SolverSettings,
) -> Result<AdjointTrajectory> {
    let g = spec.grid;
    let time = traj.time;
    cost.check(&g, &time)?;
    check_levels(time.levels(), coeffs.a1.len())?;
    let k_end = time.steps();
    let tau = time.tau();
    let nn = g.node_count();
    let w = g.weights();
    let map = InteriorMap::new(&g);
    let a = &cost.alpha;

    let mut q = vec![ScalarField::zeros(g); time.levels()];
    let mut r = q.clone();
    let mut s = q.clone();
    let mut v = vec![VectorField::zeros(g); time.levels()];
    let phi_t = traj.phi[k_end].values();
    let sig_t = traj.sigma[k_end].values();
    q[k_end] = ScalarField::from_raw(g, (0..nn).map(|k| a[1] * (phi_t[k] - cost.phi_omega.values()[k]) + a[2]).collect());
    r[k_end] = ScalarField::from_raw(g, (0..nn).map(|k| a[4] * (sig_t[k] - cost.sigma_omega.values()[k])).collect());
    s[k_end] = ScalarField::constant(g, a[7]);

    let mut lap = vec![0.0; nn];
    for n in (0..k_end).rev() {
        let (q1, r1, s1) = (q[n + 1].values(), r[n + 1].values(), s[n + 1].values());
        let ev1 = sym_grad(&v[n + 1]);
        let (phi, sigma, z) = (traj.phi[n].values(), traj.sigma[n].values(), traj.z[n].values());
        let eps = &traj.eps_u[n];

        let react: Vec<f64> = coeffs.d3[n].values().iter().map(|d| -d).collect();
        apply_neumann(&g, s1, &mut lap);
        let rhs: Vec<f64> = (0..nn)
            .map(|k| {
                lap[k] - react[k] * s1[k]
                    + coeffs.a3[n].values()[k] * q1[k]
                    + coeffs.b3[n].values()[k] * r1[k]
                    + coeffs.c2_lag[n + 1].at(k).ddot(&ev1.at(k))
                    + a[6] * (z[k] - cost.z_q[n].values()[k])
            })
            .collect();
        let (s_now, _) = implicit_increment(&g, &w, tau, false, Some(&react), s1, rhs, settings.cg)?;

        let (mu, lam) = (coeffs.mu_lag[n].values(), coeffs.lam_lag[n].values());
        let mut parts = [vec![0.0; nn], vec![0.0; nn], vec![0.0; nn]];
        for k in 0..nn {
            let e = eps.at(k);
            let (gam, _) = spec.eval_gamma(k, phi[k]);
            let src = coeffs.d2[n].at(k).scale(s_now[k]).add(&e.scale(a[5] * gam));
            let t = isotropic_stress(mu[k], lam[k], &ev1.at(k)).add(&src.scale(-1.0));
            parts[0][k] = t.xx;
            parts[1][k] = t.yy;
            parts[2][k] = t.xy;
        }
        let load = load_of(&g, &w, &map, &parts);
        let (delta, _) = elastic_solve(spec, &map, &w, mu, lam, tau, &load, settings.cg)?;
        let v_now = v[n + 1].axpy(1.0, &delta)?;

        apply_robin_linear(&g, r1, &mut lap);
        let rhs: Vec<f64> = (0..nn)
            .map(|k| {
                lap[k]
                    + coeffs.a2[n].values()[k] * q1[k]
                    + coeffs.b2[n].values()[k] * r1[k]
                    + a[3] * (sigma[k] - cost.sigma_q[n].values()[k])
            })
            .collect();
        let (r_now, _) = implicit_increment(&g, &w, tau, true, None, r1, rhs, settings.cg)?;

        let ev = sym_grad(&v_now);
        apply_neumann(&g, q1, &mut lap);
        let rhs: Vec<f64> = (0..nn)
            .map(|k| {
                let e = eps.at(k);
                let (_, dgam) = spec.eval_gamma(k, phi[k]);
                lap[k]
                    + coeffs.a1[n].values()[k] * q1[k]
                    + coeffs.b1[n].values()[k] * r1[k]
                    + coeffs.d1[n].values()[k] * s_now[k]
                    + coeffs.c1_lag[n].at(k).ddot(&ev.at(k))
                    + a[0] * (phi[k] - cost.phi_q[n].values()[k])
                    + 0.5 * a[5] * dgam * e.ddot(&e)
            })
            .collect();
        let (q_now, _) = implicit_increment(&g, &w, tau, false, None, q1, rhs, settings.cg)?;

        for (f, what) in [(&q_now, "adjoint q"), (&r_now, "adjoint r"), (&s_now, "adjoint s")] {
            if let Some(node) = f.iter().position(|x| !x.is_finite()) {
                return Err(Error::NonFinite { what, level: n, node });
            }
        }
        q[n] = ScalarField::from_raw(g, q_now);
        r[n] = ScalarField::from_raw(g, r_now);
        s[n] = ScalarField::from_raw(g, s_now);
        v[n] = v_now;
    }
    Ok(AdjointTrajectory { q, r, v, s })
}

/// Both sides of the duality identity.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DualitySides {
    /// `∫∫ (a4 h1 q + b4 h2 r)`.
    pub control_side: f64,
    /// Cost pairing of the sensitivity trajectory.
    pub cost_side: f64,
}

impl DualitySides {
    pub fn residual(&self) -> f64 {
        (self.control_side - self.cost_side).abs() / (self.control_side.abs() + self.cost_side.abs() + 1e-30)
    }
}

#[allow(clippy::too_many_arguments)]
pub fn duality_sides(
    spec: &ModelSpec,
    traj: &StateTrajectory,
    lin: &LinearizedTrajectory,
    adj: &AdjointTrajectory,
    coeffs: &LinearizedCoefficients,
    cost: &CostSpec,
    h: &Control,
) -> Result<DualitySides> {
    let g = spec.grid;
    let time = traj.time;
    h.check(&g, &time)?;
    cost.check(&g, &time)?;
    for l in [lin.levels(), adj.levels(), coeffs.a4.len()] {
        check_levels(time.levels(), l)?;
    }
    let nn = g.node_count();
    let w = g.weights();
    let a = &cost.alpha;
    let mut control_side = 0.0;
    let mut cost_side = 0.0;
    let mut buf = vec![0.0; nn];
    for n in 0..time.levels() {
        let wt = time.weight(n);
        for k in 0..nn {
            buf[k] = coeffs.a4[n].values()[k] * h.chi1[n].values()[k] * adj.q[n].values()[k]
                + coeffs.b4[n].values()[k] * h.chi2[n].values()[k] * adj.r[n].values()[k];
        }
        control_side += wt * buf.iter().zip(&w).map(|(b, w)| b * w).sum::<f64>();

        let eo = sym_grad(&lin.omega[n]);
        let (phi, sigma, z) = (traj.phi[n].values(), traj.sigma[n].values(), traj.z[n].values());
        for k in 0..nn {
            let e: Sym2 = traj.eps_u[n].at(k);
            let (gam, dgam) = spec.eval_gamma(k, phi[k]);
            buf[k] = a[0] * (phi[k] - cost.phi_q[n].values()[k]) * lin.xi[n].values()[k]
                + a[3] * (sigma[k] - cost.sigma_q[n].values()[k]) * lin.rho[n].values()[k]
                + a[5] * (0.5 * dgam * e.ddot(&e) * lin.xi[n].values()[k] + gam * e.ddot(&eo.at(k)))
                + a[6] * (z[k] - cost.z_q[n].values()[k]) * lin.zeta[n].values()[k];
        }
        cost_side += wt * buf.iter().zip(&w).map(|(b, w)| b * w).sum::<f64>();
    }
    let kt = time.steps();
    let (phi_t, sig_t) = (traj.phi[kt].values(), traj.sigma[kt].values());
    for k in 0..nn {
        buf[k] = (a[1] * (phi_t[k] - cost.phi_omega.values()[k]) + a[2]) * lin.xi[kt].values()[k]
            + a[4] * (sig_t[k] - cost.sigma_omega.values()[k]) * lin.rho[kt].values()[k]
            + a[7] * lin.zeta[kt].values()[k];
    }
    cost_side += buf.iter().zip(&w).map(|(b, w)| b * w).sum::<f64>();
    Ok(DualitySides { control_side, cost_side })
}

/// `|LHS − RHS| / (|LHS| + |RHS| + 1e-30)` of the duality identity.
#[allow(clippy::too_many_arguments)]
pub fn duality_residual(
    spec: &ModelSpec,
    traj: &StateTrajectory,
    lin: &LinearizedTrajectory,
    adj: &AdjointTrajectory,
    coeffs: &LinearizedCoefficients,
    cost: &CostSpec,
    h: &Control,
) -> Result<f64> {
    Ok(duality_sides(spec, traj, lin, adj, coeffs, cost, h)?.residual())
}
