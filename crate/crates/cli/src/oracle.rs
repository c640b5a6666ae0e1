//! High-accuracy ODE references for spatially homogeneous data.
//!
//! With constant initial data, no body force, χ2 ≡ 0, no lactate
//! consumption (or no lactate) and σ0 ≡ σ_Γ, every field stays constant in
//! space: u ≡ 0, σ ≡ σ_Γ and
//!
//! ```text
//! φ' = U(φ, σ_Γ, z, χ1)
//! z' = ι − Ψ(φ, 0) − β(z) − π(z)
//! ```
//!
//! The adjoint reduces in the same way when additionally the proliferation
//! and death rates do not depend on σ and the lactate weights vanish:
//!
//! ```text
//! −q' = a1 q + d1 s + α1 (φ − φ_Q)
//! −s' = a3 q + d3 s + α7 (z − z_Q)
//! ```

use ode_solvers::{Dopri5, OutputType, SVector, System};
use tumorctl_core::adjoint::AdjointTrajectory;
use tumorctl_core::control::CostSpec;
use tumorctl_core::grid::{ScalarField, Sym2};
use tumorctl_core::linearized::point_coefficients;
use tumorctl_core::model::ModelSpec;
use tumorctl_core::state::{Control, StateTrajectory};

use crate::error::{CliError, CliResult};

pub const RTOL: f64 = 1e-11;
pub const ATOL: f64 = 1e-13;

/// Scalar data of a homogeneous run.
#[derive(Clone, Debug)]
pub struct Homogeneous {
    spec: ModelSpec,
    pub phi0: f64,
    pub sigma: f64,
    pub z0: f64,
    pub iota: f64,
    pub chi1: f64,
}

fn constant_value(f: &ScalarField, what: &str) -> CliResult<f64> {
    let (lo, hi) = (f.min(), f.max());
    if lo != hi {
        return Err(CliError::Usage(format!("{what} is not spatially constant ({lo} to {hi})")));
    }
    Ok(lo)
}

impl Homogeneous {
    /// Extracts the scalar data, or explains why the run does not reduce to ODEs.
    pub fn detect(spec: &ModelSpec, control: &Control) -> CliResult<Self> {
        let phi0 = constant_value(&spec.phi0, "phi0")?;
        let sigma = constant_value(&spec.sigma0, "sigma0")?;
        let z0 = constant_value(&spec.z0, "z0")?;
        let iota = constant_value(&spec.iota, "iota")?;
        let g = spec.grid;
        let boundary_sigma = (0..g.node_count()).filter(|&k| g.is_boundary(k)).map(|k| spec.sigma_gamma.values()[k]);
        if boundary_sigma.into_iter().any(|v| v != sigma) {
            return Err(CliError::Usage(String::from("sigma_gamma differs from the constant sigma0")));
        }
        if spec.f.max_abs() != 0.0 || spec.u0.max_abs() != 0.0 {
            return Err(CliError::Usage(String::from("body force and initial displacement must vanish")));
        }
        if control.chi2.iter().any(|f| f.max_abs() != 0.0) {
            return Err(CliError::Usage(String::from("chi2 must vanish")));
        }
        if !(spec.bounds.k1_star == 0.0 || sigma == 0.0) {
            return Err(CliError::Usage(String::from("lactate consumption must vanish (k1* = 0 or sigma = 0)")));
        }
        let chi1 = constant_value(&control.chi1[0], "chi1")?;
        if control.chi1.iter().any(|f| f.min() != chi1 || f.max() != chi1) {
            return Err(CliError::Usage(String::from("chi1 must be constant in space and time")));
        }
        Ok(Self { spec: spec.clone(), phi0, sigma, z0, iota, chi1 })
    }

    /// `(φ', z')`.
    pub fn rhs(&self, phi: f64, z: f64) -> [f64; 2] {
        let s = &self.spec;
        let psi = s.nl.psi(phi, &Sym2::ZERO).value;
        let pot = s.potential;
        let beta = pot.beta(z).unwrap_or(f64::NAN);
        [s.eval_u(phi, self.sigma, z, self.chi1), self.iota - psi - beta - pot.pi(z)]
    }
}

struct StateOde<'a>(&'a Homogeneous);

impl System<f64, SVector<f64, 2>> for StateOde<'_> {
    fn system(&self, _t: f64, y: &SVector<f64, 2>, dy: &mut SVector<f64, 2>) {
        let [a, b] = self.0.rhs(y[0], y[1]);
        dy[0] = a;
        dy[1] = b;
    }
}

/// Oracle values at the time nodes `t_n = n T / steps`.
#[derive(Clone, Debug, PartialEq)]
pub struct StateOracle {
    pub times: Vec<f64>,
    pub phi: Vec<f64>,
    pub z: Vec<f64>,
    /// `T · L · sup |F|` along the oracle path, with `L` the row-sum norm of
    /// the Jacobian of the right-hand side.
    pub scale: f64,
}

fn dense_error(e: impl std::fmt::Display) -> CliError {
    CliError::Usage(format!("ODE integration failed: {e}"))
}

/// `s ↦ y(t0 + dir·s)` with `dir = ±1`, so every integration runs forward in `s`.
struct Oriented<S> {
    inner: S,
    t0: f64,
    dir: f64,
}

impl<const D: usize, S: System<f64, SVector<f64, D>>> System<f64, SVector<f64, D>> for &Oriented<S> {
    fn system(&self, s: f64, y: &SVector<f64, D>, dy: &mut SVector<f64, D>) {
        self.inner.system(self.t0 + self.dir * s, y, dy);
        *dy *= self.dir;
    }
}

/// Values at the `steps + 1` equispaced nodes of `[t0, t1]` (either direction).
///
/// Each interval between nodes is integrated on its own so that every
/// node value is an accepted step endpoint rather than an interpolant.
fn sample<const D: usize, S: System<f64, SVector<f64, D>>>(
    sys: S,
    y0: SVector<f64, D>,
    t0: f64,
    t1: f64,
    steps: usize,
) -> CliResult<Vec<SVector<f64, D>>> {
    let span = (t1 - t0).abs();
    let sys = Oriented { inner: sys, t0, dir: if t1 >= t0 { 1.0 } else { -1.0 } };
    let node = |n: usize| span * n as f64 / steps as f64;
    let mut out = Vec::with_capacity(steps + 1);
    out.push(y0);
    for n in 0..steps {
        let y = integrate_segment(&sys, out[n], node(n), node(n + 1))?;
        out.push(y);
    }
    Ok(out)
}

fn integrate_segment<const D: usize, S: System<f64, SVector<f64, D>>>(
    sys: S,
    y0: SVector<f64, D>,
    a: f64,
    b: f64,
) -> CliResult<SVector<f64, D>> {
    let mut solver = Dopri5::new(sys, a, b, 0.0, y0, RTOL, ATOL);
    solver.set_output(OutputType::Sparse);
    solver.integrate().map_err(dense_error)?;
    let (ts, ys) = solver.results().get();
    match (ts.last(), ys.last()) {
        (Some(t), Some(y)) if (t - b).abs() <= 1e-12 * (1.0 + b.abs()) => Ok(*y),
        _ => Err(dense_error(format!("integration stopped short of t = {b}"))),
    }
}

pub fn state_oracle(h: &Homogeneous, steps: usize) -> CliResult<StateOracle> {
    let t_final = h.spec.t_final;
    let ys = sample(StateOde(h), SVector::<f64, 2>::new(h.phi0, h.z0), 0.0, t_final, steps)?;
    let times = (0..=steps).map(|n| t_final * n as f64 / steps as f64).collect();
    let phi: Vec<f64> = ys.iter().map(|y| y[0]).collect();
    let z: Vec<f64> = ys.iter().map(|y| y[1]).collect();
    let (mut lip, mut sup): (f64, f64) = (0.0, 0.0);
    for (p, zz) in phi.iter().zip(&z) {
        let f = h.rhs(*p, *zz);
        sup = sup.max(f[0].abs()).max(f[1].abs());
        let d = 1e-6;
        let fp = h.rhs(p + d, *zz);
        let fm = h.rhs(p - d, *zz);
        let gp = h.rhs(*p, zz + d);
        let gm = h.rhs(*p, zz - d);
        let row = |i: usize| ((fp[i] - fm[i]) / (2.0 * d)).abs() + ((gp[i] - gm[i]) / (2.0 * d)).abs();
        lip = lip.max(row(0)).max(row(1));
    }
    Ok(StateOracle { times, phi, z, scale: t_final * lip * sup })
}

/// Largest nodal deviation of a discrete trajectory from the oracle, over
/// φ, z, σ − σ_Γ and u.
pub fn state_sup_error(traj: &StateTrajectory, h: &Homogeneous, oracle: &StateOracle) -> CliResult<f64> {
    if traj.levels() != oracle.times.len() {
        return Err(CliError::Usage(String::from("oracle and trajectory use different time grids")));
    }
    let mut err: f64 = 0.0;
    for n in 0..traj.levels() {
        for (f, v) in [(&traj.phi[n], oracle.phi[n]), (&traj.z[n], oracle.z[n]), (&traj.sigma[n], h.sigma)] {
            err = err.max((f.max() - v).abs()).max((f.min() - v).abs());
        }
        err = err.max(traj.u[n].max_abs());
    }
    Ok(err)
}

/// Backward reference for `(q, s)`; `r` and `v` vanish identically.
#[derive(Clone, Debug, PartialEq)]
pub struct AdjointOracle {
    pub times: Vec<f64>,
    pub q: Vec<f64>,
    pub s: Vec<f64>,
}

struct AdjointOde<'a> {
    h: &'a Homogeneous,
    alpha: [f64; 9],
    phi_q: f64,
    z_q: f64,
}

impl System<f64, SVector<f64, 4>> for AdjointOde<'_> {
    fn system(&self, _t: f64, y: &SVector<f64, 4>, dy: &mut SVector<f64, 4>) {
        let (phi, z, q, s) = (y[0], y[1], y[2], y[3]);
        let [dphi, dz] = self.h.rhs(phi, z);
        let c = point_coefficients(&self.h.spec, phi, self.h.sigma, z, &Sym2::ZERO, self.h.chi1, 0.0);
        dy[0] = dphi;
        dy[1] = dz;
        dy[2] = -(c.a1 * q + c.d1 * s + self.alpha[0] * (phi - self.phi_q));
        dy[3] = -(c.a3 * q + c.d3 * s + self.alpha[6] * (z - self.z_q));
    }
}

/// Integrates the state forward to `T`, then state and adjoint together back to 0.
pub fn adjoint_oracle(h: &Homogeneous, cost: &CostSpec, steps: usize) -> CliResult<AdjointOracle> {
    let a = cost.alpha;
    if a[3] != 0.0 || a[4] != 0.0 {
        return Err(CliError::Usage(String::from("lactate weights alpha4, alpha5 must vanish")));
    }
    let spec = &h.spec;
    let probe = |phi: f64, z: f64| point_coefficients(spec, phi, h.sigma, z, &Sym2::ZERO, h.chi1, 0.0).a2;
    if [(0.1, 0.2), (0.5, 0.5), (0.9, 0.8)].iter().any(|&(p, z)| probe(p, z) != 0.0) {
        return Err(CliError::Usage(String::from("proliferation and death must not depend on lactate")));
    }
    let scalar = |fields: &[ScalarField], what: &str| -> CliResult<f64> {
        let v = constant_value(&fields[0], what)?;
        if fields.iter().any(|f| f.min() != v || f.max() != v) {
            return Err(CliError::Usage(format!("{what} must be constant in space and time")));
        }
        Ok(v)
    };
    let phi_q = scalar(&cost.phi_q, "phi_q")?;
    let z_q = scalar(&cost.z_q, "z_q")?;
    let phi_omega = constant_value(&cost.phi_omega, "phi_omega")?;

    let t_final = spec.t_final;
    let fwd = sample(StateOde(h), SVector::<f64, 2>::new(h.phi0, h.z0), 0.0, t_final, 1)?;
    let end = fwd[1];
    let q_t = a[1] * (end[0] - phi_omega) + a[2];
    let s_t = a[7];
    let sys = AdjointOde { h, alpha: a, phi_q, z_q };
    let ys = sample(sys, SVector::<f64, 4>::new(end[0], end[1], q_t, s_t), t_final, 0.0, steps)?;
    // `ys` runs backwards in time.
    let mut q: Vec<f64> = ys.iter().map(|y| y[2]).collect();
    let mut s: Vec<f64> = ys.iter().map(|y| y[3]).collect();
    q.reverse();
    s.reverse();
    let times = (0..=steps).map(|n| t_final * n as f64 / steps as f64).collect();
    Ok(AdjointOracle { times, q, s })
}

/// Largest nodal deviation of `(q, s)` from the oracle plus the sizes of `r` and `v`.
pub fn adjoint_sup_error(adj: &AdjointTrajectory, oracle: &AdjointOracle) -> CliResult<f64> {
    if adj.levels() != oracle.times.len() {
        return Err(CliError::Usage(String::from("oracle and adjoint use different time grids")));
    }
    let mut err: f64 = 0.0;
    for n in 0..adj.levels() {
        for (f, v) in [(&adj.q[n], oracle.q[n]), (&adj.s[n], oracle.s[n])] {
            err = err.max((f.max() - v).abs()).max((f.min() - v).abs());
        }
        err = err.max(adj.r[n].max_abs()).max(adj.v[n].max_abs());
    }
    Ok(err)
}

#[cfg(test)]
mod tests {
    use super::*;
    use tumorctl_core::grid::Grid;
    use tumorctl_core::scenario::homogeneous_spec;
    use tumorctl_core::state::TimeGrid;

    #[test]
    fn node_sampling_matches_exponential_decay_both_ways() {
        struct Decay;
        impl System<f64, SVector<f64, 1>> for Decay {
            fn system(&self, _t: f64, y: &SVector<f64, 1>, dy: &mut SVector<f64, 1>) {
                dy[0] = -2.0 * y[0];
            }
        }
        let ys = sample(Decay, SVector::<f64, 1>::new(1.0), 0.0, 1.5, 30).unwrap();
        for (n, y) in ys.iter().enumerate() {
            let t = 1.5 * n as f64 / 30.0;
            assert!((y[0] - (-2.0 * t).exp()).abs() < 1e-9, "t = {t}");
        }
        let back = sample(Decay, SVector::<f64, 1>::new(1.0), 1.0, 0.0, 10).unwrap();
        assert!((back[10][0] - 2f64.exp()).abs() < 1e-8);
    }

    #[test]
    fn detection_rejects_inhomogeneous_data() {
        let g = Grid::new(4, 4, 1.0, 1.0).unwrap();
        let spec = homogeneous_spec(g);
        let time = TimeGrid::new(spec.t_final, 4).unwrap();
        assert!(Homogeneous::detect(&spec, &Control::constant(g, &time, 0.3, 0.0)).is_ok());
        assert!(Homogeneous::detect(&spec, &Control::constant(g, &time, 0.3, 0.1)).is_err());
        let default = tumorctl_core::scenario::default_spec(g);
        assert!(Homogeneous::detect(&default, &Control::constant(g, &time, 0.3, 0.0)).is_err());
    }

    #[test]
    fn stationary_point_is_reproduced() {
        // φ ≡ 0 and z at the root of β + π = ι − Ψ(0, 0).
        let g = Grid::new(4, 4, 1.0, 1.0).unwrap();
        let mut spec = homogeneous_spec(g);
        spec.phi0 = ScalarField::zeros(g);
        let pot = spec.potential;
        let target = spec.iota.values()[0] - spec.nl.psi(0.0, &Sym2::ZERO).value;
        let (mut lo, mut hi) = (1e-9, 1.0 - 1e-9);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if pot.beta(mid).unwrap() + pot.pi(mid) < target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        spec.z0 = ScalarField::constant(g, lo);
        let time = TimeGrid::new(spec.t_final, 5).unwrap();
        let h = Homogeneous::detect(&spec, &Control::constant(g, &time, 0.3, 0.0)).unwrap();
        let o = state_oracle(&h, 5).unwrap();
        assert!(o.phi.iter().all(|p| *p == 0.0));
        assert!(o.z.iter().all(|z| (z - lo).abs() < 1e-10), "{:?}", o.z);
    }
}
