//! Nonlinearities, data and scalar parameters of the four-field system.
//!
//! Every constitutive map is reached through the [`Nonlinearities`] trait so
//! that alternative families can be plugged in; [`DefaultLogisticFamily`] is
//! the stock instance, with every bound met by construction.

use alloc::format;
use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec::Vec;
use core::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::grid::{Grid, ScalarField, Sym2, VectorField};
use crate::math::{ln, logistic, logistic_prime, sqrt, tanh};
use crate::{Error, Result};

/// Value of a map of two scalars with both partial derivatives.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Eval2 {
    pub value: f64,
    pub d1: f64,
    pub d2: f64,
}

/// Isotropic Lamé moduli of the elastic tensor and their partials in (φ, z).
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Moduli {
    pub mu: f64,
    pub lam: f64,
    pub mu_phi: f64,
    pub lam_phi: f64,
    pub mu_z: f64,
    pub lam_z: f64,
}

/// `2 mu e + lam tr(e) I`.
#[inline]
pub fn isotropic_stress(mu: f64, lam: f64, e: &Sym2) -> Sym2 {
    let t = lam * e.trace();
    Sym2 { xx: 2.0 * mu * e.xx + t, yy: 2.0 * mu * e.yy + t, xy: 2.0 * mu * e.xy }
}

impl Moduli {
    pub fn stress(&self, e: &Sym2) -> Sym2 {
        isotropic_stress(self.mu, self.lam, e)
    }

    /// `∂_φ ℬ ε`.
    pub fn stress_phi(&self, e: &Sym2) -> Sym2 {
        isotropic_stress(self.mu_phi, self.lam_phi, e)
    }

    /// `∂_z ℬ ε`.
    pub fn stress_z(&self, e: &Sym2) -> Sym2 {
        isotropic_stress(self.mu_z, self.lam_z, e)
    }
}

/// Ψ with its gradient. `d_eps` is the tensor with `dΨ = d_eps : dε`.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct PsiEval {
    pub value: f64,
    pub d_phi: f64,
    pub d_eps: Sym2,
}

/// Bound constants declared alongside a family. The hypothesis checker
/// compares sampled values of the maps against these, so they may be edited
/// independently of the maps themselves.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DeclaredBounds {
    pub p_star: f64,
    pub g_star: f64,
    pub k1_star: f64,
    pub k2_low: f64,
    pub k2_star: f64,
    pub s_star: f64,
    pub mu_min: f64,
    pub psi_max: f64,
    /// Lipschitz constant of Ψ in the sense `|ΔΨ| ≤ C (|Δφ| + |Δε|_F)`.
    pub psi_lipschitz: f64,
    /// Bound on `γ̃ + |γ̃'|` over `[0, N]` (before the spatial weight).
    pub gamma_bound: f64,
}

pub trait Nonlinearities: Send + Sync + fmt::Debug {
    /// Proliferation `p(σ, z)`.
    fn p(&self, sigma: f64, z: f64) -> Eval2;
    /// Death rate `g(σ, z)`.
    fn g(&self, sigma: f64, z: f64) -> Eval2;
    fn k1(&self, phi: f64, z: f64) -> Eval2;
    fn k2(&self, phi: f64, z: f64) -> Eval2;
    /// Lactate source `S(φ, z)`.
    fn s(&self, phi: f64, z: f64) -> Eval2;
    fn moduli(&self, phi: f64, z: f64) -> Moduli;
    fn psi(&self, phi: f64, eps: &Sym2) -> PsiEval;
    /// Hessian of Ψ applied to `(dphi, deps)`: returns `(∂_φ(DΨ·d), ∂_ε(DΨ·d))`.
    fn psi_hessian_apply(&self, phi: f64, eps: &Sym2, dphi: f64, deps: &Sym2) -> (f64, Sym2);
    /// φ-profile `γ̃` of the cost weight `γ(x, φ) = w(x) γ̃(φ)`, with `γ̃'`.
    fn gamma(&self, phi: f64) -> (f64, f64);
    fn declared_bounds(&self) -> DeclaredBounds;
}

/// Logistic/tanh instantiation of every constitutive map.
///
/// ```text
/// p = p* L(η_p σ − 2z)            g = g* L(η_g z − σ − 1)
/// k1 = k1* L(2φ/N − z)            k2 = k2*
/// S = S* L(η_S φ/N − z − 1)
/// mu = mu_min + (mu_max − mu_min) L(a_B − b_B φ/N − c_B z), lam alike
/// Ψ = Ψ_max tanh(a_Ψ φ/N + b_Ψ ε:ε)
/// γ̃ = γ0 (1/2 + L(2φ/N − 1))
/// ```
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DefaultLogisticFamily {
    pub n_cap: f64,
    pub p_star: f64,
    pub g_star: f64,
    pub k1_star: f64,
    pub k2_star: f64,
    pub s_star: f64,
    pub mu_min: f64,
    pub mu_max: f64,
    pub lam_min: f64,
    pub lam_max: f64,
    pub psi_max: f64,
    pub gamma0: f64,
    pub eta_p: f64,
    pub eta_g: f64,
    pub eta_s: f64,
    pub a_b: f64,
    pub b_b: f64,
    pub c_b: f64,
    pub a_psi: f64,
    pub b_psi: f64,
}

impl Default for DefaultLogisticFamily {
    fn default() -> Self {
        Self {
            n_cap: 1.0,
            p_star: 2.0,
            g_star: 0.5,
            k1_star: 1.0,
            k2_star: 0.5,
            s_star: 1.0,
            mu_min: 0.5,
            mu_max: 1.5,
            lam_min: 0.5,
            lam_max: 1.0,
            psi_max: 0.5,
            gamma0: 1.0,
            eta_p: 1.0,
            eta_g: 2.0,
            eta_s: 4.0,
            a_b: 0.5,
            b_b: 1.0,
            c_b: 2.0,
            a_psi: 1.0,
            b_psi: 4.0,
        }
    }
}

/// Largest value of `s sech²(s²)` over `s ≥ 0`, rounded up.
const SECH_PEAK: f64 = 0.57;

impl DefaultLogisticFamily {
    fn logistic2(scale: f64, arg: f64, d1: f64, d2: f64) -> Eval2 {
        let lp = scale * logistic_prime(arg);
        Eval2 { value: scale * logistic(arg), d1: lp * d1, d2: lp * d2 }
    }
}

impl Nonlinearities for DefaultLogisticFamily {
    fn p(&self, sigma: f64, z: f64) -> Eval2 {
        Self::logistic2(self.p_star, self.eta_p * sigma - 2.0 * z, self.eta_p, -2.0)
    }

    fn g(&self, sigma: f64, z: f64) -> Eval2 {
        Self::logistic2(self.g_star, self.eta_g * z - sigma - 1.0, -1.0, self.eta_g)
    }

    fn k1(&self, phi: f64, z: f64) -> Eval2 {
        let n = self.n_cap;
        Self::logistic2(self.k1_star, 2.0 * phi / n - z, 2.0 / n, -1.0)
    }

    fn k2(&self, _phi: f64, _z: f64) -> Eval2 {
        Eval2 { value: self.k2_star, d1: 0.0, d2: 0.0 }
    }

    fn s(&self, phi: f64, z: f64) -> Eval2 {
        let n = self.n_cap;
        Self::logistic2(self.s_star, self.eta_s * phi / n - z - 1.0, self.eta_s / n, -1.0)
    }

    fn moduli(&self, phi: f64, z: f64) -> Moduli {
        let arg = self.a_b - self.b_b * phi / self.n_cap - self.c_b * z;
        let l = logistic(arg);
        let lp = logistic_prime(arg);
        let (dm, dl) = (self.mu_max - self.mu_min, self.lam_max - self.lam_min);
        let (aphi, az) = (-self.b_b / self.n_cap, -self.c_b);
        Moduli {
            mu: self.mu_min + dm * l,
            lam: self.lam_min + dl * l,
            mu_phi: dm * lp * aphi,
            lam_phi: dl * lp * aphi,
            mu_z: dm * lp * az,
            lam_z: dl * lp * az,
        }
    }

    fn psi(&self, phi: f64, eps: &Sym2) -> PsiEval {
        let arg = self.a_psi * phi / self.n_cap + self.b_psi * eps.norm_sq();
        let t = tanh(arg);
        let sech2 = 1.0 - t * t;
        let d = self.psi_max * sech2;
        PsiEval { value: self.psi_max * t, d_phi: d * self.a_psi / self.n_cap, d_eps: eps.scale(2.0 * self.b_psi * d) }
    }

    fn psi_hessian_apply(&self, phi: f64, eps: &Sym2, dphi: f64, deps: &Sym2) -> (f64, Sym2) {
        let ap = self.a_psi / self.n_cap;
        let arg = ap * phi + self.b_psi * eps.norm_sq();
        let t = tanh(arg);
        let sech2 = 1.0 - t * t;
        let (d1, d2) = (self.psi_max * sech2, -2.0 * self.psi_max * t * sech2);
        // arg' · d = ap dphi + 2 b ε:δε
        let darg = ap * dphi + 2.0 * self.b_psi * eps.ddot(deps);
        let h_phi = d2 * ap * darg;
        let h_eps = eps.scale(2.0 * self.b_psi * d2 * darg).add(&deps.scale(2.0 * self.b_psi * d1));
        (h_phi, h_eps)
    }

    fn gamma(&self, phi: f64) -> (f64, f64) {
        let arg = 2.0 * phi / self.n_cap - 1.0;
        (self.gamma0 * (0.5 + logistic(arg)), self.gamma0 * 2.0 / self.n_cap * logistic_prime(arg))
    }

    fn declared_bounds(&self) -> DeclaredBounds {
        DeclaredBounds {
            p_star: self.p_star,
            g_star: self.g_star,
            k1_star: self.k1_star,
            k2_low: self.k2_star,
            k2_star: self.k2_star,
            s_star: self.s_star,
            mu_min: self.mu_min,
            psi_max: self.psi_max,
            psi_lipschitz: self.psi_max
                * f64::max(self.a_psi.abs() / self.n_cap, 2.0 * SECH_PEAK * sqrt(self.b_psi.abs())),
            gamma_bound: self.gamma0 * (1.5 + 0.5 / self.n_cap),
        }
    }
}

/// The logistic family with a state-dependent `k2 = k2_low + (k2* − k2_low) L(φ/N − z)`,
/// used to exercise the general quotient-rule terms of the sensitivities.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct VaryingK2Family {
    pub base: DefaultLogisticFamily,
    pub k2_low: f64,
}

impl Nonlinearities for VaryingK2Family {
    fn p(&self, sigma: f64, z: f64) -> Eval2 {
        self.base.p(sigma, z)
    }
    fn g(&self, sigma: f64, z: f64) -> Eval2 {
        self.base.g(sigma, z)
    }
    fn k1(&self, phi: f64, z: f64) -> Eval2 {
        self.base.k1(phi, z)
    }
    fn k2(&self, phi: f64, z: f64) -> Eval2 {
        let n = self.base.n_cap;
        let e = DefaultLogisticFamily::logistic2(self.base.k2_star - self.k2_low, phi / n - z, 1.0 / n, -1.0);
        Eval2 { value: self.k2_low + e.value, ..e }
    }
    fn s(&self, phi: f64, z: f64) -> Eval2 {
        self.base.s(phi, z)
    }
    fn moduli(&self, phi: f64, z: f64) -> Moduli {
        self.base.moduli(phi, z)
    }
    fn psi(&self, phi: f64, eps: &Sym2) -> PsiEval {
        self.base.psi(phi, eps)
    }
    fn psi_hessian_apply(&self, phi: f64, eps: &Sym2, dphi: f64, deps: &Sym2) -> (f64, Sym2) {
        self.base.psi_hessian_apply(phi, eps, dphi, deps)
    }
    fn gamma(&self, phi: f64) -> (f64, f64) {
        self.base.gamma(phi)
    }
    fn declared_bounds(&self) -> DeclaredBounds {
        DeclaredBounds { k2_low: self.k2_low, ..self.base.declared_bounds() }
    }
}

/// Logarithmic potential `C1 [r ln r + (1−r) ln(1−r)] − C2 r²`, split into the
/// convex part (derivative β) and the concave part (derivative π).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LogPotential {
    pub c1: f64,
    pub c2: f64,
}

impl LogPotential {
    fn check(r: f64) -> Result<()> {
        if r > 0.0 && r < 1.0 {
            Ok(())
        } else {
            Err(Error::Domain { what: "logarithmic potential", value: r })
        }
    }

    pub fn beta(&self, r: f64) -> Result<f64> {
        Self::check(r)?;
        Ok(self.beta_unchecked(r))
    }

    pub fn beta_prime(&self, r: f64) -> Result<f64> {
        Self::check(r)?;
        Ok(self.beta_prime_unchecked(r))
    }

    pub fn beta_second(&self, r: f64) -> Result<f64> {
        Self::check(r)?;
        Ok(self.c1 * (2.0 * r - 1.0) / (r * r * (1.0 - r) * (1.0 - r)))
    }

    #[inline]
    pub(crate) fn beta_unchecked(&self, r: f64) -> f64 {
        self.c1 * (ln(r) - ln(1.0 - r))
    }

    #[inline]
    pub(crate) fn beta_prime_unchecked(&self, r: f64) -> f64 {
        self.c1 / (r * (1.0 - r))
    }

    /// `π(r) = −2 C2 r`, defined on all of ℝ.
    #[inline]
    pub fn pi(&self, r: f64) -> f64 {
        -2.0 * self.c2 * r
    }

    #[inline]
    pub fn pi_prime(&self) -> f64 {
        -2.0 * self.c2
    }
}

/// Everything that defines one instance of the state system on a grid.
#[derive(Clone, Debug)]
pub struct ModelSpec {
    pub grid: Grid,
    /// Carrying capacity N.
    pub n_cap: f64,
    pub nl: Arc<dyn Nonlinearities>,
    /// Lamé constants of the viscous tensor 𝒜.
    pub a_mu: f64,
    pub a_lam: f64,
    pub potential: LogPotential,
    /// Body force, constant in time.
    pub f: VectorField,
    /// Damage source, constant in time.
    pub iota: ScalarField,
    /// Boundary lactate datum (only boundary values are used).
    pub sigma_gamma: ScalarField,
    /// Spatial weight `w(x) ≥ 0` in `γ(x, φ) = w(x) γ̃(φ)`.
    pub gamma_weight: ScalarField,
    pub phi0: ScalarField,
    pub sigma0: ScalarField,
    pub u0: VectorField,
    pub z0: ScalarField,
    pub m0: f64,
    pub t_final: f64,
    pub bounds: DeclaredBounds,
}

impl ModelSpec {
    /// Every field on `self.grid`, every number finite.
    pub fn validate(&self) -> Result<()> {
        let g = self.grid;
        let scalars = [
            ("iota", &self.iota),
            ("sigma_gamma", &self.sigma_gamma),
            ("gamma_weight", &self.gamma_weight),
            ("phi0", &self.phi0),
            ("sigma0", &self.sigma0),
            ("z0", &self.z0),
        ];
        for (what, s) in scalars {
            if *s.grid() != g {
                return Err(Error::GridMismatch);
            }
            if let Some(node) = s.values().iter().position(|v| !v.is_finite()) {
                return Err(Error::NonFinite { what, level: 0, node });
            }
        }
        for (what, v) in [("f", &self.f), ("u0", &self.u0)] {
            if *v.grid() != g {
                return Err(Error::GridMismatch);
            }
            if !v.is_finite() {
                return Err(Error::NonFinite { what, level: 0, node: 0 });
            }
        }
        let scalars = [self.n_cap, self.a_mu, self.a_lam, self.potential.c1, self.potential.c2, self.m0, self.t_final];
        if scalars.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("non-finite scalar parameter"));
        }
        if !(self.n_cap > 0.0) {
            return Err(Error::InvalidParameter("carrying capacity must be positive"));
        }
        if !(self.t_final > 0.0) {
            return Err(Error::InvalidParameter("horizon must be positive"));
        }
        Ok(())
    }

    /// `U(φ,σ,z,χ1) = (p(σ,z) − χ1) φ (1 − φ/N) − φ g(σ,z)`.
    pub fn eval_u(&self, phi: f64, sigma: f64, z: f64, chi1: f64) -> f64 {
        let p = self.nl.p(sigma, z).value;
        let g = self.nl.g(sigma, z).value;
        (p - chi1) * phi * (1.0 - phi / self.n_cap) - phi * g
    }

    /// Michaelis–Menten consumption `k1 σ / (k2 + σ)`.
    pub fn eval_k(&self, phi: f64, sigma: f64, z: f64) -> Result<f64> {
        let k2 = self.nl.k2(phi, z).value;
        if sigma <= -self.bounds.k2_low || k2 + sigma <= 0.0 {
            return Err(Error::Domain { what: "lactate consumption", value: sigma });
        }
        Ok(self.eval_k_unchecked(phi, sigma, z))
    }

    #[inline]
    pub(crate) fn eval_k_unchecked(&self, phi: f64, sigma: f64, z: f64) -> f64 {
        let k1 = self.nl.k1(phi, z).value;
        let k2 = self.nl.k2(phi, z).value;
        k1 * sigma / (k2 + sigma)
    }

    /// `(mu, lam)` of ℬ(φ, z).
    pub fn eval_b(&self, phi: f64, z: f64) -> (f64, f64) {
        let m = self.nl.moduli(phi, z);
        (m.mu, m.lam)
    }

    pub fn eval_psi(&self, phi: f64, eps: &Sym2) -> PsiEval {
        self.nl.psi(phi, eps)
    }

    /// `γ(x_k, φ)` and `∂_φ γ` at node `k`.
    pub fn eval_gamma(&self, k: usize, phi: f64) -> (f64, f64) {
        let w = self.gamma_weight.values()[k];
        let (g, dg) = self.nl.gamma(phi);
        (w * g, w * dg)
    }

    /// Heuristic lactate cap `max(M0, max σ0) + T χ2_max S*`.
    pub fn sigma_cap(&self, chi2_max: f64) -> f64 {
        self.m0.max(self.sigma0.max()) + self.t_final * chi2_max.max(0.0) * self.bounds.s_star
    }

    /// `‖ι‖∞ + Ψ_max`.
    pub fn separation_margin(&self) -> f64 {
        self.iota.max_abs() + self.bounds.psi_max
    }
}

// ---------------------------------------------------------------------------
// Hypothesis checking.

#[derive(Clone, Debug, PartialEq)]
pub struct HypothesisResult {
    pub id: u8,
    pub name: &'static str,
    pub passed: bool,
    pub samples: usize,
    /// Description of the worst sampled violation, if any.
    pub witness: Option<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct HypothesisReport {
    pub results: Vec<HypothesisResult>,
}

impl HypothesisReport {
    pub fn all_passed(&self) -> bool {
        self.results.iter().all(|r| r.passed)
    }

    pub fn violations(&self) -> usize {
        self.results.iter().filter(|r| !r.passed).count()
    }

    pub fn get(&self, id: u8) -> Option<&HypothesisResult> {
        self.results.iter().find(|r| r.id == id)
    }
}

impl fmt::Display for HypothesisReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for r in &self.results {
            let status = if r.passed { "pass" } else { "FAIL" };
            write!(f, "H{:<2} {:<36} {status} ({} samples)", r.id, r.name, r.samples)?;
            if let Some(w) = &r.witness {
                write!(f, "  worst: {w}")?;
            }
            writeln!(f)?;
        }
        Ok(())
    }
}

/// Cost data seen by the checker (weights and targets).
pub struct CostView<'a> {
    pub alpha: &'a [f64; 9],
    pub targets: Vec<(&'static str, &'a ScalarField)>,
}

/// Tracks the largest excess of a sampled quantity over its allowed range.
struct Worst {
    excess: f64,
    witness: Option<String>,
    samples: usize,
}

impl Worst {
    fn new() -> Self {
        Self { excess: 0.0, witness: None, samples: 0 }
    }

    /// Record `value` that must lie in `[lo, hi]`.
    fn range(&mut self, value: f64, lo: f64, hi: f64, label: impl FnOnce() -> String) {
        self.samples += 1;
        let excess = if value.is_nan() { f64::INFINITY } else { (lo - value).max(value - hi) };
        if excess > self.excess || (excess > 0.0 && self.witness.is_none()) {
            self.excess = excess;
            self.witness = Some(format!("{} = {value:.6e} outside [{lo:.6e}, {hi:.6e}]", label()));
        }
    }

    fn finish(self, id: u8, name: &'static str) -> HypothesisResult {
        HypothesisResult { id, name, passed: self.excess <= 0.0 && self.witness.is_none(), samples: self.samples, witness: self.witness }
    }
}

fn rel_gap(a: f64, b: f64) -> f64 {
    (a - b).abs() / (a.abs() + b.abs()).max(1e-4)
}

/// Samples every hypothesis on randomized arguments (`budget` draws per
/// hypothesis, deterministic in `seed`). Cost-related hypotheses H11, H12 are
/// checked only when `cost` is given.
pub fn check_hypotheses(spec: &ModelSpec, cost: Option<&CostView<'_>>, budget: usize, seed: u64) -> HypothesisReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let nl = &*spec.nl;
    let b = spec.bounds;
    let n = spec.n_cap;
    let scale = spec.m0.max(1.0);
    let budget = budget.max(1);
    let mut results = Vec::new();

    // Smoothness is probed by comparing analytic partials with central differences.
    let fd = |f: &dyn Fn(f64, f64) -> f64, x: f64, y: f64| {
        let h = 1e-6;
        ((f(x + h, y) - f(x - h, y)) / (2.0 * h), (f(x, y + h) - f(x, y - h)) / (2.0 * h))
    };

    let mut h1 = Worst::new();
    if !(n > 0.0) {
        h1.range(n, f64::MIN_POSITIVE, f64::INFINITY, || String::from("N"));
    }
    for _ in 0..budget {
        let sigma = rng.random_range(-10.0 * scale..10.0 * scale);
        let z = rng.random_range(-2.0..3.0);
        let p = nl.p(sigma, z);
        let g = nl.g(sigma, z);
        h1.range(p.value, 0.0, b.p_star, || format!("p({sigma:.4}, {z:.4})"));
        h1.range(g.value, 0.0, b.g_star, || format!("g({sigma:.4}, {z:.4})"));
        let (ps, pz) = fd(&|s, z| nl.p(s, z).value, sigma, z);
        let (gs, gz) = fd(&|s, z| nl.g(s, z).value, sigma, z);
        let gap = rel_gap(ps, p.d1).max(rel_gap(pz, p.d2)).max(rel_gap(gs, g.d1)).max(rel_gap(gz, g.d2));
        h1.range(gap, 0.0, 1e-4, || format!("derivative mismatch of p, g at ({sigma:.4}, {z:.4})"));
    }
    results.push(h1.finish(1, "p, g bounded and smooth; N > 0"));

    let mut h2 = Worst::new();
    if !(b.k2_low > 0.0) {
        h2.range(b.k2_low, f64::MIN_POSITIVE, f64::INFINITY, || String::from("declared k2 lower bound"));
    }
    for _ in 0..budget {
        let phi = rng.random_range(-n..2.0 * n);
        let z = rng.random_range(-2.0..3.0);
        let k1 = nl.k1(phi, z);
        let k2 = nl.k2(phi, z);
        let s = nl.s(phi, z);
        h2.range(k1.value, 0.0, b.k1_star, || format!("k1({phi:.4}, {z:.4})"));
        h2.range(k2.value, b.k2_low, b.k2_star, || format!("k2({phi:.4}, {z:.4})"));
        h2.range(s.value, 0.0, b.s_star, || format!("S({phi:.4}, {z:.4})"));
        let mut gap: f64 = 0.0;
        for (e, f) in [
            (k1, &(|a, c| nl.k1(a, c).value) as &dyn Fn(f64, f64) -> f64),
            (k2, &|a, c| nl.k2(a, c).value),
            (s, &|a, c| nl.s(a, c).value),
        ] {
            let (d1, d2) = fd(f, phi, z);
            gap = gap.max(rel_gap(d1, e.d1)).max(rel_gap(d2, e.d2));
        }
        h2.range(gap, 0.0, 1e-4, || format!("derivative mismatch of k1, k2, S at ({phi:.4}, {z:.4})"));
    }
    results.push(h2.finish(2, "k1, k2, S bounded; k2 bounded below"));

    let mut h3 = Worst::new();
    h3.range(spec.a_mu, f64::MIN_POSITIVE, f64::INFINITY, || String::from("viscous mu"));
    h3.range(spec.a_mu + spec.a_lam, f64::MIN_POSITIVE, f64::INFINITY, || String::from("viscous mu + lam"));
    for _ in 0..budget {
        let phi = rng.random_range(-n..2.0 * n);
        let z = rng.random_range(-2.0..3.0);
        let m = nl.moduli(phi, z);
        h3.range(m.mu, b.mu_min.max(f64::MIN_POSITIVE), f64::INFINITY, || format!("elastic mu({phi:.4}, {z:.4})"));
        h3.range(m.mu + m.lam, f64::MIN_POSITIVE, f64::INFINITY, || format!("elastic mu + lam({phi:.4}, {z:.4})"));
        let (mp, mz) = fd(&|a, c| nl.moduli(a, c).mu, phi, z);
        let (lp, lz) = fd(&|a, c| nl.moduli(a, c).lam, phi, z);
        let gap = rel_gap(mp, m.mu_phi).max(rel_gap(mz, m.mu_z)).max(rel_gap(lp, m.lam_phi)).max(rel_gap(lz, m.lam_z));
        h3.range(gap, 0.0, 1e-4, || format!("derivative mismatch of moduli at ({phi:.4}, {z:.4})"));
    }
    h3.range(if spec.f.is_finite() { 0.0 } else { 1.0 }, 0.0, 0.0, || String::from("body force finiteness flag"));
    results.push(h3.finish(3, "viscous and elastic tensors positive definite"));

    let pot = spec.potential;
    let mut h4 = Worst::new();
    h4.range(pot.c1, f64::MIN_POSITIVE, f64::INFINITY, || String::from("C1"));
    for _ in 0..budget {
        let r = rng.random_range(1e-9..1.0 - 1e-9);
        h4.range(pot.beta_prime_unchecked(r), 0.0, f64::INFINITY, || format!("beta'({r:.6})"));
    }
    if pot.c1 > 0.0 {
        h4.range(pot.beta_unchecked(1e-12), f64::NEG_INFINITY, 0.0, || String::from("beta near 0"));
        h4.range(pot.beta_unchecked(1.0 - 1e-12), 0.0, f64::INFINITY, || String::from("beta near 1"));
    }
    results.push(h4.finish(4, "beta monotone with logarithmic blow-up"));

    let mut h5 = Worst::new();
    h5.range(pot.c2, 0.0, f64::INFINITY, || String::from("C2 (concavity of the quadratic part)"));
    results.push(h5.finish(5, "pi Lipschitz, pi-hat concave"));

    let mut h6 = Worst::new();
    h6.range(if spec.iota.is_finite() { 0.0 } else { 1.0 }, 0.0, 0.0, || String::from("iota finiteness flag"));
    results.push(h6.finish(6, "iota bounded"));

    let mut h7 = Worst::new();
    let rand_eps = |rng: &mut ChaCha8Rng| {
        Sym2::new(rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0))
    };
    for _ in 0..budget {
        let phi = rng.random_range(-n..2.0 * n);
        let e = rand_eps(&mut rng);
        let v = nl.psi(phi, &e).value;
        h7.range(v, -b.psi_max, b.psi_max, || format!("Psi({phi:.4}, |eps| = {:.4})", sqrt(e.norm_sq())));
        let phi2 = phi + rng.random_range(-0.5..0.5);
        let e2 = e.add(&rand_eps(&mut rng).scale(0.1));
        let dist = (phi - phi2).abs() + sqrt(e.add(&e2.scale(-1.0)).norm_sq());
        let lip = (v - nl.psi(phi2, &e2).value).abs() / dist.max(1e-300);
        h7.range(lip, 0.0, b.psi_lipschitz, || format!("Psi difference quotient at phi = {phi:.4}"));
    }
    results.push(h7.finish(7, "Psi bounded and Lipschitz"));

    let mut h8 = Worst::new();
    for (k, &v) in spec.sigma_gamma.values().iter().enumerate() {
        if spec.grid.is_boundary(k) {
            h8.range(v, 0.0, spec.m0, || format!("sigma_Gamma at node {k}"));
        }
    }
    results.push(h8.finish(8, "0 <= sigma_Gamma <= M0"));

    let mut h9 = Worst::new();
    for (k, &v) in spec.phi0.values().iter().enumerate() {
        h9.range(v, 0.0, n, || format!("phi0 at node {k}"));
    }
    for (k, &v) in spec.sigma0.values().iter().enumerate() {
        h9.range(v, 0.0, spec.m0, || format!("sigma0 at node {k}"));
    }
    let tiny = 1e-12;
    for (k, &v) in spec.z0.values().iter().enumerate() {
        h9.range(v, tiny, 1.0 - tiny, || format!("z0 at node {k}"));
    }
    h9.range(spec.u0.boundary_max_abs(), 0.0, 0.0, || String::from("u0 on the boundary"));
    results.push(h9.finish(9, "initial data in range, z0 inside (0,1)"));

    let mut h10 = Worst::new();
    h10.range(spec.t_final, f64::MIN_POSITIVE, f64::INFINITY, || String::from("T"));
    h10.range(spec.m0, f64::MIN_POSITIVE, f64::INFINITY, || String::from("M0"));
    h10.range(spec.f.max_abs(), 0.0, f64::MAX, || String::from("max |f|"));
    results.push(h10.finish(10, "scalar data positive, force bounded"));

    if let Some(c) = cost {
        let mut h11 = Worst::new();
        for (i, &a) in c.alpha.iter().enumerate() {
            h11.range(a, 0.0, f64::INFINITY, || format!("alpha{}", i + 1));
        }
        let total: f64 = c.alpha.iter().sum();
        h11.range(total, f64::MIN_POSITIVE, f64::INFINITY, || String::from("sum of alphas"));
        results.push(h11.finish(11, "cost weights nonnegative, not all zero"));

        let mut h12 = Worst::new();
        for (name, t) in &c.targets {
            h12.range(if t.is_finite() { 0.0 } else { 1.0 }, 0.0, 0.0, || format!("{name} finiteness flag"));
        }
        results.push(h12.finish(12, "targets square integrable"));
    }

    let mut h13 = Worst::new();
    let wmax = spec.gamma_weight.max_abs();
    h13.range(spec.gamma_weight.min(), 0.0, f64::INFINITY, || String::from("min gamma weight"));
    for _ in 0..budget {
        let phi = rng.random_range(0.0..=n);
        let (g, dg) = nl.gamma(phi);
        h13.range(g, 0.0, f64::INFINITY, || format!("gamma({phi:.4})"));
        h13.range(wmax * (g.abs() + dg.abs()), 0.0, wmax * b.gamma_bound, || format!("|gamma| + |gamma'| at {phi:.4}"));
        let h = 1e-6;
        let d = (nl.gamma(phi + h).0 - nl.gamma(phi - h).0) / (2.0 * h);
        h13.range(rel_gap(d, dg), 0.0, 1e-4, || format!("derivative mismatch of gamma at {phi:.4}"));
    }
    results.push(h13.finish(13, "gamma nonnegative, C1, bounded"));

    HypothesisReport { results }
}

// ---------------------------------------------------------------------------
// Separation bounds.

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SeparationBounds {
    pub r_low: f64,
    pub r_high: f64,
    /// Roots of `β + π = ∓b` before tightening towards the initial data.
    pub root_low: f64,
    pub root_high: f64,
    pub margin: f64,
}

/// Smallest `r` that the root search will resolve; roots closer to 0 or 1 are reported as infeasible.
pub const SEPARATION_WINDOW: f64 = 1e-12;

/// Separation interval for margin `b = ‖ι‖∞ + Ψ_max` and the initial damage range.
pub fn separation_bounds(spec: &ModelSpec) -> Result<SeparationBounds> {
    separation_bounds_for(spec.potential, spec.separation_margin(), spec.z0.min(), spec.z0.max())
}

/// Same as [`separation_bounds`] with explicit margin and initial range.
///
/// `r_low` is the first zero of `β + π + b` (so the sign condition holds on
/// the whole of `(0, r_low]`) lowered to `inf z0` if needed; `r_high`
/// symmetrically from the right.
pub fn separation_bounds_for(pot: LogPotential, b: f64, z0_min: f64, z0_max: f64) -> Result<SeparationBounds> {
    if !(pot.c1 > 0.0) {
        return Err(Error::InvalidParameter("C1 must be positive"));
    }
    if !(z0_min > 0.0 && z0_max < 1.0 && z0_min <= z0_max) {
        return Err(Error::SeparationInfeasible {
            condition: if z0_min <= 0.0 { 1 } else { 2 },
            detail: format!("initial damage range [{z0_min}, {z0_max}] is not inside (0, 1)"),
        });
    }
    let lo_fn = |r: f64| pot.beta_unchecked(r) + pot.pi(r) + b;
    let hi_fn = |r: f64| pot.beta_unchecked(r) + pot.pi(r) - b;
    let w = SEPARATION_WINDOW;

    // Left: F = β + π + b ≤ 0 on (0, r]. Scan upward for the first positive sample.
    let root_low = first_crossing(&lo_fn, w, 1.0 - w, true).ok_or_else(|| Error::SeparationInfeasible {
        condition: 3,
        detail: format!("beta + pi + {b} is positive already at r = {w:e}"),
    })?;
    let root_high = first_crossing(&hi_fn, 1.0 - w, w, false).ok_or_else(|| Error::SeparationInfeasible {
        condition: 4,
        detail: format!("beta + pi - {b} is negative already at r = 1 - {w:e}"),
    })?;
    let r_low = root_low.min(z0_min);
    let r_high = root_high.max(z0_max);
    Ok(SeparationBounds { r_low, r_high, root_low, root_high, margin: b })
}

/// Walks from `start` towards `end` and returns the last point at which `f`
/// still has the sign required by the separation condition (≤ 0 going up,
/// ≥ 0 going down), refined by bisection to 1e-12. `None` if the condition
/// already fails at `start`.
fn first_crossing(f: &dyn Fn(f64) -> f64, start: f64, end: f64, upward: bool) -> Option<f64> {
    let ok = |v: f64| if upward { v <= 0.0 } else { v >= 0.0 };
    if !ok(f(start)) {
        return None;
    }
    // Uniform in the logit variable so that both ends are resolved.
    let to_logit = |r: f64| ln(r) - ln(1.0 - r);
    let (a, bnd) = (to_logit(start), to_logit(end));
    let steps = 20_000;
    let mut prev = start;
    for i in 1..=steps {
        let r = logistic(a + (bnd - a) * i as f64 / steps as f64);
        if !ok(f(r)) {
            let (mut good, mut bad) = (prev, r);
            while (bad - good).abs() > 1e-12 {
                let mid = 0.5 * (good + bad);
                if ok(f(mid)) {
                    good = mid;
                } else {
                    bad = mid;
                }
            }
            return Some(good);
        }
        prev = r;
    }
    Some(end)
}

impl SeparationBounds {
    /// Re-evaluates both sign conditions at `samples` points per interval.
    pub fn verify(&self, pot: LogPotential, samples: usize) -> bool {
        let f = |r: f64| pot.beta_unchecked(r) + pot.pi(r);
        let n = samples.max(2);
        (0..n).all(|i| {
            let t = (i as f64 + 0.5) / n as f64;
            let rl = SEPARATION_WINDOW + t * (self.r_low - SEPARATION_WINDOW);
            let rh = self.r_high + t * (1.0 - SEPARATION_WINDOW - self.r_high);
            f(rl) + self.margin <= 0.0 && f(rh) - self.margin >= 0.0
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario;
    use core::f64::consts::E;

    fn fam() -> DefaultLogisticFamily {
        DefaultLogisticFamily::default()
    }

    #[test]
    fn u_vanishes_at_zero_and_reduces_at_capacity() {
        let spec = scenario::default_spec(Grid::new(8, 8, 1.0, 1.0).unwrap());
        assert_eq!(spec.eval_u(0.0, 0.7, 0.3, 0.2), 0.0);
        let n = spec.n_cap;
        let g = spec.nl.g(0.7, 0.3).value;
        assert!((spec.eval_u(n, 0.7, 0.3, 0.2) + n * g).abs() < 1e-15);
    }

    #[test]
    fn u_matches_independent_evaluation() {
        // Oracle: the logistic written as tanh, (1 + tanh(x/2)) / 2.
        let spec = scenario::default_spec(Grid::new(8, 8, 1.0, 1.0).unwrap());
        let f = fam();
        let (phi, sigma, z, chi) = (f.n_cap / 2.0, 1.0, 0.3, 0.1);
        let lg = |x: f64| 0.5 * (1.0 + (0.5 * x).tanh());
        let p = f.p_star * lg(f.eta_p * sigma - 2.0 * z);
        let g = f.g_star * lg(f.eta_g * z - sigma - 1.0);
        let expected = (p - chi) * phi * (1.0 - phi / f.n_cap) - phi * g;
        assert!((spec.eval_u(phi, sigma, z, chi) - expected).abs() < 1e-14);
    }

    #[test]
    fn k_limits_and_oracle() {
        let spec = scenario::default_spec(Grid::new(8, 8, 1.0, 1.0).unwrap());
        assert_eq!(spec.eval_k(0.4, 0.0, 0.2).unwrap(), 0.0);
        let k1 = spec.nl.k1(0.4, 0.2).value;
        assert!((spec.eval_k(0.4, 1e6, 0.2).unwrap() - k1).abs() < 1e-5 * k1);
        let f = fam();
        let lg = |x: f64| 0.5 * (1.0 + (0.5 * x).tanh());
        let k1 = f.k1_star * lg(2.0 * 0.5 / f.n_cap - 0.1);
        let expected = k1 * 2.0 / (f.k2_star + 2.0);
        assert!((spec.eval_k(0.5, 2.0, 0.1).unwrap() - expected).abs() < 1e-14);
        assert!(spec.eval_k(0.5, -f.k2_star, 0.1).is_err());
    }

    #[test]
    fn log_potential_values() {
        let pot = LogPotential { c1: 1.0, c2: 0.3 };
        assert_eq!(pot.beta(0.5).unwrap(), 0.0);
        assert!((pot.beta(0.01).unwrap() - (1.0f64 / 99.0).ln()).abs() < 1e-12);
        assert!((pot.beta(0.01).unwrap() + 4.59512).abs() < 1e-5);
        assert!(pot.beta(0.0).is_err() && pot.beta(1.0).is_err() && pot.beta_prime(1.5).is_err());
        assert_eq!(pot.pi(2.0), -1.2);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..50 {
            let r: f64 = rng.random_range(0.0..1.0);
            if r > 0.0 {
                assert!(pot.beta_prime(r).unwrap() > 0.0);
            }
        }
    }

    #[test]
    fn moduli_stay_in_range_and_decrease_with_damage() {
        let f = fam();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..100 {
            let m = f.moduli(rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0));
            assert!(m.mu > f.mu_min && m.mu < f.mu_max);
            assert!(m.lam > f.lam_min && m.lam < f.lam_max);
        }
        let mut prev = f64::INFINITY;
        for i in 0..20 {
            let mu = f.moduli(0.0, i as f64 * 0.1).mu;
            assert!(mu < prev);
            prev = mu;
        }
    }

    #[test]
    fn stress_of_identity() {
        let m = Moduli { mu: 0.7, lam: 1.3, ..Default::default() };
        let s = m.stress(&Sym2::IDENTITY);
        // 2 mu I + lam tr(I) I = (2 mu + 2 lam) I in two dimensions.
        assert!((s.xx - 4.0).abs() < 1e-15 && (s.yy - 4.0).abs() < 1e-15 && s.xy == 0.0);
        let s = m.stress(&Sym2::new(0.0, 0.0, 1.0));
        assert_eq!(s, Sym2::new(0.0, 0.0, 1.4));
    }

    fn fd_check(analytic: f64, f: impl Fn(f64) -> f64, x: f64) {
        let h = 1e-5 * x.abs().max(1.0);
        let fd = (f(x + h) - f(x - h)) / (2.0 * h);
        let err = (fd - analytic).abs() / analytic.abs().max(1e-6);
        assert!(err < 1e-6, "fd {fd} analytic {analytic}");
    }

    #[test]
    fn psi_basics_and_derivatives() {
        let f = fam();
        assert_eq!(f.psi(0.0, &Sym2::ZERO).value, 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..100 {
            let phi = rng.random_range(-1.0..2.0);
            let e = Sym2::new(rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5));
            let p = f.psi(phi, &e);
            assert!(p.value.abs() <= f.psi_max);
            fd_check(p.d_phi, |x| f.psi(x, &e).value, phi);
            let dir = Sym2::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
            fd_check(p.d_eps.ddot(&dir), |t| f.psi(phi, &e.add(&dir.scale(t))).value, 0.0);
            // Hessian-vector product against differences of the gradient
            let dphi = rng.random_range(-1.0..1.0);
            let (hp, he) = f.psi_hessian_apply(phi, &e, dphi, &dir);
            let gp = |t: f64| f.psi(phi + t * dphi, &e.add(&dir.scale(t)));
            fd_check(hp, |t| gp(t).d_phi, 0.0);
            let probe = Sym2::new(0.3, -0.2, 0.7);
            fd_check(he.ddot(&probe), |t| gp(t).d_eps.ddot(&probe), 0.0);
        }
    }

    #[test]
    fn analytic_partials_match_differences() {
        let fams: [&dyn Nonlinearities; 2] = [&fam(), &VaryingK2Family { base: fam(), k2_low: 0.2 }];
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for nl in fams {
            for _ in 0..100 {
                let (a, z) = (rng.random_range(-1.0..2.0), rng.random_range(-0.5..1.5));
                for (e, f) in [
                    (nl.p(a, z), &(|x, y| nl.p(x, y).value) as &dyn Fn(f64, f64) -> f64),
                    (nl.g(a, z), &|x, y| nl.g(x, y).value),
                    (nl.k1(a, z), &|x, y| nl.k1(x, y).value),
                    (nl.k2(a, z), &|x, y| nl.k2(x, y).value),
                    (nl.s(a, z), &|x, y| nl.s(x, y).value),
                ] {
                    if e.d1 != 0.0 {
                        fd_check(e.d1, |x| f(x, z), a);
                    }
                    if e.d2 != 0.0 {
                        fd_check(e.d2, |y| f(a, y), z);
                    }
                }
                let m = nl.moduli(a, z);
                fd_check(m.mu_phi, |x| nl.moduli(x, z).mu, a);
                fd_check(m.mu_z, |y| nl.moduli(a, y).mu, z);
                fd_check(m.lam_phi, |x| nl.moduli(x, z).lam, a);
                fd_check(m.lam_z, |y| nl.moduli(a, y).lam, z);
                fd_check(nl.gamma(a).1, |x| nl.gamma(x).0, a);
            }
        }
        let pot = LogPotential { c1: 0.8, c2: 0.4 };
        for _ in 0..100 {
            let r = rng.random_range(0.01..0.99);
            fd_check(pot.beta_prime(r).unwrap(), |x| pot.beta_unchecked(x), r);
            fd_check(pot.beta_second(r).unwrap(), |x| pot.beta_prime_unchecked(x), r);
            fd_check(pot.pi_prime(), |x| pot.pi(x), r);
        }
    }

    #[test]
    fn default_family_passes_all_hypotheses() {
        let spec = scenario::default_spec(Grid::new(8, 8, 1.0, 1.0).unwrap());
        let report = check_hypotheses(&spec, None, 10_000, 7);
        assert!(report.all_passed(), "{report}");
        assert_eq!(report.results.len(), 11);
    }

    #[test]
    fn lowered_p_star_fails_h1() {
        let mut spec = scenario::default_spec(Grid::new(8, 8, 1.0, 1.0).unwrap());
        spec.bounds.p_star *= 0.5;
        let report = check_hypotheses(&spec, None, 1000, 7);
        let h1 = report.get(1).unwrap();
        assert!(!h1.passed && h1.witness.as_deref().unwrap().starts_with("p("));
        assert_eq!(report.violations(), 1);
    }

    #[test]
    fn zero_initial_damage_fails_h9() {
        let mut spec = scenario::default_spec(Grid::new(8, 8, 1.0, 1.0).unwrap());
        spec.z0 = ScalarField::zeros(spec.grid);
        let report = check_hypotheses(&spec, None, 100, 7);
        assert!(!report.get(9).unwrap().passed);
    }

    #[test]
    fn closed_form_separation() {
        let pot = LogPotential { c1: 1.0, c2: 0.0 };
        let s = separation_bounds_for(pot, 2.0, 0.3, 0.6).unwrap();
        assert!((s.root_low - 1.0 / (1.0 + E * E)).abs() < 1e-9);
        assert!((s.root_high - 1.0 / (1.0 + 1.0 / (E * E))).abs() < 1e-9);
        assert!((s.r_low - 0.11920).abs() < 1e-5 && (s.r_high - 0.88080).abs() < 1e-5);
        assert!(s.verify(pot, 1000));
    }

    #[test]
    fn separation_with_zero_margin_brackets_initial_data() {
        let pot = LogPotential { c1: 1.0, c2: 0.0 };
        let s = separation_bounds_for(pot, 0.0, 0.2, 0.7).unwrap();
        assert!(s.r_low <= 0.2 && s.r_high >= 0.7);
        assert!(s.r_low < 0.5 + 1e-9 && s.r_high > 0.5 - 1e-9);
        assert!(s.verify(pot, 1000));
    }

    #[test]
    fn tightening_to_initial_data() {
        let pot = LogPotential { c1: 1.0, c2: 0.0 };
        let s = separation_bounds_for(pot, 2.0, 0.05, 0.95).unwrap();
        assert_eq!((s.r_low, s.r_high), (0.05, 0.95));
    }

    #[test]
    fn small_c1_is_infeasible() {
        // C1 ln(r/(1−r)) ≥ −27.6 C1 > −b on the whole window when C1 < b/27.7.
        let pot = LogPotential { c1: 0.01, c2: 0.0 };
        let oracle = |r: f64| 0.01 * (r / (1.0 - r)).ln() + 1.0;
        assert!(oracle(SEPARATION_WINDOW) > 0.0 && oracle(0.4) > 0.0);
        match separation_bounds_for(pot, 1.0, 0.4, 0.6) {
            Err(Error::SeparationInfeasible { condition, .. }) => assert_eq!(condition, 3),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn non_monotone_potential_uses_first_crossing() {
        // Strong concave part: β + π dips and rises again.
        let pot = LogPotential { c1: 0.2, c2: 1.0 };
        let s = separation_bounds_for(pot, 0.1, 0.45, 0.55).unwrap();
        assert!(s.verify(pot, 2000));
    }

    proptest::proptest! {
        #[test]
        fn separation_bounds_satisfy_sign_conditions(c1 in 0.2f64..3.0, c2 in 0.0f64..1.0, b in 0.0f64..3.0, lo in 0.05f64..0.5, width in 0.0f64..0.4) {
            let pot = LogPotential { c1, c2 };
            if let Ok(s) = separation_bounds_for(pot, b, lo, lo + width) {
                proptest::prop_assert!(s.verify(pot, 1000));
                proptest::prop_assert!(s.r_low <= lo && s.r_high >= lo + width);
            }
        }
    }
}
