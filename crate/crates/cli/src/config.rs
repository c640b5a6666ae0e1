//! Run configuration read from a single TOML file.
//!
//! Every block except `grid` and `time` is optional and falls back to the
//! default scenario. Field expressions are either a bare number or a table
//! tagged with `kind`:
//!
//! ```toml
//! phi0 = { kind = "gaussian", amplitude = 0.6, x0 = 0.5, y0 = 0.5, width = 0.15 }
//! z0 = { kind = "sum", terms = [0.35, { kind = "gaussian", amplitude = 0.1, x0 = 0.5, y0 = 0.5, width = 0.2 }] }
//! ```

use std::path::Path;
use std::sync::Arc;

use serde::Deserialize;
use tumorctl_core::control::{AdmissibleBox, CostSpec, OptimizerSettings};
use tumorctl_core::expr::FieldExpr;
use tumorctl_core::grid::{Grid, ScalarField, VectorField};
use tumorctl_core::model::{DefaultLogisticFamily, LogPotential, ModelSpec, Nonlinearities, VaryingK2Family};
use tumorctl_core::scenario;
use tumorctl_core::state::{solve_state, Control, SolverSettings, TimeGrid};
use tumorctl_core::cg::CgSettings;

use crate::error::{CliError, CliResult};

#[derive(Clone, Debug, Deserialize)]
#[serde(untagged)]
pub enum Expr {
    Number(f64),
    Tagged(TaggedExpr),
}

#[derive(Clone, Debug, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TaggedExpr {
    Constant { value: f64 },
    Gaussian { amplitude: f64, x0: f64, y0: f64, width: f64 },
    TanhFront { inside: f64, outside: f64, x0: f64, y0: f64, radius: f64, width: f64 },
    Cosine { amplitude: f64, kx: u32, ky: u32 },
    Sum { terms: Vec<Expr> },
    Scaled { factor: f64, expr: Box<Expr> },
}

impl Expr {
    pub fn to_field_expr(&self) -> FieldExpr {
        match self {
            Expr::Number(c) => FieldExpr::Constant(*c),
            Expr::Tagged(t) => match t {
                TaggedExpr::Constant { value } => FieldExpr::Constant(*value),
                TaggedExpr::Gaussian { amplitude, x0, y0, width } => {
                    FieldExpr::Gaussian { amplitude: *amplitude, x0: *x0, y0: *y0, width: *width }
                }
                TaggedExpr::TanhFront { inside, outside, x0, y0, radius, width } => FieldExpr::TanhFront {
                    inside: *inside,
                    outside: *outside,
                    x0: *x0,
                    y0: *y0,
                    radius: *radius,
                    width: *width,
                },
                TaggedExpr::Cosine { amplitude, kx, ky } => FieldExpr::CosineMode { amplitude: *amplitude, kx: *kx, ky: *ky },
                TaggedExpr::Sum { terms } => FieldExpr::Sum(terms.iter().map(Expr::to_field_expr).collect()),
                TaggedExpr::Scaled { factor, expr } => FieldExpr::Scaled(*factor, Box::new(expr.to_field_expr())),
            },
        }
    }

    pub fn sample(&self, grid: Grid) -> ScalarField {
        self.to_field_expr().sample(grid)
    }

    fn gaussian(amplitude: f64, x0: f64, y0: f64, width: f64) -> Expr {
        Expr::Tagged(TaggedExpr::Gaussian { amplitude, x0, y0, width })
    }

    fn plus(c: f64, e: Expr) -> Expr {
        Expr::Tagged(TaggedExpr::Sum { terms: vec![Expr::Number(c), e] })
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: u64,
    pub grid: GridConfig,
    pub time: TimeConfig,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub control: ControlConfig,
    #[serde(default)]
    pub cost: CostConfig,
    #[serde(default)]
    pub admissible: AdmissibleConfig,
    #[serde(default)]
    pub optimizer: OptimizerConfig,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub output: OutputConfig,
    #[serde(default)]
    pub gradient_check: GradientCheckConfig,
    #[serde(default)]
    pub hypotheses: HypothesisConfig,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub nx: usize,
    pub ny: usize,
    #[serde(default = "one", alias = "Lx")]
    pub lx: f64,
    #[serde(default = "one", alias = "Ly")]
    pub ly: f64,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeConfig {
    #[serde(default = "one", alias = "T")]
    pub t_final: f64,
    pub steps: usize,
}

fn one() -> f64 {
    1.0
}

/// Parameters of the logistic family; any omitted entry keeps its default.
/// Setting `k2_low` switches to the state-dependent `k2` variant.
#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FamilyConfig {
    pub p_star: Option<f64>,
    pub g_star: Option<f64>,
    pub k1_star: Option<f64>,
    pub k2_star: Option<f64>,
    pub s_star: Option<f64>,
    pub mu_min: Option<f64>,
    pub mu_max: Option<f64>,
    pub lam_min: Option<f64>,
    pub lam_max: Option<f64>,
    pub psi_max: Option<f64>,
    pub gamma0: Option<f64>,
    pub eta_p: Option<f64>,
    pub eta_g: Option<f64>,
    pub eta_s: Option<f64>,
    pub a_b: Option<f64>,
    pub b_b: Option<f64>,
    pub c_b: Option<f64>,
    pub a_psi: Option<f64>,
    pub b_psi: Option<f64>,
    pub k2_low: Option<f64>,
}

impl FamilyConfig {
    pub fn build(&self, n_cap: f64) -> Arc<dyn Nonlinearities> {
        let d = DefaultLogisticFamily::default();
        let base = DefaultLogisticFamily {
            n_cap,
            p_star: self.p_star.unwrap_or(d.p_star),
            g_star: self.g_star.unwrap_or(d.g_star),
            k1_star: self.k1_star.unwrap_or(d.k1_star),
            k2_star: self.k2_star.unwrap_or(d.k2_star),
            s_star: self.s_star.unwrap_or(d.s_star),
            mu_min: self.mu_min.unwrap_or(d.mu_min),
            mu_max: self.mu_max.unwrap_or(d.mu_max),
            lam_min: self.lam_min.unwrap_or(d.lam_min),
            lam_max: self.lam_max.unwrap_or(d.lam_max),
            psi_max: self.psi_max.unwrap_or(d.psi_max),
            gamma0: self.gamma0.unwrap_or(d.gamma0),
            eta_p: self.eta_p.unwrap_or(d.eta_p),
            eta_g: self.eta_g.unwrap_or(d.eta_g),
            eta_s: self.eta_s.unwrap_or(d.eta_s),
            a_b: self.a_b.unwrap_or(d.a_b),
            b_b: self.b_b.unwrap_or(d.b_b),
            c_b: self.c_b.unwrap_or(d.c_b),
            a_psi: self.a_psi.unwrap_or(d.a_psi),
            b_psi: self.b_psi.unwrap_or(d.b_psi),
        };
        match self.k2_low {
            Some(k2_low) => Arc::new(VaryingK2Family { base, k2_low }),
            None => Arc::new(base),
        }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub n_cap: f64,
    pub a_mu: f64,
    pub a_lam: f64,
    #[serde(alias = "C1")]
    pub c1: f64,
    #[serde(alias = "C2")]
    pub c2: f64,
    #[serde(alias = "M0")]
    pub m0: f64,
    pub family: FamilyConfig,
    pub iota: Expr,
    pub sigma_gamma: Expr,
    pub gamma_weight: Expr,
    pub phi0: Expr,
    pub sigma0: Expr,
    pub z0: Expr,
    pub u0_x: Expr,
    pub u0_y: Expr,
    pub force_x: Expr,
    pub force_y: Expr,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            n_cap: 1.0,
            a_mu: 0.5,
            a_lam: 0.25,
            c1: 0.5,
            c2: 0.2,
            m0: 1.0,
            family: FamilyConfig::default(),
            iota: Expr::Number(0.2),
            sigma_gamma: Expr::Number(0.5),
            gamma_weight: Expr::Number(1.0),
            phi0: Expr::gaussian(0.6, 0.5, 0.5, 0.15),
            sigma0: Expr::plus(0.5, Expr::gaussian(0.3, 0.5, 0.5, 0.2)),
            z0: Expr::plus(0.35, Expr::gaussian(0.1, 0.5, 0.5, 0.2)),
            u0_x: Expr::Number(0.0),
            u0_y: Expr::Number(0.0),
            force_x: Expr::gaussian(2.0, 0.45, 0.5, 0.2),
            force_y: Expr::gaussian(1.0, 0.5, 0.55, 0.2),
        }
    }
}

#[derive(Clone, Copy, Debug, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum ControlPreset {
    /// The smooth, time-varying control of the default scenario.
    Default,
}

/// Base control, constant in time unless `preset` is given.
#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ControlConfig {
    pub preset: Option<ControlPreset>,
    pub chi1: Expr,
    pub chi2: Expr,
}

impl Default for ControlConfig {
    fn default() -> Self {
        Self { preset: None, chi1: Expr::Number(0.3), chi2: Expr::Number(0.5) }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CostConfig {
    pub alpha: [f64; 9],
    pub phi_q: Expr,
    pub sigma_q: Expr,
    pub z_q: Expr,
    pub phi_omega: Expr,
    pub sigma_omega: Expr,
    /// Constant `(χ1, χ2)` whose trajectory replaces all targets.
    pub synthetic_truth: Option<[f64; 2]>,
}

impl Default for CostConfig {
    fn default() -> Self {
        Self {
            alpha: [1.0, 1.0, 0.1, 1.0, 1.0, 0.1, 1.0, 0.1, 1e-3],
            phi_q: Expr::gaussian(0.3, 0.5, 0.5, 0.2),
            sigma_q: Expr::Number(0.6),
            z_q: Expr::Number(0.4),
            phi_omega: Expr::gaussian(0.3, 0.5, 0.5, 0.2),
            sigma_omega: Expr::Number(0.6),
            synthetic_truth: None,
        }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdmissibleConfig {
    pub chi1_low: Expr,
    pub chi1_high: Expr,
    pub chi2_low: Expr,
    pub chi2_high: Expr,
    #[serde(alias = "C_ad")]
    pub c_ad: f64,
}

impl Default for AdmissibleConfig {
    fn default() -> Self {
        Self {
            chi1_low: Expr::Number(0.0),
            chi1_high: Expr::Number(1.0),
            chi2_low: Expr::Number(0.0),
            chi2_high: Expr::Number(1.0),
            c_ad: 100.0,
        }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimizerConfig {
    pub lambda0: f64,
    pub shrink: f64,
    pub armijo: f64,
    pub max_iter: usize,
    pub max_backtracks: usize,
    pub tol_rel: f64,
    pub tol_abs: f64,
    /// Random probes added to the corners when evaluating the first-order inequality.
    pub vi_probes: usize,
    /// Accept a first-order residual down to `−vi_tol · scale`.
    pub vi_tol: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        let s = OptimizerSettings::default();
        Self {
            lambda0: s.lambda0,
            shrink: s.shrink,
            armijo: s.armijo,
            max_iter: s.max_iter,
            max_backtracks: s.max_backtracks,
            tol_rel: s.tol_rel,
            tol_abs: s.tol_abs,
            vi_probes: 8,
            vi_tol: 1e-6,
        }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    pub cg_tol: f64,
    pub newton_tol: f64,
    pub newton_max_iter: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        let s = SolverSettings::default();
        Self { cg_tol: s.cg.rel_tol, newton_tol: s.newton_tol, newton_max_iter: s.newton_max_iter }
    }
}

#[derive(Clone, Copy, Debug, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum SnapshotFormat {
    Csv,
    Binary,
    Both,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub dir: String,
    /// Write every `stride`-th time level (the final level is always written).
    pub stride: usize,
    pub format: SnapshotFormat,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { dir: String::from("out"), stride: 10, format: SnapshotFormat::Csv }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DirectionConfig {
    pub chi1: Expr,
    pub chi2: Expr,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GradientCheckConfig {
    /// Random smooth directions compared against finite differences.
    pub directions: usize,
    pub fd_eps: f64,
    pub epsilons: Vec<f64>,
    /// Relative gradient error allowed at the configured resolution; halved
    /// per `--refine` level and doubled per coarsening.
    pub tolerance: f64,
    pub min_slope: f64,
    /// Fixed direction (constant in time) used instead of the random ones.
    pub direction: Option<DirectionConfig>,
}

impl Default for GradientCheckConfig {
    fn default() -> Self {
        Self { directions: 5, fd_eps: 1e-3, epsilons: vec![1e-1, 1e-2, 1e-3, 1e-4], tolerance: 1e-2, min_slope: 1.25, direction: None }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HypothesisConfig {
    /// Random draws per hypothesis.
    pub budget: usize,
}

impl Default for HypothesisConfig {
    fn default() -> Self {
        Self { budget: 10_000 }
    }
}

impl std::str::FromStr for RunConfig {
    type Err = CliError;

    fn from_str(text: &str) -> CliResult<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| CliError::Read { path: path.to_path_buf(), source })?;
        text.parse()
    }

    fn validate(&self) -> CliResult<()> {
        self.grid()?;
        self.time_grid()?;
        if self.output.stride == 0 {
            return Err(CliError::Config(String::from("output.stride must be at least 1")));
        }
        if self.cost.alpha.iter().any(|a| !a.is_finite() || *a < 0.0) {
            return Err(CliError::Config(String::from("cost.alpha entries must be finite and nonnegative")));
        }
        let o = &self.optimizer;
        if !(o.lambda0 > 0.0) || !(o.shrink > 0.0 && o.shrink < 1.0) || !(o.armijo > 0.0 && o.armijo < 1.0) {
            return Err(CliError::Config(String::from("optimizer needs lambda0 > 0 and shrink, armijo in (0, 1)")));
        }
        let gc = &self.gradient_check;
        if !(gc.fd_eps > 0.0) || gc.epsilons.len() < 2 || gc.epsilons.iter().any(|e| !(*e > 0.0)) {
            return Err(CliError::Config(String::from(
                "gradient_check needs fd_eps > 0 and at least two positive epsilons",
            )));
        }
        Ok(())
    }

    /// Doubles (or, for negative `levels`, halves) the grid resolution and the
    /// step count `|levels|` times.
    pub fn refined(&self, levels: i32) -> CliResult<RunConfig> {
        let mut out = self.clone();
        for _ in 0..levels.unsigned_abs() {
            if levels > 0 {
                out.grid.nx *= 2;
                out.grid.ny *= 2;
                out.time.steps *= 2;
            } else {
                let (g, t) = (&mut out.grid, &mut out.time);
                if g.nx % 2 != 0 || g.ny % 2 != 0 || t.steps % 2 != 0 || g.nx < 8 || g.ny < 8 {
                    return Err(CliError::Usage(format!(
                        "cannot coarsen {}x{} cells with {} steps by {} levels",
                        self.grid.nx,
                        self.grid.ny,
                        self.time.steps,
                        -levels
                    )));
                }
                g.nx /= 2;
                g.ny /= 2;
                t.steps /= 2;
            }
        }
        if levels > 0 {
            out.output.stride *= 1 << levels.min(16);
        }
        Ok(out)
    }

    pub fn grid(&self) -> CliResult<Grid> {
        Grid::new(self.grid.nx, self.grid.ny, self.grid.lx, self.grid.ly).map_err(|e| CliError::Config(format!("grid: {e}")))
    }

    pub fn time_grid(&self) -> CliResult<TimeGrid> {
        TimeGrid::new(self.time.t_final, self.time.steps).map_err(|e| CliError::Config(format!("time: {e}")))
    }

    pub fn solver_settings(&self) -> SolverSettings {
        SolverSettings {
            cg: CgSettings { rel_tol: self.solver.cg_tol, ..CgSettings::default() },
            newton_tol: self.solver.newton_tol,
            newton_max_iter: self.solver.newton_max_iter,
        }
    }

    pub fn optimizer_settings(&self) -> OptimizerSettings {
        let o = &self.optimizer;
        OptimizerSettings {
            lambda0: o.lambda0,
            shrink: o.shrink,
            armijo: o.armijo,
            max_iter: o.max_iter,
            max_backtracks: o.max_backtracks,
            tol_rel: o.tol_rel,
            tol_abs: o.tol_abs,
        }
    }

    pub fn spec(&self) -> CliResult<ModelSpec> {
        let g = self.grid()?;
        let m = &self.model;
        let nl = m.family.build(m.n_cap);
        let bounds = nl.declared_bounds();
        let spec = ModelSpec {
            grid: g,
            n_cap: m.n_cap,
            nl,
            a_mu: m.a_mu,
            a_lam: m.a_lam,
            potential: LogPotential { c1: m.c1, c2: m.c2 },
            f: VectorField::from_components(m.force_x.sample(g), m.force_y.sample(g))?,
            iota: m.iota.sample(g),
            sigma_gamma: m.sigma_gamma.sample(g),
            gamma_weight: m.gamma_weight.sample(g),
            phi0: m.phi0.sample(g),
            sigma0: m.sigma0.sample(g),
            u0: VectorField::from_components(m.u0_x.sample(g), m.u0_y.sample(g))?,
            z0: m.z0.sample(g),
            m0: m.m0,
            t_final: self.time.t_final,
            bounds,
        };
        spec.validate().map_err(|e| CliError::Config(format!("model: {e}")))?;
        Ok(spec)
    }

    pub fn control(&self) -> CliResult<Control> {
        let g = self.grid()?;
        let time = self.time_grid()?;
        Ok(match self.control.preset {
            Some(ControlPreset::Default) => scenario::default_control(g, &time),
            None => constant_in_time(g, &time, &self.control.chi1, &self.control.chi2),
        })
    }

    /// Fixed gradient-check direction, if configured.
    pub fn direction(&self) -> CliResult<Option<Control>> {
        let Some(d) = &self.gradient_check.direction else { return Ok(None) };
        Ok(Some(constant_in_time(self.grid()?, &self.time_grid()?, &d.chi1, &d.chi2)))
    }

    /// Cost data; a synthetic truth costs one forward solve.
    pub fn cost(&self, spec: &ModelSpec) -> CliResult<CostSpec> {
        let g = spec.grid;
        let time = self.time_grid()?;
        let c = &self.cost;
        let levels = time.levels();
        if let Some([c1, c2]) = c.synthetic_truth {
            let truth = Control::constant(g, &time, c1, c2);
            let traj = solve_state(spec, &truth, time.steps(), &self.solver_settings())?;
            let kt = time.steps();
            return Ok(CostSpec {
                alpha: c.alpha,
                phi_omega: traj.phi[kt].clone(),
                sigma_omega: traj.sigma[kt].clone(),
                phi_q: traj.phi,
                sigma_q: traj.sigma,
                z_q: traj.z,
            });
        }
        Ok(CostSpec {
            alpha: c.alpha,
            phi_q: vec![c.phi_q.sample(g); levels],
            sigma_q: vec![c.sigma_q.sample(g); levels],
            z_q: vec![c.z_q.sample(g); levels],
            phi_omega: c.phi_omega.sample(g),
            sigma_omega: c.sigma_omega.sample(g),
        })
    }

    pub fn admissible(&self) -> CliResult<AdmissibleBox> {
        let g = self.grid()?;
        let time = self.time_grid()?;
        let a = &self.admissible;
        let levels = time.levels();
        AdmissibleBox::new(
            vec![a.chi1_low.sample(g); levels],
            vec![a.chi1_high.sample(g); levels],
            vec![a.chi2_low.sample(g); levels],
            vec![a.chi2_high.sample(g); levels],
            a.c_ad,
        )
        .map_err(|e| CliError::Config(format!("admissible: {e}")))
    }
}

fn constant_in_time(g: Grid, time: &TimeGrid, chi1: &Expr, chi2: &Expr) -> Control {
    let (a, b) = (chi1.sample(g), chi2.sample(g));
    Control { chi1: vec![a; time.levels()], chi2: vec![b; time.levels()] }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "[grid]\nnx = 8\nny = 8\n[time]\nsteps = 4\n";

    #[test]
    fn minimal_config_uses_the_default_scenario() {
        let cfg: RunConfig = MINIMAL.parse().unwrap();
        let spec = cfg.spec().unwrap();
        let reference = scenario::default_spec(cfg.grid().unwrap());
        assert_eq!(spec.phi0, reference.phi0);
        assert_eq!(spec.z0, reference.z0);
        assert_eq!(spec.f, reference.f);
        assert_eq!(spec.potential, reference.potential);
        let time = cfg.time_grid().unwrap();
        assert_eq!(cfg.cost(&spec).unwrap(), scenario::default_cost(spec.grid, &time));
        assert_eq!(cfg.admissible().unwrap(), scenario::default_box(spec.grid, &time));
    }

    #[test]
    fn expressions_parse_in_both_forms() {
        let text = format!(
            "{MINIMAL}[model]\nz0 = {{ kind = \"sum\", terms = [0.3, {{ kind = \"cosine\", amplitude = 0.1, kx = 1, ky = 0 }}] }}\niota = 1\n"
        );
        let cfg: RunConfig = text.parse().unwrap();
        let spec = cfg.spec().unwrap();
        assert!((spec.z0.at(0, 0) - 0.4).abs() < 1e-15 && (spec.z0.at(8, 3) - 0.2).abs() < 1e-15);
        assert_eq!(spec.iota.max_abs(), 1.0);
    }

    #[test]
    fn unknown_keys_and_bad_values_are_reported() {
        let err = format!("{MINIMAL}[model]\nnot_a_key = 1\n").parse::<RunConfig>().unwrap_err();
        assert!(err.to_string().contains("not_a_key"), "{err}");
        let err = "[grid]\nnx = 8\n[time]\nsteps = 4\n".parse::<RunConfig>().unwrap_err();
        assert!(err.to_string().contains("ny"), "{err}");
        let err = format!("{MINIMAL}[admissible]\nchi1_low = 2.0\nchi1_high = 1.0\n").parse::<RunConfig>().unwrap().admissible().unwrap_err();
        assert!(matches!(err, CliError::Config(_)), "{err}");
    }

    #[test]
    fn refinement_scales_grid_and_steps() {
        let cfg: RunConfig = MINIMAL.parse().unwrap();
        let r = cfg.refined(1).unwrap();
        assert_eq!((r.grid.nx, r.grid.ny, r.time.steps), (16, 16, 8));
        let c = cfg.refined(-1).unwrap();
        assert_eq!((c.grid.nx, c.grid.ny, c.time.steps), (4, 4, 2));
        assert!(cfg.refined(-3).is_err());
    }

    #[test]
    fn varying_k2_is_selected_by_its_lower_bound() {
        let cfg: RunConfig = format!("{MINIMAL}[model.family]\nk2_low = 0.2\n").parse().unwrap();
        let spec = cfg.spec().unwrap();
        assert_eq!(spec.bounds.k2_low, 0.2);
        assert!(spec.nl.k2(0.9, 0.0).value != spec.nl.k2(0.1, 0.0).value);
    }
}
