//! The five subcommands. Each returns an [`Outcome`] whose `passed` flag is
//! the acceptance predicate of that command; `main` maps it to the exit code.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use tumorctl_core::control::{
    fd_directional, optimize, probe_set, smooth_direction, vi_residual, AdmissibleBox, Problem,
};
use tumorctl_core::grid::ScalarField;
use tumorctl_core::linearized::taylor_test;
use tumorctl_core::model::{check_hypotheses, separation_bounds, CostView, HypothesisReport, ModelSpec};
use tumorctl_core::state::{solve_state, StateTrajectory, TimeGrid};
use tumorctl_core::Error as CoreError;

use crate::config::{RunConfig, SnapshotFormat};
use crate::error::{CliError, CliResult};
use crate::formats::{write_history, write_manifest, write_series, write_text, Manifest};
use crate::oracle::{state_oracle, state_sup_error, Homogeneous};

/// Oracle bound factor: sup error must stay below `ORACLE_FACTOR · τ · C`.
pub const ORACLE_FACTOR: f64 = 5.0;
/// Samples per interval when re-checking the separation sign conditions.
pub const SEPARATION_SAMPLES: usize = 1000;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Command {
    Simulate,
    GradientCheck,
    Optimize,
    Separation,
    HypothesisCheck,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::GradientCheck => "gradient-check",
            Command::Optimize => "optimize",
            Command::Separation => "separation",
            Command::HypothesisCheck => "hypothesis-check",
        }
    }
}

#[derive(Clone, Debug, Default)]
pub struct Options {
    pub oracle: bool,
    /// Refinement levels already applied to the config (negative = coarser).
    pub refine: i32,
    /// Overrides `output.dir`.
    pub out: Option<PathBuf>,
}

/// Printed report plus the verdict of the command's predicate.
#[derive(Clone, Debug, PartialEq)]
pub struct Outcome {
    pub passed: bool,
    pub report: String,
}

/// Loads, refines and dispatches.
pub fn run_path(cmd: Command, config: &Path, opts: &Options) -> CliResult<Outcome> {
    let cfg = RunConfig::load(config)?.refined(opts.refine)?;
    run(cmd, &cfg, opts)
}

pub fn run(cmd: Command, cfg: &RunConfig, opts: &Options) -> CliResult<Outcome> {
    match cmd {
        Command::Simulate => simulate(cfg, opts),
        Command::GradientCheck => gradient_check(cfg, opts),
        Command::Optimize => optimize_cmd(cfg, opts),
        Command::Separation => separation(cfg, opts),
        Command::HypothesisCheck => hypothesis_check(cfg),
    }
}

fn out_dir(cfg: &RunConfig, opts: &Options) -> CliResult<PathBuf> {
    let dir = opts.out.clone().unwrap_or_else(|| PathBuf::from(&cfg.output.dir));
    fs::create_dir_all(&dir).map_err(|source| CliError::Write { path: dir.clone(), source })?;
    Ok(dir)
}

fn snapshot_levels(time: &TimeGrid, stride: usize) -> Vec<usize> {
    let mut levels: Vec<usize> = (0..time.levels()).step_by(stride).collect();
    if levels.last() != Some(&time.steps()) {
        levels.push(time.steps());
    }
    levels
}

fn write_fields(
    dir: &Path,
    cfg: &RunConfig,
    time: &TimeGrid,
    series: &[(&str, &[ScalarField])],
) -> CliResult<usize> {
    let (csv, bin) = match cfg.output.format {
        SnapshotFormat::Csv => (true, false),
        SnapshotFormat::Binary => (false, true),
        SnapshotFormat::Both => (true, true),
    };
    let levels = snapshot_levels(time, cfg.output.stride);
    for (name, fields) in series {
        let picked: Vec<(usize, &ScalarField, f64)> = levels.iter().map(|&n| (n, &fields[n], time.time(n))).collect();
        write_series(dir, name, &picked, csv, bin)?;
    }
    Ok(levels.len())
}

/// Runs the sampled hypothesis checks that a simulation relies on (no cost data).
fn gate(cfg: &RunConfig, spec: &ModelSpec) -> HypothesisReport {
    check_hypotheses(spec, None, cfg.hypotheses.budget, cfg.seed)
}

fn gate_failure(report: &HypothesisReport) -> Outcome {
    let ids: Vec<String> = report.results.iter().filter(|r| !r.passed).map(|r| format!("H{}", r.id)).collect();
    Outcome {
        passed: false,
        report: format!("hypothesis gate failed: {}\n{report}", ids.join(", ")),
    }
}

fn trajectory_summary(out: &mut String, traj: &StateTrajectory) {
    let d = &traj.diagnostics;
    let _ = writeln!(out, "pre-clamp excursion   phi {:.3e}  sigma {:.3e}", d.phi_clamp, d.sigma_clamp);
    let _ = writeln!(out, "post-clamp violation  phi {:.3e}  sigma {:.3e}", d.phi_violation, d.sigma_violation);
    let _ = writeln!(out, "sigma cap (monitored) {:.6}", d.sigma_cap);
    match &d.separation {
        Some(s) => {
            let _ = writeln!(out, "separation interval   [{:.6e}, {:.6e}]", s.r_low, s.r_high);
        }
        None => {
            let _ = writeln!(out, "separation interval   unavailable");
        }
    }
    let _ = writeln!(out, "z range               [{:.6e}, {:.6e}]  outside by {:.3e}", d.z_min, d.z_max, d.separation_violation);
    let _ = writeln!(out, "u on boundary         {:.3e}", d.u_boundary);
    let _ = writeln!(
        out,
        "cg iterations         phi {} sigma {} u {} z {}; newton max {}",
        d.cg_iterations[0], d.cg_iterations[1], d.cg_iterations[2], d.cg_iterations[3], d.newton_max
    );
}

pub fn simulate(cfg: &RunConfig, opts: &Options) -> CliResult<Outcome> {
    let spec = cfg.spec()?;
    let hyp = gate(cfg, &spec);
    if !hyp.all_passed() {
        return Ok(gate_failure(&hyp));
    }
    let control = cfg.control()?;
    let time = cfg.time_grid()?;
    let homogeneous = if opts.oracle { Some(Homogeneous::detect(&spec, &control)?) } else { None };
    let traj = solve_state(&spec, &control, time.steps(), &cfg.solver_settings())?;
    let dir = out_dir(cfg, opts)?;

    let ux: Vec<ScalarField> = traj.u.iter().map(|u| u.component(0)).collect();
    let uy: Vec<ScalarField> = traj.u.iter().map(|u| u.component(1)).collect();
    let snapshots = write_fields(
        &dir,
        cfg,
        &time,
        &[("phi", &traj.phi), ("sigma", &traj.sigma), ("ux", &ux), ("uy", &uy), ("z", &traj.z)],
    )?;

    let mut report = String::new();
    let _ = writeln!(report, "simulate {}x{} cells, {} steps, tau = {:e}", cfg.grid.nx, cfg.grid.ny, time.steps(), time.tau());
    trajectory_summary(&mut report, &traj);
    let mut passed = traj.diagnostics.invariants_ok();

    let mut oracle_err = None;
    let mut oracle_bound = None;
    if let Some(h) = &homogeneous {
        let o = state_oracle(h, time.steps())?;
        let err = state_sup_error(&traj, h, &o)?;
        let bound = ORACLE_FACTOR * time.tau() * o.scale;
        let _ = writeln!(report, "ode oracle            sup error {err:.6e}  bound {bound:.6e}  (C = {:.6e})", o.scale);
        passed &= err <= bound;
        oracle_err = Some(err);
        oracle_bound = Some(bound);
    }

    let d = &traj.diagnostics;
    let manifest = Manifest {
        command: String::from("simulate"),
        seed: cfg.seed,
        nx: cfg.grid.nx,
        ny: cfg.grid.ny,
        steps: time.steps(),
        tau: time.tau(),
        t_final: time.t_final(),
        snapshot_stride: cfg.output.stride,
        snapshots,
        phi_clamp: d.phi_clamp,
        sigma_clamp: d.sigma_clamp,
        phi_violation: d.phi_violation,
        sigma_violation: d.sigma_violation,
        sigma_cap: d.sigma_cap,
        separation_r_low: d.separation.map(|s| s.r_low),
        separation_r_high: d.separation.map(|s| s.r_high),
        z_min: d.z_min,
        z_max: d.z_max,
        separation_violation: d.separation_violation,
        cg_iterations_total: d.cg_iterations.iter().sum(),
        newton_iterations_max: d.newton_max,
        invariants_ok: d.invariants_ok(),
        oracle_sup_error: oracle_err,
        oracle_bound,
    };
    write_manifest(&dir.join("manifest.toml"), &manifest)?;
    write_text(&dir.join("report.txt"), &report)?;
    let _ = writeln!(report, "{}", if passed { "invariants hold" } else { "INVARIANT VIOLATION" });
    Ok(Outcome { passed, report })
}

fn problem(cfg: &RunConfig, spec: ModelSpec) -> CliResult<Problem> {
    let cost = cfg.cost(&spec)?;
    Ok(Problem { spec, cost, steps: cfg.time.steps, settings: cfg.solver_settings() })
}

pub fn gradient_check(cfg: &RunConfig, opts: &Options) -> CliResult<Outcome> {
    let gc = &cfg.gradient_check;
    let spec = cfg.spec()?;
    let time = cfg.time_grid()?;
    let control = cfg.control()?;
    let directions = match cfg.direction()? {
        Some(d) if d.max_abs() == 0.0 => {
            return Err(CliError::Usage(String::from("gradient_check.direction is identically zero")));
        }
        Some(d) => vec![d],
        None => (0..gc.directions.max(1)).map(|i| smooth_direction(spec.grid, &time, cfg.seed + i as u64)).collect(),
    };
    let tolerance = gc.tolerance * 2f64.powi(-opts.refine);
    let settings = cfg.solver_settings();

    let mut report = String::new();
    let taylor = taylor_test(&spec, &control, &directions[0], &gc.epsilons, time.steps(), &settings)?;
    let _ = writeln!(report, "{:>12} {:>14} {:>14}", "eps", "remainder", "first order");
    for i in 0..taylor.epsilons.len() {
        let _ = writeln!(report, "{:>12.3e} {:>14.6e} {:>14.6e}", taylor.epsilons[i], taylor.remainder[i], taylor.first_order[i]);
    }
    let _ = writeln!(report, "taylor slope {:.4} (need >= {})", taylor.slope, gc.min_slope);

    let problem = problem(cfg, spec)?;
    let eval = problem.gradient(&control)?;
    let mut worst: f64 = 0.0;
    let _ = writeln!(report, "{:>4} {:>16} {:>16} {:>12}", "dir", "adjoint", "finite diff", "rel error");
    for (i, h) in directions.iter().enumerate() {
        let adj = eval.gradient.inner(h, &time)?;
        let fd = fd_directional(&problem, &control, h, gc.fd_eps)?;
        let rel = (adj - fd).abs() / fd.abs().max(f64::MIN_POSITIVE);
        worst = worst.max(rel);
        let _ = writeln!(report, "{i:>4} {adj:>16.9e} {fd:>16.9e} {rel:>12.3e}");
    }
    let _ = writeln!(report, "gradient tolerance {tolerance:.3e} (refinement level {})", opts.refine);
    let passed = taylor.slope >= gc.min_slope && worst < tolerance;
    let _ = writeln!(report, "{}", if passed { "gradient check passed" } else { "GRADIENT CHECK FAILED" });
    Ok(Outcome { passed, report })
}

pub fn optimize_cmd(cfg: &RunConfig, opts: &Options) -> CliResult<Outcome> {
    let spec = cfg.spec()?;
    let adm: AdmissibleBox = cfg.admissible()?;
    let time = cfg.time_grid()?;
    let initial = cfg.control()?;
    let problem = problem(cfg, spec)?;
    let result = optimize(&problem, &initial, &adm, &cfg.optimizer_settings())?;
    let dir = out_dir(cfg, opts)?;
    write_history(&dir.join("history.csv"), &result.history)?;
    write_fields(&dir, cfg, &time, &[("chi1", &result.control.chi1), ("chi2", &result.control.chi2)])?;

    let probes = probe_set(&result.control, &adm, &time, cfg.optimizer.vi_probes, cfg.seed)?;
    let vi = vi_residual(&problem.spec, &result.last.traj, &result.last.adjoint, &result.control, &problem.cost, &probes)?;

    let costs: Vec<f64> = result.history.iter().map(|r| r.cost).collect();
    let monotone = costs.windows(2).all(|w| w[1] <= w[0]);
    let (first, last) = (costs[0], costs[costs.len() - 1]);
    let vi_ok = vi.star >= -cfg.optimizer.vi_tol * vi.scale;

    let mut report = String::new();
    let _ = writeln!(report, "iterations {}  stop {:?}", result.history.len() - 1, result.stop);
    let _ = writeln!(report, "J initial {first:.9e}  final {last:.9e}  monotone {monotone}");
    let _ = writeln!(report, "vi residual (gradient form) {:.6e}", vi.star);
    let _ = writeln!(report, "vi residual (printed form)  {:.6e}", vi.printed);
    let _ = writeln!(report, "vi scale {:.6e} over {} probes, tolerance {:.1e}", vi.scale, vi.probes, cfg.optimizer.vi_tol);
    write_text(&dir.join("vi_report.txt"), &report)?;
    let passed = monotone && last <= first && vi_ok;
    let _ = writeln!(report, "{}", if passed { "optimization accepted" } else { "OPTIMIZATION REJECTED" });
    Ok(Outcome { passed, report })
}

pub fn separation(cfg: &RunConfig, _opts: &Options) -> CliResult<Outcome> {
    let spec = cfg.spec()?;
    let mut report = String::new();
    let _ = writeln!(report, "margin b = {:.6e} (C1 = {}, C2 = {})", spec.separation_margin(), spec.potential.c1, spec.potential.c2);
    let bounds = match separation_bounds(&spec) {
        Ok(b) => b,
        Err(e @ CoreError::SeparationInfeasible { .. }) => {
            let _ = writeln!(report, "{e}");
            return Ok(Outcome { passed: false, report });
        }
        Err(e) => return Err(e.into()),
    };
    let _ = writeln!(report, "roots    {:.5} / {:.5}", bounds.root_low, bounds.root_high);
    let _ = writeln!(report, "r_low  = {:.12e}", bounds.r_low);
    let _ = writeln!(report, "r_high = {:.12e}", bounds.r_high);
    let signs = bounds.verify(spec.potential, SEPARATION_SAMPLES);
    let _ = writeln!(report, "sign conditions at {SEPARATION_SAMPLES} samples each: {}", if signs { "hold" } else { "FAIL" });

    let control = cfg.control()?;
    let traj = solve_state(&spec, &control, cfg.time.steps, &cfg.solver_settings())?;
    let tol = tumorctl_core::state::Diagnostics::SEPARATION_TOL;
    let (zmin, zmax) = traj.z.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), z| (lo.min(z.min()), hi.max(z.max())));
    let inside = zmin >= bounds.r_low - tol && zmax <= bounds.r_high + tol;
    let _ = writeln!(report, "simulated z in [{zmin:.12e}, {zmax:.12e}]: {}", if inside { "inside" } else { "OUTSIDE" });
    Ok(Outcome { passed: signs && inside, report })
}

pub fn hypothesis_check(cfg: &RunConfig) -> CliResult<Outcome> {
    let spec = cfg.spec()?;
    let cost = cfg.cost(&spec)?;
    let mut targets = Vec::new();
    for f in &cost.phi_q {
        targets.push(("phi_Q", f));
    }
    for f in &cost.sigma_q {
        targets.push(("sigma_Q", f));
    }
    for f in &cost.z_q {
        targets.push(("z_Q", f));
    }
    targets.push(("phi_Omega", &cost.phi_omega));
    targets.push(("sigma_Omega", &cost.sigma_omega));
    let view = CostView { alpha: &cost.alpha, targets };
    let start = Instant::now();
    let r = check_hypotheses(&spec, Some(&view), cfg.hypotheses.budget, cfg.seed);
    let elapsed = start.elapsed();
    let mut report = r.to_string();
    let _ = writeln!(report, "{} violations, {} draws per hypothesis, {:.3} s", r.violations(), cfg.hypotheses.budget, elapsed.as_secs_f64());
    Ok(Outcome { passed: r.all_passed(), report })
}
