use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tumorctl::formats::{read_history, read_manifest, read_snapshot_csv};

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn run(args: &[&str], config: &str, out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tumorctl"))
        .args(args)
        .arg("--config")
        .arg(fixture(config))
        .arg("--out")
        .arg(out)
        .output()
        .expect("binary runs")
}

fn text(o: &Output) -> String {
    format!("{}{}", String::from_utf8_lossy(&o.stdout), String::from_utf8_lossy(&o.stderr))
}

#[test]
fn trivial_scenario_writes_zero_snapshots() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["simulate"], "trivial.toml", dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", text(&o));
    for name in ["phi", "sigma", "ux", "uy"] {
        for level in [0, 5, 10] {
            let s = read_snapshot_csv(&dir.path().join(format!("{name}_{level:05}.csv"))).unwrap();
            assert_eq!(s.field.max_abs(), 0.0, "{name} at level {level}");
        }
    }
    let m = read_manifest(&dir.path().join("manifest.toml")).unwrap();
    assert!(m.invariants_ok);
    assert_eq!((m.steps, m.snapshots), (10, 3));
    assert_eq!(m.oracle_sup_error, None);
}

#[test]
fn homogeneous_scenario_reports_the_ode_comparison() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["simulate", "--oracle"], "homogeneous.toml", dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", text(&o));
    assert!(text(&o).contains("sup error"));
    let m = read_manifest(&dir.path().join("manifest.toml")).unwrap();
    let (err, bound) = (m.oracle_sup_error.unwrap(), m.oracle_bound.unwrap());
    assert!(err > 0.0 && err <= bound, "{err} vs {bound}");
}

#[test]
fn oracle_flag_on_inhomogeneous_data_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["simulate", "--oracle"], "gradient.toml", dir.path());
    assert_eq!(o.status.code(), Some(2), "{}", text(&o));
}

#[test]
fn zero_initial_damage_trips_the_hypothesis_gate() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["simulate"], "z0_zero.toml", dir.path());
    assert_eq!(o.status.code(), Some(1), "{}", text(&o));
    assert!(text(&o).contains("H9"), "{}", text(&o));
}

#[test]
fn missing_config_and_bad_flags_are_usage_errors() {
    let o = Command::new(env!("CARGO_BIN_EXE_tumorctl")).arg("simulate").output().unwrap();
    assert_eq!(o.status.code(), Some(2));
    let o = Command::new(env!("CARGO_BIN_EXE_tumorctl")).args(["simulate", "--bogus"]).output().unwrap();
    assert_eq!(o.status.code(), Some(2));
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["simulate"], "does_not_exist.toml", dir.path());
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn gradient_check_passes_one_level_below_the_default_scenario() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["gradient-check", "--refine", "-1"], "gradient.toml", dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", text(&o));
    let out = text(&o);
    let slope: f64 = out
        .lines()
        .find_map(|l| l.strip_prefix("taylor slope "))
        .and_then(|l| l.split_whitespace().next())
        .and_then(|s| s.parse().ok())
        .unwrap();
    assert!((1.8..2.2).contains(&slope), "{slope}");
}

#[test]
fn coarser_runs_print_a_looser_tolerance() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["gradient-check", "--refine", "-2"], "gradient.toml", dir.path());
    assert!(text(&o).contains("gradient tolerance 4.000e-2 (refinement level -2)"), "{}", text(&o));
}

#[test]
fn zero_direction_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["gradient-check"], "gradient_zero_direction.toml", dir.path());
    assert_eq!(o.status.code(), Some(2), "{}", text(&o));
    assert!(text(&o).contains("identically zero"));
}

#[test]
fn control_cost_only_problem_is_driven_to_zero() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["optimize"], "alpha9.toml", dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", text(&o));
    let h = read_history(&dir.path().join("history.csv")).unwrap();
    assert!(h.last().unwrap().cost < 1e-8, "{:?}", h.last());
    assert!(dir.path().join("chi1_00008.csv").exists());
    assert!(dir.path().join("vi_report.txt").exists());
}

#[test]
fn synthetic_inverse_decreases_the_cost() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["optimize"], "synthetic.toml", dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", text(&o));
    let h = read_history(&dir.path().join("history.csv")).unwrap();
    assert!(h.last().unwrap().cost < h[0].cost);
}

#[test]
fn inverted_box_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["optimize"], "infeasible_box.toml", dir.path());
    assert_eq!(o.status.code(), Some(2), "{}", text(&o));
}

#[test]
fn separation_closed_form_is_printed() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["separation"], "separation_closed.toml", dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", text(&o));
    assert!(text(&o).contains("0.11920 / 0.88080"), "{}", text(&o));
}

#[test]
fn separation_failure_names_the_condition() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["separation"], "separation_infeasible.toml", dir.path());
    assert_eq!(o.status.code(), Some(1), "{}", text(&o));
    assert!(text(&o).contains("condition 3"), "{}", text(&o));
}

#[test]
fn hypothesis_check_passes_for_the_default_family() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["hypothesis-check"], "hypotheses.toml", dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", text(&o));
    assert!(text(&o).contains("0 violations"));
}

#[test]
fn repeated_runs_are_byte_identical() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    for d in [&a, &b] {
        assert_eq!(run(&["simulate"], "homogeneous.toml", d.path()).status.code(), Some(0));
    }
    let mut names: Vec<_> = std::fs::read_dir(a.path()).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    assert!(names.len() > 5);
    for n in names {
        assert_eq!(std::fs::read(a.path().join(&n)).unwrap(), std::fs::read(b.path().join(&n)).unwrap(), "{n:?}");
    }
}
