//! Field snapshots (CSV and `TCF1` binary), run manifests and optimization
//! histories.
//!
//! CSV snapshot layout:
//!
//! ```text
//! # nx,ny,hx,hy,t
//! # 4,4,2.5e-1,2.5e-1,0e0
//! v(0,0),v(1,0),...,v(nx,0)
//! ...
//! v(0,ny),...,v(nx,ny)
//! ```
//!
//! one row per grid line `j`, so loaders that skip `#` lines see a plain
//! `(ny+1) × (nx+1)` matrix. Numbers use the shortest exponent form that
//! round-trips.
//!
//! Binary snapshot layout, all little endian: the magic `TCF1`, `u32 nx`,
//! `u32 ny`, `f64 hx`, `f64 hy`, `f64 t`, then `(nx+1)(ny+1)` `f64` values in
//! the same row-major order.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use tumorctl_core::control::HistoryRecord;
use tumorctl_core::grid::{Grid, ScalarField};

use crate::error::{CliError, CliResult};

pub const CSV_HEADER: &str = "# nx,ny,hx,hy,t";
pub const MAGIC: &[u8; 4] = b"TCF1";

/// A field with the time it belongs to.
#[derive(Clone, Debug, PartialEq)]
pub struct Snapshot {
    pub field: ScalarField,
    pub t: f64,
}

fn write_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Write { path: path.to_path_buf(), source }
}

fn read_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Read { path: path.to_path_buf(), source }
}

fn bad(path: &Path, detail: impl Into<String>) -> CliError {
    CliError::Format { path: path.to_path_buf(), detail: detail.into() }
}

pub fn snapshot_csv_string(field: &ScalarField, t: f64) -> String {
    let g = field.grid();
    let mut s = String::with_capacity(24 * g.node_count() + 64);
    s.push_str(CSV_HEADER);
    s.push('\n');
    s.push_str(&format!("# {},{},{:e},{:e},{:e}\n", g.nx(), g.ny(), g.hx(), g.hy(), t));
    for j in 0..=g.ny() {
        for i in 0..=g.nx() {
            if i > 0 {
                s.push(',');
            }
            s.push_str(&format!("{:e}", field.at(i, j)));
        }
        s.push('\n');
    }
    s
}

pub fn write_snapshot_csv(path: &Path, field: &ScalarField, t: f64) -> CliResult<()> {
    std::fs::write(path, snapshot_csv_string(field, t)).map_err(write_err(path))
}

pub fn read_snapshot_csv(path: &Path) -> CliResult<Snapshot> {
    let text = std::fs::read_to_string(path).map_err(read_err(path))?;
    let mut lines = text.lines();
    if lines.next() != Some(CSV_HEADER) {
        return Err(bad(path, format!("first line must be `{CSV_HEADER}`")));
    }
    let meta = lines.next().and_then(|l| l.strip_prefix("# ")).ok_or_else(|| bad(path, "missing metadata line"))?;
    let parts: Vec<&str> = meta.split(',').collect();
    if parts.len() != 5 {
        return Err(bad(path, "metadata line needs five entries"));
    }
    let nx: usize = parts[0].parse().map_err(|_| bad(path, "nx is not an integer"))?;
    let ny: usize = parts[1].parse().map_err(|_| bad(path, "ny is not an integer"))?;
    let num = |s: &str, what: &str| s.parse::<f64>().map_err(|_| bad(path, format!("{what} is not a number")));
    let (hx, hy, t) = (num(parts[2], "hx")?, num(parts[3], "hy")?, num(parts[4], "t")?);
    let grid = Grid::with_spacing(nx, ny, hx, hy).map_err(|e| bad(path, e.to_string()))?;

    let mut reader = csv::ReaderBuilder::new().has_headers(false).comment(Some(b'#')).from_reader(text.as_bytes());
    let mut values = Vec::with_capacity(grid.node_count());
    for (row, record) in reader.records().enumerate() {
        let record = record.map_err(|e| bad(path, e.to_string()))?;
        if record.len() != nx + 1 {
            return Err(bad(path, format!("row {row} has {} entries, expected {}", record.len(), nx + 1)));
        }
        for v in record.iter() {
            values.push(num(v, "value")?);
        }
    }
    let field = ScalarField::from_values(grid, values).map_err(|e| bad(path, e.to_string()))?;
    Ok(Snapshot { field, t })
}

pub fn snapshot_binary_bytes(field: &ScalarField, t: f64) -> Vec<u8> {
    let g = field.grid();
    let mut out = Vec::with_capacity(36 + 8 * g.node_count());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(g.nx() as u32).to_le_bytes());
    out.extend_from_slice(&(g.ny() as u32).to_le_bytes());
    for v in [g.hx(), g.hy(), t] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for v in field.values() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn write_snapshot_binary(path: &Path, field: &ScalarField, t: f64) -> CliResult<()> {
    std::fs::write(path, snapshot_binary_bytes(field, t)).map_err(write_err(path))
}

pub fn read_snapshot_binary(path: &Path) -> CliResult<Snapshot> {
    let mut bytes = Vec::new();
    File::open(path).and_then(|mut f| f.read_to_end(&mut bytes)).map_err(read_err(path))?;
    if bytes.len() < 36 || &bytes[..4] != MAGIC {
        return Err(bad(path, "missing TCF1 header"));
    }
    let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().expect("4 bytes")) as usize;
    let f64_at = |o: usize| f64::from_le_bytes(bytes[o..o + 8].try_into().expect("8 bytes"));
    let (nx, ny) = (u32_at(4), u32_at(8));
    let (hx, hy, t) = (f64_at(12), f64_at(20), f64_at(28));
    let grid = Grid::with_spacing(nx, ny, hx, hy).map_err(|e| bad(path, e.to_string()))?;
    let n = grid.node_count();
    if bytes.len() != 36 + 8 * n {
        return Err(bad(path, format!("expected {} value bytes, found {}", 8 * n, bytes.len() - 36)));
    }
    let values = (0..n).map(|k| f64_at(36 + 8 * k)).collect();
    let field = ScalarField::from_values(grid, values).map_err(|e| bad(path, e.to_string()))?;
    Ok(Snapshot { field, t })
}

/// Run summary written next to the snapshots as `key = value` lines.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub seed: u64,
    pub nx: usize,
    pub ny: usize,
    pub steps: usize,
    pub tau: f64,
    pub t_final: f64,
    pub snapshot_stride: usize,
    pub snapshots: usize,
    pub phi_clamp: f64,
    pub sigma_clamp: f64,
    pub phi_violation: f64,
    pub sigma_violation: f64,
    /// Monitored lactate cap; a heuristic, not a proven bound.
    pub sigma_cap: f64,
    pub separation_r_low: Option<f64>,
    pub separation_r_high: Option<f64>,
    pub z_min: f64,
    pub z_max: f64,
    pub separation_violation: f64,
    pub cg_iterations_total: usize,
    pub newton_iterations_max: usize,
    pub invariants_ok: bool,
    pub oracle_sup_error: Option<f64>,
    pub oracle_bound: Option<f64>,
}

pub fn write_manifest(path: &Path, m: &Manifest) -> CliResult<()> {
    let text = toml::to_string(m).map_err(|e| CliError::Config(format!("manifest: {e}")))?;
    std::fs::write(path, text).map_err(write_err(path))
}

pub fn read_manifest(path: &Path) -> CliResult<Manifest> {
    let text = std::fs::read_to_string(path).map_err(read_err(path))?;
    toml::from_str(&text).map_err(|e| bad(path, e.to_string()))
}

/// Header of the optimization history CSV.
pub const HISTORY_HEADER: [&str; 5] = ["iteration", "cost", "stationarity", "step", "ball_active"];

pub fn write_history(path: &Path, history: &[HistoryRecord]) -> CliResult<()> {
    let file = File::create(path).map_err(write_err(path))?;
    let mut w = csv::Writer::from_writer(BufWriter::new(file));
    let csv_err = |e: csv::Error| bad(path, e.to_string());
    w.write_record(HISTORY_HEADER).map_err(csv_err)?;
    for r in history {
        w.write_record([
            r.iteration.to_string(),
            format!("{:e}", r.cost),
            format!("{:e}", r.stationarity),
            format!("{:e}", r.step),
            (r.ball_active as u8).to_string(),
        ])
        .map_err(csv_err)?;
    }
    w.flush().map_err(write_err(path))
}

pub fn read_history(path: &Path) -> CliResult<Vec<HistoryRecord>> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| bad(path, e.to_string()))?;
    let mut out = Vec::new();
    for record in reader.records() {
        let r = record.map_err(|e| bad(path, e.to_string()))?;
        let f = |i: usize| r.get(i).and_then(|s| s.parse::<f64>().ok()).ok_or_else(|| bad(path, format!("column {i}")));
        out.push(HistoryRecord {
            iteration: r.get(0).and_then(|s| s.parse().ok()).ok_or_else(|| bad(path, "iteration"))?,
            cost: f(1)?,
            stationarity: f(2)?,
            step: f(3)?,
            ball_active: r.get(4) == Some("1"),
        });
    }
    Ok(out)
}

/// Writes `name_XXXXX.csv` (and/or `.tcf`) into `dir`; returns the paths written.
pub fn write_series(
    dir: &Path,
    name: &str,
    fields: &[(usize, &ScalarField, f64)],
    csv: bool,
    binary: bool,
) -> CliResult<Vec<PathBuf>> {
    let mut paths = Vec::new();
    for &(level, field, t) in fields {
        if csv {
            let p = dir.join(format!("{name}_{level:05}.csv"));
            write_snapshot_csv(&p, field, t)?;
            paths.push(p);
        }
        if binary {
            let p = dir.join(format!("{name}_{level:05}.tcf"));
            write_snapshot_binary(&p, field, t)?;
            paths.push(p);
        }
    }
    Ok(paths)
}

/// Plain text report written alongside the CSV outputs.
pub fn write_text(path: &Path, text: &str) -> CliResult<()> {
    let mut f = File::create(path).map_err(write_err(path))?;
    f.write_all(text.as_bytes()).map_err(write_err(path))
}
