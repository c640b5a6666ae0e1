//! Node-centred discretisation of a rectangle `[0, Lx] x [0, Ly]`.
//!
//! Nodes sit at `(i hx, j hy)` for `0 <= i <= nx`, `0 <= j <= ny` and are
//! stored row-major (`k = j (nx + 1) + i`). Every quadrature in the crate uses
//! the trapezoidal weights of [`Grid::weight`], and all operators here are
//! symmetric (or exact transposes of each other) under that weighted inner
//! product. The adjoint solver relies on this.

use alloc::vec;
use alloc::vec::Vec;

use crate::math::sqrt;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Grid {
    nx: usize,
    ny: usize,
    hx: f64,
    hy: f64,
}

impl Grid {
    /// Grid with `nx x ny` cells covering `[0, lx] x [0, ly]`.
    pub fn new(nx: usize, ny: usize, lx: f64, ly: f64) -> Result<Self> {
        Self::with_spacing(nx, ny, lx / nx as f64, ly / ny as f64)
    }

    pub fn with_spacing(nx: usize, ny: usize, hx: f64, hy: f64) -> Result<Self> {
        let ok_h = |h: f64| h.is_finite() && h > 0.0;
        if nx < 4 || ny < 4 || !ok_h(hx) || !ok_h(hy) {
            return Err(Error::InvalidGrid { nx, ny });
        }
        Ok(Self { nx, ny, hx, hy })
    }

    /// Same rectangle, half the spacing.
    pub fn refined(&self) -> Self {
        Self { nx: 2 * self.nx, ny: 2 * self.ny, hx: 0.5 * self.hx, hy: 0.5 * self.hy }
    }

    /// Same rectangle, twice the spacing; `None` once an axis would drop below 4 cells.
    pub fn coarsened(&self) -> Option<Self> {
        if self.nx % 2 != 0 || self.ny % 2 != 0 || self.nx < 8 || self.ny < 8 {
            return None;
        }
        Some(Self { nx: self.nx / 2, ny: self.ny / 2, hx: 2.0 * self.hx, hy: 2.0 * self.hy })
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn ny(&self) -> usize {
        self.ny
    }

    pub fn hx(&self) -> f64 {
        self.hx
    }

    pub fn hy(&self) -> f64 {
        self.hy
    }

    pub fn lx(&self) -> f64 {
        self.nx as f64 * self.hx
    }

    pub fn ly(&self) -> f64 {
        self.ny as f64 * self.hy
    }

    pub fn area(&self) -> f64 {
        self.lx() * self.ly()
    }

    pub fn node_count(&self) -> usize {
        (self.nx + 1) * (self.ny + 1)
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize) -> usize {
        j * (self.nx + 1) + i
    }

    #[inline]
    pub fn ij(&self, k: usize) -> (usize, usize) {
        (k % (self.nx + 1), k / (self.nx + 1))
    }

    #[inline]
    pub fn x(&self, i: usize) -> f64 {
        i as f64 * self.hx
    }

    #[inline]
    pub fn y(&self, j: usize) -> f64 {
        j as f64 * self.hy
    }

    #[inline]
    pub fn is_boundary(&self, k: usize) -> bool {
        let (i, j) = self.ij(k);
        i == 0 || j == 0 || i == self.nx || j == self.ny
    }

    /// Trapezoidal quadrature weight of node `k`.
    #[inline]
    pub fn weight(&self, k: usize) -> f64 {
        let (i, j) = self.ij(k);
        let wx = if i == 0 || i == self.nx { 0.5 } else { 1.0 };
        let wy = if j == 0 || j == self.ny { 0.5 } else { 1.0 };
        wx * wy * self.hx * self.hy
    }

    pub fn weights(&self) -> Vec<f64> {
        (0..self.node_count()).map(|k| self.weight(k)).collect()
    }

    fn check(&self, len: usize) -> Result<()> {
        if len == self.node_count() {
            Ok(())
        } else {
            Err(Error::LengthMismatch { expected: self.node_count(), found: len })
        }
    }
}

/// Symmetric 2x2 tensor at a single point; the off-diagonal entry stands for both.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Sym2 {
    pub xx: f64,
    pub yy: f64,
    pub xy: f64,
}

impl Sym2 {
    pub const ZERO: Sym2 = Sym2 { xx: 0.0, yy: 0.0, xy: 0.0 };
    pub const IDENTITY: Sym2 = Sym2 { xx: 1.0, yy: 1.0, xy: 0.0 };

    pub fn new(xx: f64, yy: f64, xy: f64) -> Self {
        Self { xx, yy, xy }
    }

    /// Full contraction `A : B`.
    #[inline]
    pub fn ddot(&self, other: &Sym2) -> f64 {
        self.xx * other.xx + self.yy * other.yy + 2.0 * self.xy * other.xy
    }

    #[inline]
    pub fn trace(&self) -> f64 {
        self.xx + self.yy
    }

    #[inline]
    pub fn norm_sq(&self) -> f64 {
        self.ddot(self)
    }

    #[inline]
    pub fn scale(&self, a: f64) -> Sym2 {
        Sym2 { xx: a * self.xx, yy: a * self.yy, xy: a * self.xy }
    }

    #[inline]
    pub fn add(&self, other: &Sym2) -> Sym2 {
        Sym2 { xx: self.xx + other.xx, yy: self.yy + other.yy, xy: self.xy + other.xy }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScalarField {
    grid: Grid,
    values: Vec<f64>,
}

impl ScalarField {
    pub fn zeros(grid: Grid) -> Self {
        Self { grid, values: vec![0.0; grid.node_count()] }
    }

    pub fn constant(grid: Grid, c: f64) -> Self {
        Self { grid, values: vec![c; grid.node_count()] }
    }

    pub fn from_fn(grid: Grid, f: impl Fn(f64, f64) -> f64) -> Self {
        let values = (0..grid.node_count())
            .map(|k| {
                let (i, j) = grid.ij(k);
                f(grid.x(i), grid.y(j))
            })
            .collect();
        Self { grid, values }
    }

    /// Wraps `values`, rejecting wrong lengths and non-finite entries.
    pub fn from_values(grid: Grid, values: Vec<f64>) -> Result<Self> {
        grid.check(values.len())?;
        if let Some(node) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { what: "scalar field", level: 0, node });
        }
        Ok(Self { grid, values })
    }

    pub(crate) fn from_raw(grid: Grid, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), grid.node_count());
        Self { grid, values }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.values[self.grid.index(i, j)]
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self { grid: self.grid, values: self.values.iter().map(|&v| f(v)).collect() }
    }

    /// `self + a * other`.
    pub fn axpy(&self, a: f64, other: &ScalarField) -> Result<Self> {
        same_grid(&self.grid, &other.grid)?;
        let values = self.values.iter().zip(&other.values).map(|(x, y)| x + a * y).collect();
        Ok(Self { grid: self.grid, values })
    }

    pub fn scaled(&self, a: f64) -> Self {
        self.map(|v| a * v)
    }

    /// Trapezoidal integral over the rectangle.
    pub fn integral(&self) -> f64 {
        self.values.iter().enumerate().map(|(k, v)| self.grid.weight(k) * v).sum()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct VectorField {
    grid: Grid,
    x: Vec<f64>,
    y: Vec<f64>,
}

impl VectorField {
    pub fn zeros(grid: Grid) -> Self {
        Self { grid, x: vec![0.0; grid.node_count()], y: vec![0.0; grid.node_count()] }
    }

    pub fn from_components(x: ScalarField, y: ScalarField) -> Result<Self> {
        same_grid(&x.grid, &y.grid)?;
        Ok(Self { grid: x.grid, x: x.values, y: y.values })
    }

    pub fn from_fn(grid: Grid, f: impl Fn(f64, f64) -> (f64, f64)) -> Self {
        let mut out = Self::zeros(grid);
        for k in 0..grid.node_count() {
            let (i, j) = grid.ij(k);
            let (a, b) = f(grid.x(i), grid.y(j));
            out.x[k] = a;
            out.y[k] = b;
        }
        out
    }

    pub(crate) fn from_raw(grid: Grid, x: Vec<f64>, y: Vec<f64>) -> Self {
        debug_assert!(x.len() == grid.node_count() && y.len() == grid.node_count());
        Self { grid, x, y }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn x(&self) -> &[f64] {
        &self.x
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn x_mut(&mut self) -> &mut [f64] {
        &mut self.x
    }

    pub fn y_mut(&mut self) -> &mut [f64] {
        &mut self.y
    }

    pub fn component(&self, c: usize) -> ScalarField {
        let v = if c == 0 { self.x.clone() } else { self.y.clone() };
        ScalarField::from_raw(self.grid, v)
    }

    /// Zeroes both components on the boundary (Dirichlet condition).
    pub fn mask_boundary(&mut self) {
        for k in 0..self.grid.node_count() {
            if self.grid.is_boundary(k) {
                self.x[k] = 0.0;
                self.y[k] = 0.0;
            }
        }
    }

    /// Largest boundary magnitude; zero for a field satisfying the Dirichlet condition.
    pub fn boundary_max_abs(&self) -> f64 {
        (0..self.grid.node_count())
            .filter(|&k| self.grid.is_boundary(k))
            .fold(0.0, |m, k| m.max(self.x[k].abs()).max(self.y[k].abs()))
    }

    pub fn max_abs(&self) -> f64 {
        self.x.iter().chain(&self.y).fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.x.iter().chain(&self.y).all(|v| v.is_finite())
    }

    pub fn axpy(&self, a: f64, other: &VectorField) -> Result<Self> {
        same_grid(&self.grid, &other.grid)?;
        let x = self.x.iter().zip(&other.x).map(|(p, q)| p + a * q).collect();
        let y = self.y.iter().zip(&other.y).map(|(p, q)| p + a * q).collect();
        Ok(Self { grid: self.grid, x, y })
    }

    pub fn inner(&self, other: &VectorField) -> Result<f64> {
        same_grid(&self.grid, &other.grid)?;
        Ok((0..self.grid.node_count())
            .map(|k| self.grid.weight(k) * (self.x[k] * other.x[k] + self.y[k] * other.y[k]))
            .sum())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SymTensorField {
    grid: Grid,
    xx: Vec<f64>,
    yy: Vec<f64>,
    xy: Vec<f64>,
}

impl SymTensorField {
    pub fn zeros(grid: Grid) -> Self {
        let n = grid.node_count();
        Self { grid, xx: vec![0.0; n], yy: vec![0.0; n], xy: vec![0.0; n] }
    }

    pub fn from_fn(grid: Grid, f: impl Fn(f64, f64) -> Sym2) -> Self {
        let mut out = Self::zeros(grid);
        for k in 0..grid.node_count() {
            let (i, j) = grid.ij(k);
            out.set(k, f(grid.x(i), grid.y(j)));
        }
        out
    }

    pub(crate) fn from_raw(grid: Grid, xx: Vec<f64>, yy: Vec<f64>, xy: Vec<f64>) -> Self {
        Self { grid, xx, yy, xy }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    #[inline]
    pub fn at(&self, k: usize) -> Sym2 {
        Sym2 { xx: self.xx[k], yy: self.yy[k], xy: self.xy[k] }
    }

    #[inline]
    pub fn set(&mut self, k: usize, s: Sym2) {
        self.xx[k] = s.xx;
        self.yy[k] = s.yy;
        self.xy[k] = s.xy;
    }

    pub fn xx(&self) -> &[f64] {
        &self.xx
    }

    pub fn yy(&self) -> &[f64] {
        &self.yy
    }

    pub fn xy(&self) -> &[f64] {
        &self.xy
    }

    pub fn max_norm(&self) -> f64 {
        (0..self.grid.node_count()).fold(0.0, |m, k| m.max(sqrt(self.at(k).norm_sq())))
    }

    pub fn is_finite(&self) -> bool {
        self.xx.iter().chain(&self.yy).chain(&self.xy).all(|v| v.is_finite())
    }

    /// `<S, T> = sum_k w_k S_k : T_k`.
    pub fn inner(&self, other: &SymTensorField) -> Result<f64> {
        same_grid(&self.grid, &other.grid)?;
        Ok((0..self.grid.node_count()).map(|k| self.grid.weight(k) * self.at(k).ddot(&other.at(k))).sum())
    }
}

fn same_grid(a: &Grid, b: &Grid) -> Result<()> {
    if a == b {
        Ok(())
    } else {
        Err(Error::GridMismatch)
    }
}

// ---------------------------------------------------------------------------
// Raw stencils on slices. Public wrappers below allocate; the solvers call these
// directly on their scratch buffers.

/// `out = Δu` with zero normal derivative imposed through mirrored ghost nodes.
pub(crate) fn apply_neumann(grid: &Grid, u: &[f64], out: &mut [f64]) {
    let (nx, ny) = (grid.nx, grid.ny);
    let (cx, cy) = (1.0 / (grid.hx * grid.hx), 1.0 / (grid.hy * grid.hy));
    for j in 0..=ny {
        let jm = if j == 0 { 1 } else { j - 1 };
        let jp = if j == ny { ny - 1 } else { j + 1 };
        for i in 0..=nx {
            let im = if i == 0 { 1 } else { i - 1 };
            let ip = if i == nx { nx - 1 } else { i + 1 };
            let c = u[grid.index(i, j)];
            out[grid.index(i, j)] = cx * (u[grid.index(ip, j)] - 2.0 * c + u[grid.index(im, j)])
                + cy * (u[grid.index(i, jp)] - 2.0 * c + u[grid.index(i, jm)]);
        }
    }
}

/// Boundary-node coefficient of the Robin condition `∂ν u = g − u`: the ghost
/// elimination contributes `robin_coefficient(k) * (g − u)` at node `k`.
#[inline]
pub(crate) fn robin_coefficient(grid: &Grid, k: usize) -> f64 {
    let (i, j) = grid.ij(k);
    let mut c = 0.0;
    if i == 0 || i == grid.nx {
        c += 2.0 / grid.hx;
    }
    if j == 0 || j == grid.ny {
        c += 2.0 / grid.hy;
    }
    c
}

/// Linear part of the Robin Laplacian: `Δ_N u − c_Γ u`.
pub(crate) fn apply_robin_linear(grid: &Grid, u: &[f64], out: &mut [f64]) {
    apply_neumann(grid, u, out);
    for k in 0..grid.node_count() {
        let c = robin_coefficient(grid, k);
        if c != 0.0 {
            out[k] -= c * u[k];
        }
    }
}

/// One-dimensional first derivative along a line of `n + 1` nodes with
/// stride `stride` starting at `start`: centred inside, one-sided at both
/// ends. With trapezoid weights `H` this is a summation-by-parts pair,
/// `H D + (H D)ᵀ = diag(−1, 0, …, 0, 1)`, so the weighted transpose is again
/// the centred difference at every interior node.
#[inline]
fn diff_line(u: &[f64], start: usize, stride: usize, n: usize, h: f64, out: &mut [f64]) {
    let at = |m: usize| u[start + m * stride];
    let inv = 0.5 / h;
    out[start] = (at(1) - at(0)) / h;
    for m in 1..n {
        out[start + m * stride] = inv * (at(m + 1) - at(m - 1));
    }
    out[start + n * stride] = (at(n) - at(n - 1)) / h;
}

/// Accumulates the transpose of [`diff_line`] applied to `s` into `out`.
#[inline]
fn diff_line_transpose_add(s: &[f64], start: usize, stride: usize, n: usize, h: f64, out: &mut [f64]) {
    let inv = 0.5 / h;
    let idx = |m: usize| start + m * stride;
    let s0 = s[idx(0)] / h;
    out[idx(0)] -= s0;
    out[idx(1)] += s0;
    for m in 1..n {
        let sm = s[idx(m)] * inv;
        out[idx(m + 1)] += sm;
        out[idx(m - 1)] -= sm;
    }
    let sn = s[idx(n)] / h;
    out[idx(n)] += sn;
    out[idx(n - 1)] -= sn;
}

pub(crate) fn diff_x(grid: &Grid, u: &[f64], out: &mut [f64]) {
    for j in 0..=grid.ny {
        diff_line(u, grid.index(0, j), 1, grid.nx, grid.hx, out);
    }
}

pub(crate) fn diff_y(grid: &Grid, u: &[f64], out: &mut [f64]) {
    for i in 0..=grid.nx {
        diff_line(u, i, grid.nx + 1, grid.ny, grid.hy, out);
    }
}

fn diff_x_transpose_add(grid: &Grid, s: &[f64], out: &mut [f64]) {
    for j in 0..=grid.ny {
        diff_line_transpose_add(s, grid.index(0, j), 1, grid.nx, grid.hx, out);
    }
}

fn diff_y_transpose_add(grid: &Grid, s: &[f64], out: &mut [f64]) {
    for i in 0..=grid.nx {
        diff_line_transpose_add(s, i, grid.nx + 1, grid.ny, grid.hy, out);
    }
}

/// Symmetrised gradient of `(u1, u2)` into `(xx, yy, xy)`; `scratch` holds one field.
pub(crate) fn apply_strain(
    grid: &Grid,
    u1: &[f64],
    u2: &[f64],
    xx: &mut [f64],
    yy: &mut [f64],
    xy: &mut [f64],
    scratch: &mut [f64],
) {
    diff_x(grid, u1, xx);
    diff_y(grid, u2, yy);
    diff_y(grid, u1, xy);
    diff_x(grid, u2, scratch);
    for (e, s) in xy.iter_mut().zip(scratch.iter()) {
        *e = 0.5 * (*e + s);
    }
}

/// `(out1, out2) = Gᵀ S` for node-weighted stress components (`S` already
/// multiplied by the quadrature weights), so that `<S, G u> = out · u`.
pub(crate) fn apply_strain_transpose(
    grid: &Grid,
    sxx: &[f64],
    syy: &[f64],
    sxy: &[f64],
    out1: &mut [f64],
    out2: &mut [f64],
) {
    out1.iter_mut().for_each(|v| *v = 0.0);
    out2.iter_mut().for_each(|v| *v = 0.0);
    diff_x_transpose_add(grid, sxx, out1);
    diff_y_transpose_add(grid, sxy, out1);
    diff_y_transpose_add(grid, syy, out2);
    diff_x_transpose_add(grid, sxy, out2);
}

/// Sparse column of the 1-D derivative stencil: the nodes `m` whose derivative
/// depends on node `k`, with coefficients. Used to assemble operator diagonals.
pub(crate) fn diff_column(k: usize, n: usize, h: f64, mut visit: impl FnMut(usize, f64)) {
    let inv = 0.5 / h;
    // row 0: -1, 1 at 0, 1 (over h)
    match k {
        0 => visit(0, -1.0 / h),
        1 => visit(0, 1.0 / h),
        _ => {}
    }
    // interior rows m: +1 at m+1, -1 at m-1
    if k >= 2 && k - 1 < n {
        visit(k - 1, inv);
    }
    if k + 1 < n {
        visit(k + 1, -inv);
    }
    // row n: 1, -1 at n, n-1 (over h)
    if k == n {
        visit(n, 1.0 / h);
    } else if k + 1 == n {
        visit(n, -1.0 / h);
    }
}

// ---------------------------------------------------------------------------
// Public operators.

/// Five-point Laplacian with homogeneous Neumann data.
pub fn laplacian_neumann(field: &ScalarField) -> ScalarField {
    let mut out = vec![0.0; field.values.len()];
    apply_neumann(&field.grid, &field.values, &mut out);
    ScalarField::from_raw(field.grid, out)
}

/// Linear (symmetric, negative definite) part of the Robin Laplacian.
pub fn robin_linear(field: &ScalarField) -> ScalarField {
    let mut out = vec![0.0; field.values.len()];
    apply_robin_linear(&field.grid, &field.values, &mut out);
    ScalarField::from_raw(field.grid, out)
}

/// Affine part of the Robin Laplacian generated by the boundary datum. Only
/// boundary values of `datum` are read.
pub fn robin_source(datum: &ScalarField) -> ScalarField {
    let g = datum.grid;
    let values = (0..g.node_count()).map(|k| robin_coefficient(&g, k) * datum.values[k]).collect();
    ScalarField::from_raw(g, values)
}

/// Laplacian with `∂ν u = g − u`, i.e. `robin_linear(u) + robin_source(g)`.
pub fn laplacian_robin(field: &ScalarField, boundary_datum: &ScalarField) -> Result<ScalarField> {
    same_grid(&field.grid, &boundary_datum.grid)?;
    robin_linear(field).axpy(1.0, &robin_source(boundary_datum))
}

pub fn sym_grad(disp: &VectorField) -> SymTensorField {
    let g = disp.grid;
    let n = g.node_count();
    let (mut xx, mut yy, mut xy, mut scratch) = (vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    apply_strain(&g, &disp.x, &disp.y, &mut xx, &mut yy, &mut xy, &mut scratch);
    SymTensorField::from_raw(g, xx, yy, xy)
}

/// Divergence of a stress field, defined as the negative weighted transpose of
/// [`sym_grad`] on fields that vanish on the boundary. Boundary entries are zero.
pub fn div_stress(stress: &SymTensorField) -> VectorField {
    let g = stress.grid;
    let n = g.node_count();
    let w = g.weights();
    let sxx: Vec<f64> = (0..n).map(|k| w[k] * stress.xx[k]).collect();
    let syy: Vec<f64> = (0..n).map(|k| w[k] * stress.yy[k]).collect();
    let sxy: Vec<f64> = (0..n).map(|k| w[k] * stress.xy[k]).collect();
    let (mut o1, mut o2) = (vec![0.0; n], vec![0.0; n]);
    apply_strain_transpose(&g, &sxx, &syy, &sxy, &mut o1, &mut o2);
    for k in 0..n {
        if g.is_boundary(k) {
            o1[k] = 0.0;
            o2[k] = 0.0;
        } else {
            o1[k] = -o1[k] / w[k];
            o2[k] = -o2[k] / w[k];
        }
    }
    VectorField::from_raw(g, o1, o2)
}

/// Trapezoidal `L²` inner product.
pub fn inner(a: &ScalarField, b: &ScalarField) -> Result<f64> {
    same_grid(&a.grid, &b.grid)?;
    Ok(weighted_dot(&a.grid, &a.values, &b.values))
}

#[inline]
pub(crate) fn weighted_dot(grid: &Grid, a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).enumerate().map(|(k, (x, y))| grid.weight(k) * (x * y)).sum()
}

pub fn norm_l2(a: &ScalarField) -> f64 {
    sqrt(weighted_dot(&a.grid, &a.values, &a.values))
}

/// Squared `H¹` seminorm from edge differences, trapezoidal across the edge
/// direction. Equals `−<Δ_N a, a>`.
pub fn grad_norm_sq(a: &ScalarField) -> f64 {
    grad_norm_sq_raw(&a.grid, &a.values)
}

pub(crate) fn grad_norm_sq_raw(g: &Grid, a: &[f64]) -> f64 {
    let mut s = 0.0;
    for j in 0..=g.ny {
        let wy = if j == 0 || j == g.ny { 0.5 } else { 1.0 } * g.hy;
        for i in 0..g.nx {
            let d = (a[g.index(i + 1, j)] - a[g.index(i, j)]) / g.hx;
            s += wy * g.hx * d * d;
        }
    }
    for i in 0..=g.nx {
        let wx = if i == 0 || i == g.nx { 0.5 } else { 1.0 } * g.hx;
        for j in 0..g.ny {
            let d = (a[g.index(i, j + 1)] - a[g.index(i, j)]) / g.hy;
            s += wx * g.hy * d * d;
        }
    }
    s
}

pub fn norm_h1(a: &ScalarField) -> f64 {
    let l2 = weighted_dot(&a.grid, &a.values, &a.values);
    sqrt(l2 + grad_norm_sq(a))
}

/// Squared `H¹` norm of a vector field (sum over components).
pub fn vector_h1_sq(v: &VectorField) -> f64 {
    let g = &v.grid;
    weighted_dot(g, &v.x, &v.x) + weighted_dot(g, &v.y, &v.y) + grad_norm_sq_raw(g, &v.x) + grad_norm_sq_raw(g, &v.y)
}

/// Composite trapezoid in time over uniformly spaced samples.
pub fn time_trapezoid(samples: &[f64], tau: f64) -> f64 {
    match samples.len() {
        0 => 0.0,
        1 => 0.0,
        n => tau * (0.5 * samples[0] + samples[1..n - 1].iter().sum::<f64>() + 0.5 * samples[n - 1]),
    }
}

/// Time weight of level `n` out of `levels` in the composite trapezoid.
#[inline]
pub fn time_weight(n: usize, levels: usize, tau: f64) -> f64 {
    if n == 0 || n + 1 == levels {
        0.5 * tau
    } else {
        tau
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use core::f64::consts::PI;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_field(grid: Grid, rng: &mut ChaCha8Rng) -> ScalarField {
        let v = (0..grid.node_count()).map(|_| rng.random_range(-1.0..1.0)).collect();
        ScalarField::from_values(grid, v).unwrap()
    }

    fn random_dirichlet(grid: Grid, rng: &mut ChaCha8Rng) -> VectorField {
        let mut v = VectorField::from_components(random_field(grid, rng), random_field(grid, rng)).unwrap();
        v.mask_boundary();
        v
    }

    #[test]
    fn rejects_tiny_grids() {
        assert!(Grid::new(3, 8, 1.0, 1.0).is_err());
        assert!(Grid::new(8, 8, 0.0, 1.0).is_err());
        assert_eq!(Grid::new(4, 5, 1.0, 1.0).unwrap().node_count(), 30);
    }

    #[test]
    fn neumann_kills_constants() {
        let g = Grid::new(7, 5, 1.3, 0.7).unwrap();
        let lap = laplacian_neumann(&ScalarField::constant(g, 3.25));
        assert_eq!(lap.max_abs(), 0.0);
    }

    #[test]
    fn neumann_cosine_eigenfunction() {
        // Δ cos(πx/L) = −(π/L)² cos(πx/L); error should fall like h².
        let mut errs = Vec::new();
        for n in [16, 32, 64] {
            let g = Grid::new(n, n, 2.0, 1.0).unwrap();
            let f = ScalarField::from_fn(g, |x, _| (PI * x / 2.0).cos());
            let lap = laplacian_neumann(&f);
            let exact = ScalarField::from_fn(g, |x, _| -(PI / 2.0).powi(2) * (PI * x / 2.0).cos());
            errs.push(lap.axpy(-1.0, &exact).unwrap().max_abs());
        }
        for w in errs.windows(2) {
            let order = (w[0] / w[1]).log2();
            assert!((1.8..=2.2).contains(&order), "order {order}");
        }
    }

    #[test]
    fn neumann_and_robin_are_symmetric() {
        let g = Grid::new(9, 6, 1.0, 2.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let a = random_field(g, &mut rng);
            let b = random_field(g, &mut rng);
            let scale = norm_l2(&a) * norm_l2(&b);
            let n1 = inner(&laplacian_neumann(&a), &b).unwrap();
            let n2 = inner(&a, &laplacian_neumann(&b)).unwrap();
            assert!((n1 - n2).abs() < 1e-12 * scale * 1e3, "{n1} vs {n2}");
            let r1 = inner(&robin_linear(&a), &b).unwrap();
            let r2 = inner(&a, &robin_linear(&b)).unwrap();
            assert!((r1 - r2).abs() < 1e-12 * scale * 1e3, "{r1} vs {r2}");
            // negative (semi)definite
            assert!(inner(&laplacian_neumann(&a), &a).unwrap() <= 1e-12);
            assert!(inner(&robin_linear(&a), &a).unwrap() < 0.0);
        }
    }

    #[test]
    fn grad_norm_matches_dirichlet_form() {
        let g = Grid::new(8, 5, 1.0, 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let a = random_field(g, &mut rng);
        let form = -inner(&laplacian_neumann(&a), &a).unwrap();
        assert!((form - grad_norm_sq(&a)).abs() < 1e-10 * form);
    }

    #[test]
    fn robin_constant_matching_datum_is_steady() {
        let g = Grid::new(6, 6, 1.0, 1.0).unwrap();
        let m = 0.7;
        let out = laplacian_robin(&ScalarField::constant(g, m), &ScalarField::constant(g, m)).unwrap();
        assert!(out.max_abs() < 1e-12);
    }

    #[test]
    fn robin_source_lives_on_boundary_layer() {
        // Ghost elimination on a 4x4 grid with h = 1/4: edge nodes pick up 2/h = 8,
        // corners pick up 2/hx + 2/hy = 16, interior nodes nothing.
        let g = Grid::new(4, 4, 1.0, 1.0).unwrap();
        let out = laplacian_robin(&ScalarField::zeros(g), &ScalarField::constant(g, 1.0)).unwrap();
        for k in 0..g.node_count() {
            let (i, j) = g.ij(k);
            let edges = [i == 0 || i == 4, j == 0 || j == 4].iter().filter(|b| **b).count();
            let expected = 8.0 * edges as f64;
            assert_eq!(out.values()[k], expected, "node ({i},{j})");
        }
    }

    #[test]
    fn sym_grad_of_simple_displacements() {
        let g = Grid::new(8, 8, 1.0, 1.0).unwrap();
        assert_eq!(sym_grad(&VectorField::zeros(g)).max_norm(), 0.0);
        let a = 0.3;
        let e = sym_grad(&VectorField::from_fn(g, |x, _| (a * x, 0.0)));
        let b = -0.8;
        let s = sym_grad(&VectorField::from_fn(g, |x, _| (0.0, b * x)));
        for k in 0..g.node_count() {
            let t = e.at(k);
            assert!((t.xx - a).abs() < 1e-12 && t.yy.abs() < 1e-12 && t.xy.abs() < 1e-12);
            assert!((s.at(k).xy - 0.5 * b).abs() < 1e-12);
        }
    }

    #[test]
    fn sym_grad_is_second_order_inside_first_order_on_boundary() {
        let mut inside = Vec::new();
        let mut edge = Vec::new();
        for n in [16, 32, 64] {
            let g = Grid::new(n, n, 1.0, 1.0).unwrap();
            let u = VectorField::from_fn(g, |x, y| ((PI * x).sin() * y.cos(), (x * y).exp()));
            let e = sym_grad(&u);
            let (mut ei, mut eb): (f64, f64) = (0.0, 0.0);
            for k in 0..g.node_count() {
                let (i, j) = g.ij(k);
                let (x, y) = (g.x(i), g.y(j));
                let ex = PI * (PI * x).cos() * y.cos();
                let ey = x * (x * y).exp();
                let exy = 0.5 * (-(PI * x).sin() * y.sin() + y * (x * y).exp());
                let t = e.at(k);
                let err = (t.xx - ex).abs().max((t.yy - ey).abs()).max((t.xy - exy).abs());
                if g.is_boundary(k) {
                    eb = eb.max(err);
                } else {
                    ei = ei.max(err);
                }
            }
            inside.push(ei);
            edge.push(eb);
        }
        for w in inside.windows(2) {
            let order = (w[0] / w[1]).log2();
            assert!((1.8..=2.2).contains(&order), "interior order {order}");
        }
        for w in edge.windows(2) {
            let order = (w[0] / w[1]).log2();
            assert!((0.8..=1.2).contains(&order), "boundary order {order}");
        }
    }

    #[test]
    fn div_stress_is_negative_transpose_of_sym_grad() {
        let g = Grid::new(7, 9, 1.0, 1.5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let s = SymTensorField::from_raw(
                g,
                random_field(g, &mut rng).into_values(),
                random_field(g, &mut rng).into_values(),
                random_field(g, &mut rng).into_values(),
            );
            let w = random_dirichlet(g, &mut rng);
            let lhs = div_stress(&s).inner(&w).unwrap();
            let rhs = -s.inner(&sym_grad(&w)).unwrap();
            assert!((lhs - rhs).abs() < 1e-12 * lhs.abs().max(rhs.abs()).max(1.0), "{lhs} vs {rhs}");
        }
    }

    #[test]
    fn div_of_constant_stress_vanishes_inside() {
        let g = Grid::new(10, 10, 1.0, 1.0).unwrap();
        assert_eq!(div_stress(&SymTensorField::zeros(g)).max_abs(), 0.0);
        let s = SymTensorField::from_fn(g, |_, _| Sym2::new(1.5, -0.5, 0.25));
        let d = div_stress(&s);
        // summation by parts: the closures leave no trace at interior nodes
        assert!(d.max_abs() < 1e-10);
    }

    #[test]
    fn quadrature_of_constants_and_sine() {
        let g = Grid::new(10, 10, 1.0, 1.0).unwrap();
        let one = ScalarField::constant(g, 1.0);
        assert!((inner(&one, &one).unwrap() - 1.0).abs() < 1e-12);
        // sin² over a full half-period is integrated exactly by the trapezoid rule
        for n in [8, 16, 32] {
            let g = Grid::new(n, n, 2.0, 3.0).unwrap();
            let f = ScalarField::from_fn(g, |x, _| (PI * x / 2.0).sin());
            assert!((norm_l2(&f).powi(2) - 3.0).abs() < 1e-12);
        }
        // a non-periodic integrand shows the second-order rate: ∫∫ e^{2x} = (e² − 1)/2
        let exact = (core::f64::consts::E.powi(2) - 1.0) / 2.0;
        let mut errs = Vec::new();
        for n in [8, 16, 32] {
            let g = Grid::new(n, n, 1.0, 1.0).unwrap();
            let f = ScalarField::from_fn(g, |x, _| x.exp());
            errs.push((norm_l2(&f).powi(2) - exact).abs());
        }
        for w in errs.windows(2) {
            let order = (w[0] / w[1]).log2();
            assert!((1.8..=2.2).contains(&order), "{errs:?}");
        }
    }

    #[test]
    fn grid_mismatch_is_an_error() {
        let a = ScalarField::zeros(Grid::new(4, 4, 1.0, 1.0).unwrap());
        let b = ScalarField::zeros(Grid::new(5, 4, 1.0, 1.0).unwrap());
        assert_eq!(inner(&a, &b), Err(Error::GridMismatch));
    }

    #[test]
    fn diff_column_matches_stencil() {
        let g = Grid::new(6, 6, 1.0, 1.0).unwrap();
        let n = g.nx();
        for k in 0..=n {
            let mut e = vec![0.0; g.node_count()];
            e[g.index(k, 2)] = 1.0;
            let mut d = vec![0.0; g.node_count()];
            diff_x(&g, &e, &mut d);
            let mut col = vec![0.0; n + 1];
            diff_column(k, n, g.hx(), |m, c| col[m] += c);
            for m in 0..=n {
                assert!((col[m] - d[g.index(m, 2)]).abs() < 1e-12, "k={k} m={m}");
            }
        }
    }

    proptest::proptest! {
        #[test]
        fn inner_is_symmetric(seed in 0u64..1000) {
            let g = Grid::new(5, 6, 1.0, 1.0).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = random_field(g, &mut rng);
            let b = random_field(g, &mut rng);
            proptest::prop_assert_eq!(inner(&a, &b).unwrap(), inner(&b, &a).unwrap());
        }
    }
}
