//! Assembled-free SPD operators for the implicit substeps, written in the
//! Euclidean-symmetric form `W (...)` so that plain CG applies.

use alloc::vec;
use alloc::vec::Vec;
use core::cell::RefCell;

use crate::cg::SymOperator;
use crate::grid::{apply_neumann, apply_robin_linear, apply_strain, apply_strain_transpose, diff_column, robin_coefficient, Grid};

/// `W (I − τ L + τ diag(c))` with `L` the Neumann or Robin-linear Laplacian.
pub(crate) struct ScalarOp<'a> {
    pub grid: &'a Grid,
    pub weights: &'a [f64],
    pub tau: f64,
    pub robin: bool,
    /// Optional nodal reaction coefficient `c`.
    pub reaction: Option<&'a [f64]>,
}

impl ScalarOp<'_> {
    /// `L x` into `out`.
    pub fn laplace(&self, x: &[f64], out: &mut [f64]) {
        if self.robin {
            apply_robin_linear(self.grid, x, out);
        } else {
            apply_neumann(self.grid, x, out);
        }
    }
}

impl SymOperator for ScalarOp<'_> {
    fn len(&self) -> usize {
        self.weights.len()
    }

    fn apply(&self, x: &[f64], out: &mut [f64]) {
        self.laplace(x, out);
        let tau = self.tau;
        match self.reaction {
            Some(c) => {
                for k in 0..out.len() {
                    out[k] = self.weights[k] * (x[k] - tau * out[k] + tau * c[k] * x[k]);
                }
            }
            None => {
                for k in 0..out.len() {
                    out[k] = self.weights[k] * (x[k] - tau * out[k]);
                }
            }
        }
    }

    fn diagonal(&self, out: &mut [f64]) {
        let g = self.grid;
        let lap = 2.0 / (g.hx() * g.hx()) + 2.0 / (g.hy() * g.hy());
        for (k, d) in out.iter_mut().enumerate() {
            let mut v = 1.0 + self.tau * lap;
            if self.robin {
                v += self.tau * robin_coefficient(g, k);
            }
            if let Some(c) = self.reaction {
                v += self.tau * c[k];
            }
            *d = self.weights[k] * v;
        }
    }
}

/// Weighted right-hand side `W r` for a scalar solve.
pub(crate) fn weighted(weights: &[f64], r: &mut [f64]) {
    for (v, w) in r.iter_mut().zip(weights) {
        *v *= w;
    }
}

/// Interior-node indexing for the Dirichlet displacement unknowns.
pub(crate) struct InteriorMap {
    pub nodes: Vec<usize>,
}

impl InteriorMap {
    pub fn new(grid: &Grid) -> Self {
        let nodes = (0..grid.node_count()).filter(|&k| !grid.is_boundary(k)).collect();
        Self { nodes }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    /// Stack interior values of `(a, b)` into one DOF vector.
    pub fn gather(&self, a: &[f64], b: &[f64], out: &mut [f64]) {
        let m = self.nodes.len();
        for (d, &k) in self.nodes.iter().enumerate() {
            out[d] = a[k];
            out[m + d] = b[k];
        }
    }

    /// Inverse of [`gather`]; boundary entries are zeroed.
    pub fn scatter(&self, x: &[f64], a: &mut [f64], b: &mut [f64]) {
        a.iter_mut().for_each(|v| *v = 0.0);
        b.iter_mut().for_each(|v| *v = 0.0);
        let m = self.nodes.len();
        for (d, &k) in self.nodes.iter().enumerate() {
            a[k] = x[d];
            b[k] = x[m + d];
        }
    }
}

struct ElasticScratch {
    u1: Vec<f64>,
    u2: Vec<f64>,
    xx: Vec<f64>,
    yy: Vec<f64>,
    xy: Vec<f64>,
    tmp: Vec<f64>,
    o1: Vec<f64>,
    o2: Vec<f64>,
}

/// `Gᵀ W C G` on interior displacement DOFs, with `C` isotropic with nodal
/// moduli `(mu, lam)`.
pub(crate) struct ElasticOp<'a> {
    pub grid: &'a Grid,
    pub weights: &'a [f64],
    pub map: &'a InteriorMap,
    pub mu: Vec<f64>,
    pub lam: Vec<f64>,
    scratch: RefCell<ElasticScratch>,
}

impl<'a> ElasticOp<'a> {
    pub fn new(grid: &'a Grid, weights: &'a [f64], map: &'a InteriorMap, mu: Vec<f64>, lam: Vec<f64>) -> Self {
        let n = grid.node_count();
        let z = || vec![0.0; n];
        let scratch = ElasticScratch { u1: z(), u2: z(), xx: z(), yy: z(), xy: z(), tmp: z(), o1: z(), o2: z() };
        Self { grid, weights, map, mu, lam, scratch: RefCell::new(scratch) }
    }
}

impl SymOperator for ElasticOp<'_> {
    fn len(&self) -> usize {
        2 * self.map.len()
    }

    fn apply(&self, x: &[f64], out: &mut [f64]) {
        let mut s = self.scratch.borrow_mut();
        let ElasticScratch { u1, u2, xx, yy, xy, tmp, o1, o2 } = &mut *s;
        self.map.scatter(x, u1, u2);
        apply_strain(self.grid, u1, u2, xx, yy, xy, tmp);
        for k in 0..xx.len() {
            let w = self.weights[k];
            let (mu, lam) = (self.mu[k], self.lam[k]);
            let t = lam * (xx[k] + yy[k]);
            xx[k] = w * (2.0 * mu * xx[k] + t);
            yy[k] = w * (2.0 * mu * yy[k] + t);
            xy[k] = w * 2.0 * mu * xy[k];
        }
        apply_strain_transpose(self.grid, xx, yy, xy, o1, o2);
        self.map.gather(o1, o2, out);
    }

    fn diagonal(&self, out: &mut [f64]) {
        let g = self.grid;
        let (nx, ny) = (g.nx(), g.ny());
        let m = self.map.len();
        for (d, &k) in self.map.nodes.iter().enumerate() {
            let (i, j) = g.ij(k);
            let (mut a1, mut a2) = (0.0, 0.0);
            diff_column(i, nx, g.hx(), |mi, c| {
                let q = g.index(mi, j);
                let w = self.weights[q] * c * c;
                a1 += w * (2.0 * self.mu[q] + self.lam[q]);
                a2 += w * self.mu[q];
            });
            diff_column(j, ny, g.hy(), |mj, c| {
                let q = g.index(i, mj);
                let w = self.weights[q] * c * c;
                a1 += w * self.mu[q];
                a2 += w * (2.0 * self.mu[q] + self.lam[q]);
            });
            out[d] = a1;
            out[m + d] = a2;
        }
    }
}

/// Interior load `−Gᵀ W S` of a nodal stress field, i.e. the weak form of `div S`.
pub(crate) fn stress_load(grid: &Grid, weights: &[f64], map: &InteriorMap, sxx: &[f64], syy: &[f64], sxy: &[f64], out: &mut [f64]) {
    let n = grid.node_count();
    let wxx: Vec<f64> = (0..n).map(|k| -weights[k] * sxx[k]).collect();
    let wyy: Vec<f64> = (0..n).map(|k| -weights[k] * syy[k]).collect();
    let wxy: Vec<f64> = (0..n).map(|k| -weights[k] * sxy[k]).collect();
    let (mut o1, mut o2) = (vec![0.0; n], vec![0.0; n]);
    apply_strain_transpose(grid, &wxx, &wyy, &wxy, &mut o1, &mut o2);
    map.gather(&o1, &o2, out);
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::dot;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn dense_check<A: SymOperator>(op: &A, rng: &mut ChaCha8Rng) {
        let n = op.len();
        let mut diag = vec![0.0; n];
        op.diagonal(&mut diag);
        let mut e = vec![0.0; n];
        let mut col = vec![0.0; n];
        for i in (0..n).step_by(7) {
            e[i] = 1.0;
            op.apply(&e, &mut col);
            e[i] = 0.0;
            assert!((col[i] - diag[i]).abs() < 1e-9 * diag[i].abs().max(1.0), "diag {i}: {} vs {}", col[i], diag[i]);
        }
        for _ in 0..20 {
            let a: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            let b: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            let (mut aa, mut ab) = (vec![0.0; n], vec![0.0; n]);
            op.apply(&a, &mut aa);
            op.apply(&b, &mut ab);
            let (x, y) = (dot(&aa, &b), dot(&a, &ab));
            assert!((x - y).abs() < 1e-10 * x.abs().max(1.0), "{x} vs {y}");
            assert!(dot(&aa, &a) > 0.0);
        }
    }

    #[test]
    fn scalar_operators_symmetric_with_exact_diagonal() {
        let g = Grid::new(6, 7, 1.0, 1.3).unwrap();
        let w = g.weights();
        let react: Vec<f64> = (0..g.node_count()).map(|k| 1.0 + (k % 3) as f64).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for robin in [false, true] {
            dense_check(&ScalarOp { grid: &g, weights: &w, tau: 0.1, robin, reaction: None }, &mut rng);
            dense_check(&ScalarOp { grid: &g, weights: &w, tau: 0.1, robin, reaction: Some(&react) }, &mut rng);
        }
    }

    #[test]
    fn elastic_operator_spd_with_exact_diagonal() {
        let g = Grid::new(7, 6, 1.0, 1.0).unwrap();
        let w = g.weights();
        let map = InteriorMap::new(&g);
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let mu: Vec<f64> = (0..g.node_count()).map(|_| rng.random_range(0.5..2.0)).collect();
        let lam: Vec<f64> = (0..g.node_count()).map(|_| rng.random_range(0.0..2.0)).collect();
        let op = ElasticOp::new(&g, &w, &map, mu, lam);
        let n = op.len();
        let mut diag = vec![0.0; n];
        op.diagonal(&mut diag);
        let mut e = vec![0.0; n];
        let mut col = vec![0.0; n];
        for i in 0..n {
            e[i] = 1.0;
            op.apply(&e, &mut col);
            e[i] = 0.0;
            assert!((col[i] - diag[i]).abs() < 1e-9 * diag[i], "dof {i}");
        }
        dense_check(&op, &mut rng);
    }
}
